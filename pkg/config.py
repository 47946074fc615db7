import logging
import os
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()


def _int_env(name, default):
    raw = os.getenv(name, default)
    try:
        return int(raw)
    except (TypeError, ValueError):
        return raw


class Config:
    # Logging Configuration
    LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO')
    LOG_DIR = os.getenv('LOG_DIR', 'logs')

    # Run Configuration
    OUTPUT_DIR = os.getenv('OUTPUT_DIR', 'results')
    RUN_CONFIG = os.getenv('RUN_CONFIG')

    # Sweeps and sampling
    THREADS = _int_env('THREADS', '1')
    SEED = _int_env('SEED', '0')

    @classmethod
    def validate_config(cls):
        """
        Validate critical configuration parameters
        """
        errors = []

        if not isinstance(logging.getLevelName(str(cls.LOG_LEVEL).upper()), int):
            errors.append(f"LOG_LEVEL '{cls.LOG_LEVEL}' is not a logging level")

        if not isinstance(cls.THREADS, int) or cls.THREADS < 1:
            errors.append(f"THREADS must be a positive integer, got {cls.THREADS!r}")

        if not isinstance(cls.SEED, int) or not 0 <= cls.SEED < 2 ** 64:
            errors.append(f"SEED must be an unsigned 64-bit integer, got {cls.SEED!r}")

        if cls.RUN_CONFIG and not os.path.isfile(cls.RUN_CONFIG):
            errors.append(f"RUN_CONFIG file '{cls.RUN_CONFIG}' does not exist")

        if errors:
            raise ValueError(f"Configuration errors: {', '.join(errors)}")

        return True


# Validate configuration on import
Config.validate_config()
