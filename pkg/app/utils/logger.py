import logging
import logging.handlers
import os
from datetime import datetime
from functools import wraps

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
MAX_BYTES = 10485760  # 10MB
BACKUP_COUNT = 5


class LoggerConfig:
    def __init__(self, log_dir='logs', level='INFO'):
        """
        Configure logging for solver runs

        :param log_dir: directory for the log files
        :param level: level of the root logger and the console
        """
        self.log_dir = log_dir
        self.level = getattr(logging, str(level).upper(), logging.INFO)
        self._ensure_log_directory()
        self._configure_logging()

    def _ensure_log_directory(self):
        """Create the log directory if it does not exist"""
        if not os.path.exists(self.log_dir):
            os.makedirs(self.log_dir)

    def _rotating_handler(self, filename, level, formatter):
        handler = logging.handlers.RotatingFileHandler(
            os.path.join(self.log_dir, filename),
            maxBytes=MAX_BYTES,
            backupCount=BACKUP_COUNT
        )
        handler.setLevel(level)
        handler.setFormatter(formatter)
        return handler

    def _configure_logging(self):
        """Attach handlers and the shared format"""
        formatter = logging.Formatter(LOG_FORMAT)

        root_logger = logging.getLogger()
        root_logger.setLevel(self.level)
        root_logger.addHandler(self._rotating_handler('error.log', logging.ERROR, formatter))
        root_logger.addHandler(self._rotating_handler('info.log', logging.INFO, formatter))

        console_handler = logging.StreamHandler()
        console_handler.setLevel(self.level)
        console_handler.setFormatter(formatter)
        root_logger.addHandler(console_handler)

        # Newton / continuation summaries
        solver_logger = logging.getLogger('solver')
        solver_logger.addHandler(self._rotating_handler('solver.log', logging.INFO, formatter))
        solver_logger.setLevel(logging.INFO)

        # Condition checks and certificate batteries
        verification_logger = logging.getLogger('verification')
        verification_logger.addHandler(self._rotating_handler('verification.log', logging.INFO, formatter))
        verification_logger.setLevel(logging.INFO)


def log_solve(func):
    """Log the duration and outcome of a solve"""
    @wraps(func)
    def wrapper(*args, **kwargs):
        logger = logging.getLogger('solver')
        start_time = datetime.now()

        try:
            result = func(*args, **kwargs)
            duration = (datetime.now() - start_time).total_seconds()

            logger.info(
                f"Solve - Function: {func.__name__} - "
                f"Duration: {duration:.2f}s - Converged"
            )

            return result

        except Exception as e:
            duration = (datetime.now() - start_time).total_seconds()
            logger.error(
                f"Solve - Function: {func.__name__} - "
                f"Duration: {duration:.2f}s - Error: {str(e)}"
            )
            raise

    return wrapper


def log_check(func):
    """Log the duration and verdict of a check returning an is_valid/errors report"""
    @wraps(func)
    def wrapper(*args, **kwargs):
        logger = logging.getLogger('verification')
        start_time = datetime.now()

        try:
            result = func(*args, **kwargs)
            duration = (datetime.now() - start_time).total_seconds()

            is_valid = result[0] if isinstance(result, tuple) else result.get('is_valid')
            errors = result[1] if isinstance(result, tuple) else result.get('errors', [])

            log_message = (
                f"Check {func.__name__} - Duration: {duration:.2f}s - "
                f"Valid: {is_valid}"
            )

            if not is_valid:
                log_message += f" - Errors: {', '.join(errors)}"

            logger.info(log_message)

            return result

        except Exception as e:
            duration = (datetime.now() - start_time).total_seconds()
            logger.error(
                f"Check {func.__name__} - Duration: {duration:.2f}s - "
                f"Error: {str(e)}"
            )
            raise

    return wrapper
