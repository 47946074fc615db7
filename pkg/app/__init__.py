from config import Config
from app.utils.logger import LoggerConfig


def create_app(config_class=Config, testing=False):
    """Create and configure the command application"""

    # Configure logging
    if not testing:
        LoggerConfig(config_class.LOG_DIR, config_class.LOG_LEVEL)

    from app.cli import CommandApp
    return CommandApp(config_class)
