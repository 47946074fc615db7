import logging
import sys

from app import create_app


def main(argv=None):
    """Run one command and return its exit code"""
    app = create_app()
    logging.getLogger(__name__).info('Rayleigh-Taylor action solver startup')
    return app.run(argv)


if __name__ == '__main__':
    sys.exit(main())
