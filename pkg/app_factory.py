"""
Application factory and initialization.
"""
import os
import logging
from typing import Optional

import click

from cli.commands import create_cli
from config import settings
from models.model_manager import CheckpointManager
from services.command_handlers import CommandHandlers
from services.forecast_service import ForecastService
from utils.logger import RunLogger


def setup_logging(app_settings):
    """Set up application logging."""
    logging.basicConfig(
        level=getattr(logging, str(app_settings.LOG_LEVEL).upper(), logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )

    # Quiet third-party loggers
    logging.getLogger('matplotlib').setLevel(logging.WARNING)
    logging.getLogger('numexpr').setLevel(logging.WARNING)


def create_app(config_name: Optional[str] = None, log_dir: Optional[str] = None) -> click.Group:
    """Application factory: configure logging, build services, return the CLI group."""

    # Determine configuration
    if config_name is None:
        config_name = os.environ.get('SIMDIFF_ENV', 'default')

    app_settings = settings.get(config_name, settings['default'])
    if log_dir is not None:
        app_settings = type('RunSettings', (app_settings,), {'LOG_DIR': log_dir})

    setup_logging(app_settings)
    run_logger = RunLogger(app_settings)

    # Initialize services
    checkpoint_manager = CheckpointManager()
    forecast_service = ForecastService(checkpoint_manager)
    handlers = CommandHandlers(forecast_service, checkpoint_manager)

    cli = create_cli(handlers)
    cli.run_logger = run_logger
    return cli
