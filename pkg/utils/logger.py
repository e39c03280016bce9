"""
Logging utilities for the SimDiff forecaster.
Provides structured logging for commands, training milestones and errors.
"""
import os
import json
import time
import logging
import logging.handlers
from datetime import datetime, timezone
from functools import wraps


class RunLogFormatter(logging.Formatter):
    """Formatter that renders records carrying ``run_data`` as JSON objects."""

    def format(self, record):
        """Format log record with additional run context."""
        msg = super().format(record)

        if hasattr(record, 'run_data'):
            formatted_data = {
                'timestamp': datetime.now(timezone.utc).isoformat(),
                'level': record.levelname,
                'message': record.getMessage(),
                'module': record.module,
                **record.run_data
            }
            return json.dumps(formatted_data, default=str)

        return msg


class RunLogger:
    """Installs the file and console handlers for run and error logs."""

    def __init__(self, settings=None):
        self.logger = None
        self.error_logger = None
        if settings is not None:
            self.setup_loggers(settings)

    def setup_loggers(self, settings):
        """Set up logging configuration."""
        log_dir = getattr(settings, 'LOG_DIR', './logs')
        max_bytes = getattr(settings, 'LOG_MAX_BYTES', 10 * 1024 * 1024)
        backup_count = getattr(settings, 'LOG_BACKUP_COUNT', 5)
        os.makedirs(log_dir, exist_ok=True)

        self.logger = logging.getLogger('run_logger')
        self.logger.setLevel(logging.INFO)
        self.logger.propagate = False
        self.logger.handlers.clear()

        file_handler = logging.handlers.RotatingFileHandler(
            os.path.join(log_dir, 'runs.log'),
            maxBytes=max_bytes,
            backupCount=backup_count
        )
        file_handler.setLevel(logging.INFO)
        file_handler.setFormatter(RunLogFormatter())
        self.logger.addHandler(file_handler)

        if getattr(settings, 'LOG_JSON_CONSOLE', False):
            console_handler = logging.StreamHandler()
            console_handler.setLevel(logging.INFO)
            console_handler.setFormatter(RunLogFormatter())
            self.logger.addHandler(console_handler)

        self.error_logger = logging.getLogger('error_logger')
        self.error_logger.setLevel(logging.ERROR)
        self.error_logger.propagate = False
        self.error_logger.handlers.clear()

        error_file_handler = logging.handlers.RotatingFileHandler(
            os.path.join(log_dir, 'errors.log'),
            maxBytes=max_bytes,
            backupCount=backup_count
        )
        error_file_handler.setLevel(logging.ERROR)
        error_file_handler.setFormatter(RunLogFormatter())
        self.error_logger.addHandler(error_file_handler)

    def close(self):
        """Detach and close the handlers installed by this instance."""
        for lg in (self.logger, self.error_logger):
            if lg is None:
                continue
            for handler in list(lg.handlers):
                handler.close()
                lg.removeHandler(handler)


def log_command(command_name):
    """Decorator that times a CLI command and logs its outcome."""
    def decorator(f):
        @wraps(f)
        def wrapper(*args, **kwargs):
            start_time = time.time()
            logger = logging.getLogger('run_logger')

            try:
                result = f(*args, **kwargs)
                duration = time.time() - start_time

                logger.info(
                    f"Command {command_name} completed successfully in {duration:.3f}s",
                    extra={'run_data': {
                        'command': command_name,
                        'duration_s': round(duration, 3),
                        'status': 'success',
                        'type': 'command_execution'
                    }}
                )
                return result

            except Exception as e:
                duration = time.time() - start_time
                error_logger = logging.getLogger('error_logger')

                error_logger.error(
                    f"Command {command_name} failed after {duration:.3f}s: {e}",
                    extra={'run_data': {
                        'command': command_name,
                        'duration_s': round(duration, 3),
                        'status': 'error',
                        'error_message': str(e),
                        'error_type': type(e).__name__,
                        'exit_code': getattr(e, 'exit_code', 1),
                        'type': 'command_execution'
                    }},
                    exc_info=True
                )
                raise

        return wrapper
    return decorator


def log_custom_event(event_type, message, data=None):
    """Log a custom event with structured data."""
    logger = logging.getLogger('run_logger')
    record = logger.makeRecord(
        logger.name,
        logging.INFO,
        __file__,
        0,
        message,
        (),
        None
    )
    record.run_data = {
        'event_type': event_type,
        'type': 'custom_event',
        **(data or {})
    }
    logger.handle(record)
