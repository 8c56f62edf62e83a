# app/core/logging.py
import logging
import structlog
from app.core.config import settings


def setup_logging(level: str | None = None) -> None:
    """Configure structured logging for the application"""

    # Configure standard library logging
    logging.basicConfig(
        format="%(message)s",
        level=getattr(logging, (level or settings.log_level).upper()),
    )

    # Configure structlog
    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.stdlib.PositionalArgumentsFormatter(),
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            structlog.processors.UnicodeDecoder(),
            structlog.processors.JSONRenderer(sort_keys=True)
        ],
        wrapper_class=structlog.stdlib.BoundLogger,
        logger_factory=structlog.stdlib.LoggerFactory(),
        cache_logger_on_first_use=True,
    )


def get_logger(name: str) -> structlog.stdlib.BoundLogger:
    """Get a structured logger instance"""
    return structlog.get_logger(name)


class ExperimentLogger:
    """Specialized logger for experiment runs"""

    def __init__(self):
        self.logger = get_logger("experiment")

    def run_started(self, command: str, config_hash: str, precision_bits: int, threads: int) -> None:
        self.logger.info(
            "Run started",
            command=command,
            config_hash=config_hash,
            precision_bits=precision_bits,
            threads=threads
        )

    def stage_completed(self, stage: str, seconds: float) -> None:
        self.logger.info(
            "Stage completed",
            stage=stage,
            seconds=round(seconds, 4)
        )

    def resolution_warning(self, eps: float, floor: float, count: int = 1) -> None:
        self.logger.warning(
            "Interval below spectral resolution floor",
            eps=eps,
            floor=floor,
            count=count
        )

    def depth_escalated(self, operation: str, depth: int) -> None:
        self.logger.debug(
            "Recursion depth escalated",
            operation=operation,
            depth=depth
        )

    def overflow_guard(self, operation: str, k: int, log_scale: float) -> None:
        self.logger.info(
            "Switched to log-scaled accumulation",
            operation=operation,
            k=k,
            log_scale=round(log_scale, 3)
        )

    def run_failed(self, command: str, error: str, key: str | None, value: str | None, exit_code: int) -> None:
        self.logger.error(
            "Run failed",
            command=command,
            error=error,
            key=key,
            value=value,
            exit_code=exit_code
        )

    def run_completed(self, command: str, output_dir: str, wall_seconds: float) -> None:
        self.logger.info(
            "Run completed",
            command=command,
            output_dir=output_dir,
            wall_seconds=round(wall_seconds, 3)
        )

    def error(self, message: str, **kwargs) -> None:
        self.logger.error(message, **kwargs)

    def warning(self, message: str, **kwargs) -> None:
        self.logger.warning(message, **kwargs)
