import logging
import sys
from pathlib import Path

from loguru import logger

from .config import config

CONSOLE_FORMAT = (
    "<green>[{time:YYYY-MM-DD HH:mm:ss}]</green> | "
    "<level>{level: <8}</level> | "
    "<magenta>{extra[command]}</magenta> | "
    "<cyan>{name}</cyan>:<cyan>{function}</cyan> - <level>{message}</level>"
)
FILE_FORMAT = (
    "[{time:YYYY-MM-DD HH:mm:ss}] | {level} | {extra[command]} | "
    "{name}:{function}:{line} | {message}"
)

# Libraries that log through the standard module
STDLIB_LOGGERS = ("PIL", "asyncio")


def log_file_path() -> Path:
    """Log file under LOG_DIR, or under logs/ at the repository root."""
    if config.LOG_DIR:
        log_dir = Path(config.LOG_DIR)
    else:
        log_dir = Path(__file__).parents[3] / "logs"
    log_dir.mkdir(parents=True, exist_ok=True)
    return log_dir / config.LOG_FILE


def configure_loguru(log_file: Path, level: str) -> None:
    """Stderr sink for the operator, rotating file sink for the record.
    Stdout stays free for command output."""
    logger.remove()
    logger.configure(extra={"command": "-"})
    logger.add(
        sys.stderr,
        format=CONSOLE_FORMAT,
        level=level,
        colorize=True,
        backtrace=True,
        diagnose=False,
    )
    logger.add(
        log_file,
        rotation="10 MB",
        retention="10 days",
        compression="zip",
        format=FILE_FORMAT,
        level=level,
        backtrace=True,
        diagnose=False,
    )


class InterceptHandler(logging.Handler):
    """Redirect standard logging records to Loguru, attributed to the
    caller that emitted them."""

    def emit(self, record: logging.LogRecord) -> None:
        try:
            level: str | int = logger.level(record.levelname).name
        except ValueError:
            level = record.levelno

        frame, depth = logging.currentframe(), 2
        while frame and frame.f_code.co_filename == logging.__file__:
            frame = frame.f_back
            depth += 1
        logger.opt(depth=depth, exception=record.exc_info).log(
            level, record.getMessage()
        )


def redirect_standard_logs(level: str) -> None:
    logging.basicConfig(handlers=[InterceptHandler()], level=logging.INFO)
    for name in STDLIB_LOGGERS:
        std_logger = logging.getLogger(name)
        std_logger.handlers = [InterceptHandler()]
        std_logger.setLevel(
            logging.getLevelNamesMapping().get(level, logging.DEBUG)
        )
        std_logger.propagate = False


def setup_logging(level: str | None = None) -> None:
    """Set up logging for one command run. `level` overrides LOG_LEVEL."""
    level = (level or config.LOG_LEVEL).upper()
    configure_loguru(log_file_path(), level)
    redirect_standard_logs(level)
