import os
import logging
from datetime import datetime
from typing import Optional
import structlog


class CustomLogger:
    """
    JSON structured logging for the toolkit.

    Console output is always on; a timestamped file under ``log_dir`` is added
    unless the directory is the empty string (``RELCP_LOG_DIR=""``).
    """

    _configured = False

    def __init__(self, log_dir: Optional[str] = None, level: Optional[str] = None):
        if log_dir is None:
            log_dir = os.getenv("RELCP_LOG_DIR", "logs")
        self.level = getattr(logging, (level or os.getenv("RELCP_LOG_LEVEL", "INFO")).upper(), logging.INFO)

        self.log_file_path: Optional[str] = None
        if log_dir:
            self.logs_dir = os.path.join(os.getcwd(), log_dir)
            os.makedirs(self.logs_dir, exist_ok=True)
            log_file = f"{datetime.now().strftime('%m_%d_%Y_%H_%M_%S')}.log"
            self.log_file_path = os.path.join(self.logs_dir, log_file)

    def _configure(self) -> None:
        handlers: list[logging.Handler] = []

        console_handler = logging.StreamHandler()
        console_handler.setLevel(self.level)
        console_handler.setFormatter(logging.Formatter("%(message)s"))
        handlers.append(console_handler)

        if self.log_file_path:
            file_handler = logging.FileHandler(self.log_file_path)
            file_handler.setLevel(self.level)
            file_handler.setFormatter(logging.Formatter("%(message)s"))  # raw JSON lines
            handlers.append(file_handler)

        logging.basicConfig(level=self.level, format="%(message)s", handlers=handlers)

        structlog.configure(
            processors=[
                structlog.stdlib.filter_by_level,
                structlog.processors.TimeStamper(fmt="iso", utc=True, key="timestamp"),
                structlog.processors.add_log_level,
                structlog.processors.EventRenamer(to="event"),
                structlog.processors.JSONRenderer(sort_keys=True),
            ],
            logger_factory=structlog.stdlib.LoggerFactory(),
            cache_logger_on_first_use=True,
        )
        CustomLogger._configured = True

    def get_logger(self, name=__file__):
        logger_name = os.path.basename(name)
        if not CustomLogger._configured:
            self._configure()
        return structlog.get_logger(logger_name)

    def set_level(self, level: str) -> None:
        """Change the level of the root logger after configuration (used by the CLI)."""
        self.level = getattr(logging, level.upper(), logging.INFO)
        root = logging.getLogger()
        root.setLevel(self.level)
        for handler in root.handlers:
            handler.setLevel(self.level)
