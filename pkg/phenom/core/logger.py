"""
Logging for phenom runs.

Every command logs to three places: the console, a rotating history file
shared by all runs (``<LOG_DIR>/phenom.log``) and a ``run.log`` inside the
run's output directory, so each output directory carries the record of
how it was produced. Training code logs through ``TrainingLogAdapter``,
which stamps every line with the current epoch and step.
"""

import logging
import logging.handlers
import sys
from pathlib import Path
from typing import Any, MutableMapping, Optional, Tuple

from phenom.core.exceptions import InvalidConfigError

RUN_LOG_NAME = "run.log"
HISTORY_LOG_NAME = "phenom.log"

RUN_FORMAT = "%(asctime)s %(levelname)-8s %(name)s:%(lineno)d  %(message)s"
CONSOLE_FORMAT = "%(asctime)s %(levelname)-8s %(message)s"


class TrainingLogAdapter(logging.LoggerAdapter):
    """Prefixes messages with ``[epoch E step S]`` once a position is set."""

    def __init__(self, logger: logging.Logger):
        super().__init__(logger, {})
        self.epoch: Optional[int] = None
        self.step: Optional[int] = None

    def at(self, epoch: int, step: Optional[int] = None) -> "TrainingLogAdapter":
        self.epoch, self.step = epoch, step
        return self

    def process(self, msg: Any, kwargs: MutableMapping[str, Any]) -> Tuple[Any, MutableMapping[str, Any]]:
        if self.epoch is None:
            return msg, kwargs
        where = f"epoch {self.epoch}" if self.step is None else f"epoch {self.epoch} step {self.step}"
        return f"[{where}] {msg}", kwargs


class PhenomLogger:
    """
    Owns the handlers of the ``phenom`` logger; module code only ever asks
    for children through ``get_logger``.
    """

    _loggers: dict[str, logging.Logger] = {}
    _log_dir: Path = Path(__file__).resolve().parent.parent.parent / "logs"

    @staticmethod
    def _level(log_level: str) -> int:
        level = logging.getLevelName(log_level.upper())
        if not isinstance(level, int):
            raise InvalidConfigError(f"Unknown log level {log_level!r}")
        return level

    @classmethod
    def setup_logging(
        cls,
        log_level: str = "INFO",
        log_dir: Optional[Path] = None,
        run_dir: Optional[Path] = None,
    ) -> Optional[Path]:
        """
        Configures the package root logger for one run. Calling it again
        replaces the previous run's handlers.

        Args:
            log_level: Level name for every handler
            log_dir: Directory of the shared rotating history file
            run_dir: Run output directory; ``run.log`` there is appended to

        Returns:
            Path of the run log, if one was opened

        Raises:
            InvalidConfigError: unknown level name
        """
        level = cls._level(log_level)
        cls.shutdown()

        root_logger = logging.getLogger("phenom")
        root_logger.setLevel(level)
        root_logger.propagate = False
        run_formatter = logging.Formatter(RUN_FORMAT, datefmt="%Y-%m-%dT%H:%M:%S")

        log_dir = Path(log_dir) if log_dir else cls._log_dir
        log_dir.mkdir(parents=True, exist_ok=True)
        # 10MB per file, 5 files of history
        history = logging.handlers.RotatingFileHandler(
            log_dir / HISTORY_LOG_NAME, maxBytes=10 * 1024 * 1024, backupCount=5, encoding="utf-8"
        )
        history.setFormatter(run_formatter)
        root_logger.addHandler(history)

        console = logging.StreamHandler(sys.stdout)
        console.setFormatter(logging.Formatter(CONSOLE_FORMAT, datefmt="%H:%M:%S"))
        root_logger.addHandler(console)

        run_log = None
        if run_dir is not None:
            run_log = Path(run_dir) / RUN_LOG_NAME
            run_log.parent.mkdir(parents=True, exist_ok=True)
            handler = logging.FileHandler(run_log, mode="a", encoding="utf-8")
            handler.setFormatter(run_formatter)
            root_logger.addHandler(handler)
        return run_log

    @classmethod
    def shutdown(cls) -> None:
        """Flushes and detaches every handler of the package logger."""
        root_logger = logging.getLogger("phenom")
        for handler in list(root_logger.handlers):
            root_logger.removeHandler(handler)
            handler.close()

    @classmethod
    def get_logger(cls, name: str) -> logging.Logger:
        if name not in cls._loggers:
            logger_name = name if name.startswith("phenom") else f"phenom.{name}"
            cls._loggers[name] = logging.getLogger(logger_name)
        return cls._loggers[name]

    @classmethod
    def training_logger(cls, name: str) -> TrainingLogAdapter:
        return TrainingLogAdapter(cls.get_logger(name))
