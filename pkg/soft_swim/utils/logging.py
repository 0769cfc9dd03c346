import logging
import time
from enum import Enum
from functools import wraps
from typing import TYPE_CHECKING, Any, Callable, ParamSpec, TypeVar

if TYPE_CHECKING:
    from logging import _Level


class Level(str, Enum):
    CRITICAL = "CRITICAL"
    ERROR = "ERROR"
    WARNING = "WARNING"
    INFO = "INFO"
    DEBUG = "DEBUG"
    NOTSET = "NOTSET"


P = ParamSpec("P")
R = TypeVar("R")


def _brief(value: Any) -> str:
    """Short rendering of a traced argument, arrays by shape only."""
    if (shape := getattr(value, "shape", None)) is not None:
        return f"<{type(value).__name__} {tuple(shape)}>"
    text = repr(value)
    return text if len(text) <= 80 else f"{text[:77]}..."


class _Logger(logging.Logger):
    FMT = "%(asctime)s %(filename)s:%(lineno)d %(levelname)s %(message)s"  # noqa: E501
    # Chatty third-party loggers share our handlers but never go below INFO
    MUTED_LOGGER_NAMES = ("matplotlib", "PIL", "asyncio")
    MUTED_LOGGERS = list(map(logging.getLogger, MUTED_LOGGER_NAMES))

    def __init__(self, level: int | str = logging.INFO) -> None:
        """Instantiates the package logger.

        Args:
            level: Verbosity of the logger
        """
        import coloredlogs

        assert __package__
        super().__init__(name=__package__.split(".")[0])
        coloredlogs.install(logger=self, level=level, fmt=self.FMT)
        self._mute()

    def _mute(self) -> None:
        for logger in self.MUTED_LOGGERS:
            logger.handlers = self.handlers
            logger.propagate = False
            logger.setLevel(max(logging.INFO, self.level))

    def setLevel(self, level: "_Level") -> None:
        super().setLevel(level)
        self._mute()

    def worker(self) -> None:
        """Quiets a sweep worker process down to warnings."""
        self.setLevel(logging.WARNING)

    @staticmethod
    def func(
        level: Level = Level.DEBUG,
    ) -> Callable[[Callable[P, R]], Callable[P, R]]:
        """Traces calls and their wall time at the given level."""

        def _outer(
            func: Callable[P, R],
        ) -> Callable[P, R]:
            @wraps(func)
            def _wrapper(*args: P.args, **kwargs: P.kwargs) -> R:
                method = getattr(Logger, level.value.lower(), None)

                msg = f"There is no {method} method in class Logger"
                assert method, msg

                name = func.__qualname__
                if Logger.isEnabledFor(logging.getLevelName(level.value)):
                    shown = [_brief(arg) for arg in args]
                    shown += [f"{k}={_brief(v)}" for k, v in kwargs.items()]
                    method(f"{name}({', '.join(shown)})")

                start = time.perf_counter()
                result = func(*args, **kwargs)
                method(f"{name} took {time.perf_counter() - start:.3g} s")
                return result

            return _wrapper

        return _outer


Logger = _Logger()
