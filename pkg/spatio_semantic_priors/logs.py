import logging
import sys
import typing


class _LessThanFilter(logging.Filter):
    """Let through only records strictly below the given level."""

    def __init__(self, exclusive_maximum: int, name: str = ""):
        super().__init__(name)
        self.max_level = exclusive_maximum

    def filter(self, record):
        # non-zero return means we log this message
        return 1 if record.levelno < self.max_level else 0


def init_logger(
    name: str = "spatio_semantic_priors", level: typing.Union[int, str] = logging.INFO
) -> logging.Logger:
    """Initialise stdout/stderr-logger.

    The logger is configured to write messages with level < WARNING to stdout and
    any higher levels to stderr.  Calling it twice does not duplicate handlers.

    Args:
        name: Name of the application (added to each message).
        level: Minimal level of the messages that are emitted.
    """
    formatter = logging.Formatter(
        "[{} %(levelname)s %(asctime)s] %(message)s".format(name)
    )

    logger = logging.getLogger("spatio_semantic_priors")
    logger.setLevel(level)
    for handler in list(logger.handlers):
        logger.removeHandler(handler)

    handler_stdout = logging.StreamHandler(sys.stdout)
    handler_stdout.setLevel(logging.DEBUG)
    handler_stdout.addFilter(_LessThanFilter(logging.WARNING))
    handler_stdout.setFormatter(formatter)
    logger.addHandler(handler_stdout)

    handler_stderr = logging.StreamHandler(sys.stderr)
    handler_stderr.setLevel(logging.WARNING)
    handler_stderr.setFormatter(formatter)
    logger.addHandler(handler_stderr)

    return logger
