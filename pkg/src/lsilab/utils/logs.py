import logging
from pathlib import Path
from typing import Optional, Union

from rich.console import Console
from rich.logging import RichHandler

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def configure_logging(
    level: Union[int, str] = logging.INFO, console: Optional[Console] = None
) -> None:
    """Route the package's loggers to a rich terminal handler."""
    root = logging.getLogger("lsilab")
    root.setLevel(level)
    for handler in list(root.handlers):
        if isinstance(handler, RichHandler):
            root.removeHandler(handler)
    root.addHandler(
        RichHandler(console=console, show_time=False, show_path=False, markup=False)
    )


def attach_log_file(path: Union[str, Path]) -> logging.FileHandler:
    """
    Add the sidecar run log. Timestamps are written here and nowhere else.
    The caller removes the handler with `detach_log_file` when the run ends.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(path, mode="w", encoding="utf-8")
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    logging.getLogger("lsilab").addHandler(handler)
    return handler


def detach_log_file(handler: logging.Handler) -> None:
    logging.getLogger("lsilab").removeHandler(handler)
    handler.close()
