import logging

from rich.console import Console
from rich.logging import RichHandler


def setup_logging(level: str = "INFO", quiet: bool = False) -> None:
    """Log to standard error; machine output only ever goes to files."""
    handler = RichHandler(
        console=Console(stderr=True),
        show_path=False,
        rich_tracebacks=True,
    )
    logging.basicConfig(
        level=logging.WARNING if quiet else level.upper(),
        format="%(message)s",
        datefmt="[%X]",
        handlers=[handler],
        force=True,
    )
