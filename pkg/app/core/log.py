from __future__ import annotations

import logging

_FORMAT = "%(name)s:%(levelname)s:%(message)s"


def configure_logging(level: str = "INFO") -> None:
    """Root handler for the CLI; library modules only call getLogger(__name__)."""
    root = logging.getLogger()
    if not root.handlers:
        logging.basicConfig(format=_FORMAT)
    logging.getLogger("app").setLevel(level.upper())
