import logging
import sys
from contextlib import contextmanager

import numpy as np
import structlog

from superpose.config.settings import settings

_PACKAGE = "superpose."


def _plain_values(_, __, event_dict):
    """numpy scalars and arrays in event fields become JSON-ready Python values."""
    for key, value in event_dict.items():
        if isinstance(value, np.generic):
            event_dict[key] = value.item()
        elif isinstance(value, np.ndarray):
            event_dict[key] = value.tolist()
    return event_dict


def setup_logging(level: str | None = None):
    level = (level or settings.log_level).upper()
    structlog.configure(
        processors=[
            structlog.contextvars.merge_contextvars,
            structlog.processors.add_log_level,
            _plain_values,
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.dev.ConsoleRenderer()
            if level == "DEBUG"
            else structlog.processors.JSONRenderer(),
        ],
        wrapper_class=structlog.make_filtering_bound_logger(
            logging.getLevelName(level)
        ),
        context_class=dict,
        logger_factory=structlog.PrintLoggerFactory(file=sys.stderr),
        cache_logger_on_first_use=True,
    )


def get_logger(name: str):
    """Lazy logger whose events carry ``component``, the module path inside the package."""
    return structlog.get_logger(component=name.removeprefix(_PACKAGE))


def bind_run(command: str, **values):
    """Attach the subcommand and run identifiers to every event until the next bind."""
    structlog.contextvars.clear_contextvars()
    structlog.contextvars.bind_contextvars(command=command, **{k: v for k, v in values.items() if v is not None})


@contextmanager
def fit_stage(stage: str, n_sources: int):
    """Tag events with the GA stage (preliminary or final) and its source count."""
    with structlog.contextvars.bound_contextvars(stage=stage, n_sources=int(n_sources)):
        yield
