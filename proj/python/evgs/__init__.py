"""Event-based gaussian splatting: simulate, train, render, evaluate."""

from ._native import *  # noqa: F401,F403
from ._native import cli, canonical_config  # noqa: F401
