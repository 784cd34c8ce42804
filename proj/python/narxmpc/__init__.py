"""Data-driven NARX MPC toolkit: kernel surrogates, MPC without terminal
ingredients and exponential-stability certificates (two-tank benchmark)."""

from ._core import *  # noqa: F401,F403
from ._core import __version__  # noqa: F401
