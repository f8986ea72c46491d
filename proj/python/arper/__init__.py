"""Continual learning engine for semantically conditioned NLG."""

from ._core import *  # noqa: F401,F403
