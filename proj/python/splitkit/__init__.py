"""Difference-of-convex decomposition and split attribution for ReLU networks."""

from _splitkit import *  # noqa: F401,F403
from _splitkit import __doc__  # noqa: F401
