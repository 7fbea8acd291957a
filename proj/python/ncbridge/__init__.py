"""Negative control estimation of causal effects under unmeasured confounding."""

from ._ncbridge import *  # noqa: F401,F403
from ._ncbridge import __version__  # noqa: F401
