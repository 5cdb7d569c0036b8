"""Class balancing, desk-scale training and spectral diagnostics for group robustness."""

from ._core import *  # noqa: F401,F403
from ._core import Error, ConfigError, DivergenceError, LabelRangeError  # noqa: F401
