"""Localization distillation for bounding-box regression on a toy detector."""

from ._locdistill import *  # noqa: F401,F403
from ._locdistill import __doc__  # noqa: F401
