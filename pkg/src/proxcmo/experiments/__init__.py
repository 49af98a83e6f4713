"""Experiment builders and runners: sparse recovery, the Shidoku puzzle, and
set-membership system identification."""

from . import lasso, shidoku, sysid

__all__ = ["lasso", "shidoku", "sysid"]
