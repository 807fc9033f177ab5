"""Pick the rollout kernel at import time.

The compiled extension is used when it was built; setting
``HETBO_PURE_PYTHON=1`` forces the NumPy fallback.
"""
import logging
import os

from . import _rollout_py

log = logging.getLogger(__name__)

_force_py = os.environ.get("HETBO_PURE_PYTHON", "").strip() not in ("", "0")

if _force_py:
    rollout_costs = _rollout_py.rollout_costs
    BACKEND = "python"
else:
    try:
        from ._rollout_ext import rollout_costs
        BACKEND = "compiled"
    except ImportError:  # extension not built
        log.debug("compiled rollout kernel unavailable, using NumPy fallback")
        rollout_costs = _rollout_py.rollout_costs
        BACKEND = "python"

__all__ = ["rollout_costs", "BACKEND"]
