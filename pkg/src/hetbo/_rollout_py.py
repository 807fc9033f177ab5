"""Vectorised NumPy implementation of the batched rollout-cost kernel.

This is the fallback used when the compiled extension is unavailable; the
compiled kernel in ``_rollout_ext.pyx`` follows the same arithmetic.
"""
import numpy as np

from .env import DERIVATIVES, PLANT_NAMES, rk4


def _reward(plant_id, s):
    if plant_id == 0:
        th = s[:, 0]
        w = s[:, 1]
        return -(50.0 * (np.cos(th) - 1.0) ** 2 + w * w) + 4000.0
    if plant_id == 1:
        return -(s[:, 0] ** 2 + 500.0 * np.sin(s[:, 2]) ** 2 + s[:, 1] ** 2 + s[:, 3] ** 2)
    return np.cos(s[:, 0]) - np.cos(s[:, 0] + s[:, 1])


def rollout_costs(plant_id, params, dt, action_low, action_high, reward_upper,
                  penalty, s0, controls):
    """Cost of each of the ``M`` control sequences in ``controls`` (M x T).

    Running cost is charged on the intermediate states s_1..s_{T-1}, the
    terminal cost on s_T; both are ``reward_upper - reward(s)``.  Rollouts that
    leave the finite reals cost ``penalty``.
    """
    controls = np.asarray(controls, dtype=np.float64)
    m, horizon = controls.shape
    deriv = DERIVATIVES[PLANT_NAMES[plant_id]]
    p = np.asarray(params, dtype=np.float64)
    s = np.broadcast_to(np.asarray(s0, dtype=np.float64), (m, len(s0))).copy()
    acts = np.clip(controls, action_low, action_high)
    total = np.zeros(m)
    with np.errstate(all="ignore"):
        for t in range(horizon):
            s = rk4(deriv, p, s, acts[:, t], dt)
            total += reward_upper - _reward(plant_id, s)
    ok = np.isfinite(total)
    total[~ok] = penalty
    return total
