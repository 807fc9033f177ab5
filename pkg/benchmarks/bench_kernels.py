"""Time the compiled rollout kernel against the NumPy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]

Both kernels score the same (M, T) batch of action sequences; the table
reports the best wall time per call and the speed-up.
"""
import argparse
import timeit

import numpy as np

from hetbo import _rollout_py, env, mppi
from hetbo.env import make_plant

try:
    from hetbo import _rollout_ext
except ImportError:
    _rollout_ext = None

CASES = (("pendulum", 10, 10), ("cartpole", 10, 100), ("acrobot", 8, 30), ("acrobot", 8, 300))


def kernel_args(name, horizon, rollouts, rng):
    p = make_plant(name)
    s0 = env.sample_initial_state(p, rng)
    U = np.ascontiguousarray(rng.normal(0.0, 1.0, (rollouts, horizon)))
    return (p.plant_id, p.param_vector(), p.dt, p.action_low, p.action_high, p.reward_upper,
            mppi.DIVERGENCE_PENALTY, s0, U)


def best_time(fn, args, repeat):
    number = max(1, int(0.05 / max(timeit.timeit(lambda: fn(*args), number=1), 1e-7)))
    return min(timeit.repeat(lambda: fn(*args), number=number, repeat=repeat)) / number


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"{'plant':<9} {'T':>3} {'M':>4} {'python [us]':>12} {'compiled [us]':>14} {'speed-up':>9}")
    for name, T, M in CASES:
        a = kernel_args(name, T, M, rng)
        t_py = best_time(_rollout_py.rollout_costs, a, args.repeat)
        if _rollout_ext is None:
            print(f"{name:<9} {T:>3} {M:>4} {t_py * 1e6:>12.1f} {'n/a':>14} {'n/a':>9}")
            continue
        np.testing.assert_allclose(_rollout_ext.rollout_costs(*a), _rollout_py.rollout_costs(*a), rtol=1e-12)
        t_c = best_time(_rollout_ext.rollout_costs, a, args.repeat)
        print(f"{name:<9} {T:>3} {M:>4} {t_py * 1e6:>12.1f} {t_c * 1e6:>14.1f} {t_py / t_c:>8.1f}x")


if __name__ == "__main__":
    main()
