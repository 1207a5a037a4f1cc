"""Compare the numba kernels with their pure numpy/Python counterparts.

    python benchmarks/bench_accel.py [--repeat N]

The numba timings exclude compilation (one warm-up call first).  Results are
also checked for agreement, so a speedup is never reported for wrong output.
"""

import argparse
import timeit

import numpy as np

from mfes import accel, cartpole as cp, lqr


def rollout_case():
    real = cp.default_real_params()
    gain = lqr.gain_from_theta(lqr.THETA_NOMINAL, lqr.linearize(cp.default_sim_params()))
    args = (real.packed(), gain, cp.CartPoleState(psi=0.1).as_array(), real.horizon, 10.0, 0.15, 0.7)

    def run(kernel):
        traj = np.zeros((real.horizon, 5))
        return kernel(*args, traj)[0]

    return run, accel.rollout_py, accel.rollout_nb


def fantasy_case(S=1000, R=200, C=200, F=20, seed=0):
    rng = np.random.default_rng(seed)
    args = (rng.normal(size=(S, R)), rng.normal(size=(S, C)), rng.normal(size=S),
            rng.normal(size=F), rng.normal(scale=0.2, size=(C, R)), rng.normal(size=C),
            rng.uniform(0.5, 1.5, C), rng.uniform(0.0, 0.1, C))

    def run(kernel):
        return kernel(*args)

    return run, accel.fantasy_entropy_np, accel.fantasy_entropy_nb


def bench(name, case, repeat):
    run, slow, fast = case
    ref = run(slow)
    got = run(fast)  # also compiles
    if not np.allclose(ref, got, rtol=0, atol=1e-9):
        raise SystemExit(f"{name}: numba and numpy results disagree")
    t_slow = min(timeit.repeat(lambda: run(slow), number=1, repeat=repeat))
    t_fast = min(timeit.repeat(lambda: run(fast), number=1, repeat=repeat))
    print(f"{name:<34} numpy {t_slow * 1e3:10.2f} ms   numba {t_fast * 1e3:9.3f} ms   "
          f"x{t_slow / t_fast:7.1f}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if not accel.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    bench("cart-pole rollout (1000 steps)", rollout_case(), args.repeat)
    bench("fantasy entropy (S=1000 R=C=200 F=20)", fantasy_case(), args.repeat)


if __name__ == "__main__":
    main()
