"""Hot inner loops, compiled with numba when available.

Two kernels dominate runtime: the fixed-step RK4 cart-pole rollout and the
fantasy argmin-counting loop behind the entropy-search acquisition.  Each has
a numba path and a plain numpy/Python path.  The numba path is used unless
``MFES_DISABLE_NUMBA`` is set to a truthy value (or numba is missing).  Both
paths are importable by name so tests and ``benchmarks/`` can compare them.
"""

import math
import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

_flag = os.environ.get("MFES_DISABLE_NUMBA", "").strip().lower()
USE_NUMBA = HAVE_NUMBA and _flag in ("", "0", "false", "no")

# Cost weights on (s, psi, s_dot, psi_dot, u).
COST_WEIGHTS = np.array([1.0, 1.0, 1.0, 0.1, 10.0 ** -1.5])


def _build_rollout(jit):
    """Return ``(step, rollout)`` compiled with ``jit`` (identity for pure Python).

    ``p`` packs the plant as
    ``[cart_mass, pole_mass, pole_length, gravity, motor_gain, cart_friction, pole_damping, dt,
    disturbance_amplitude, disturbance_frequency]``.  The disturbance is a force on the
    cart, ``amplitude * sin(2 pi frequency t)``, held constant over each step.
    """

    @jit
    def deriv(p, s_dot, psi, psi_dot, u, fd):
        M, m, l, g, km, b, c = p[0], p[1], p[2], p[3], p[4], p[5], p[6]
        sp = math.sin(psi)
        cp = math.cos(psi)
        a11 = M + m
        a12 = m * l * cp
        a22 = m * l * l
        r1 = km * u + fd - b * s_dot + m * l * sp * psi_dot * psi_dot
        r2 = m * g * l * sp - c * psi_dot
        det = a11 * a22 - a12 * a12
        s_dd = (a22 * r1 - a12 * r2) / det
        psi_dd = (a11 * r2 - a12 * r1) / det
        return s_dot, psi_dot, s_dd, psi_dd

    @jit
    def step(p, x0, x1, x2, x3, u, fd):
        h = p[7]
        k1 = deriv(p, x2, x1, x3, u, fd)
        k2 = deriv(p, x2 + 0.5 * h * k1[2], x1 + 0.5 * h * k1[1], x3 + 0.5 * h * k1[3], u, fd)
        k3 = deriv(p, x2 + 0.5 * h * k2[2], x1 + 0.5 * h * k2[1], x3 + 0.5 * h * k2[3], u, fd)
        k4 = deriv(p, x2 + h * k3[2], x1 + h * k3[1], x3 + h * k3[3], u, fd)
        w = h / 6.0
        return (
            x0 + w * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            x1 + w * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
            x2 + w * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]),
            x3 + w * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3]),
        )

    @jit
    def rollout(p, gain, x_init, n_steps, u_max, s_max, psi_max, traj):
        """Closed-loop rollout; fills ``traj`` (n_steps, 5) and returns (cost_sum, violation_step).

        ``violation_step`` is -1 when every visited state stayed inside the limits.
        States x_0..x_K are checked; the cost sums over k = 0..K-1.
        """
        x0, x1, x2, x3 = x_init[0], x_init[1], x_init[2], x_init[3]
        wu = 10.0 ** -1.5
        omega = 2.0 * math.pi * p[9] * p[7]
        total = 0.0
        for k in range(n_steps):
            if not (abs(x0) <= s_max and abs(x1) <= psi_max
                    and math.isfinite(x2) and math.isfinite(x3)):
                return total, k
            u = gain[0] * x0 + gain[1] * x1 + gain[2] * x2 + gain[3] * x3
            if u > u_max:
                u = u_max
            elif u < -u_max:
                u = -u_max
            traj[k, 0] = x0
            traj[k, 1] = x1
            traj[k, 2] = x2
            traj[k, 3] = x3
            traj[k, 4] = u
            total += x0 * x0 + x1 * x1 + x2 * x2 + 0.1 * x3 * x3 + wu * u * u
            x0, x1, x2, x3 = step(p, x0, x1, x2, x3, u, p[8] * math.sin(omega * k))
        if not (abs(x0) <= s_max and abs(x1) <= psi_max
                and math.isfinite(x2) and math.isfinite(x3)):
            return total, n_steps
        return total, -1

    return step, rollout


def _identity(fn):
    return fn


step_py, rollout_py = _build_rollout(_identity)


def fantasy_entropy_np(base, cand_latent, eps, z, update, mu_c, sd_pred, eta_c):
    """Mean p_min entropy after conditioning on each fantasy outcome (numpy path).

    base : (S, R) joint posterior samples on the representer grid
    cand_latent : (S, C) latent samples at each candidate, drawn jointly with ``base``
    eps : (S,) standard normals for the candidate observation noise
    z : (F,) standard normals defining the fantasy outcomes
    update : (C, R) pathwise update vectors Sigma[grid, c] / (Sigma[c, c] + eta_c**2)
    """
    S, R = base.shape
    out = np.empty(update.shape[0])
    for c in range(update.shape[0]):
        if not np.any(update[c]):
            out[c] = _entropy_of_counts(np.bincount(np.argmin(base, axis=1), minlength=R), S)
            continue
        resid = cand_latent[:, c] + eta_c[c] * eps
        acc = 0.0
        for zf in z:
            y = mu_c[c] + sd_pred[c] * zf
            shifted = base + (y - resid)[:, None] * update[c][None, :]
            counts = np.bincount(np.argmin(shifted, axis=1), minlength=R)
            acc += _entropy_of_counts(counts, S)
        out[c] = acc / len(z)
    return out


def _entropy_of_counts(counts, total):
    p = counts[counts > 0] / total
    return float(-np.sum(p * np.log(p)))


if HAVE_NUMBA:
    _jit = njit(cache=False, nogil=True)

    @njit(cache=True, nogil=True)
    def fantasy_entropy_nb(base, cand_latent, eps, z, update, mu_c, sd_pred, eta_c):
        S, R = base.shape
        C = update.shape[0]
        F = z.shape[0]
        out = np.empty(C)
        counts = np.zeros(R)
        for c in range(C):
            nonzero = False
            for r in range(R):
                if update[c, r] != 0.0:
                    nonzero = True
                    break
            n_draws = F if nonzero else 1
            acc = 0.0
            for f in range(n_draws):
                y = mu_c[c] + sd_pred[c] * z[f]
                counts[:] = 0.0
                for s in range(S):
                    shift = y - (cand_latent[s, c] + eta_c[c] * eps[s])
                    if not nonzero:
                        shift = 0.0
                    best = base[s, 0] + update[c, 0] * shift
                    bi = 0
                    for r in range(1, R):
                        v = base[s, r] + update[c, r] * shift
                        if v < best:
                            best = v
                            bi = r
                    counts[bi] += 1.0
                h = 0.0
                for r in range(R):
                    if counts[r] > 0.0:
                        q = counts[r] / S
                        h -= q * math.log(q)
                acc += h
            out[c] = acc / n_draws
        return out

    step_nb, rollout_nb = _build_rollout(_jit)
else:  # pragma: no cover
    fantasy_entropy_nb = None
    step_nb = rollout_nb = None


if USE_NUMBA:
    rk4_step = step_nb
    rollout_kernel = rollout_nb
    fantasy_entropy = fantasy_entropy_nb
else:
    rk4_step = step_py
    rollout_kernel = rollout_py
    fantasy_entropy = fantasy_entropy_np
