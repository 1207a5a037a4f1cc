"""LQR parameterization of cart-pole state feedback.

Linearizes the plant about upright, solves the discrete Riccati equation by
fixed-point iteration and maps tuning parameters ``theta = (theta1, theta2)``
to a gain row ``F`` with ``u = F @ x``.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .errors import InvalidArgumentError, NotStabilizableError

THETA_BOUNDS = np.array([[-3.0, 2.0], [1.0, 5.0]])
THETA_NOMINAL = np.array([0.0, 1.5])


@dataclass(frozen=True)
class LinearModel:
    A: np.ndarray
    B: np.ndarray
    dt: float


@dataclass(frozen=True)
class LqrWeights:
    Wx: np.ndarray
    Wu: float

    def __post_init__(self):
        d = np.diag(self.Wx)
        if np.any(d < 0) or not np.any(d > 0) or not np.allclose(self.Wx, np.diag(d)):
            raise InvalidArgumentError("Wx must be diagonal, nonnegative and not all zero")
        if not self.Wu > 0:
            raise InvalidArgumentError("Wu must be positive")


def continuous_jacobians(params):
    """(A_c, B_c) of the cart-pole ODE at the upright rest state."""
    M, m, l, g = params.cart_mass, params.pole_mass, params.pole_length, params.gravity
    b, c, km = params.cart_friction, params.pole_damping, params.motor_gain
    mass = np.array([[M + m, m * l], [m * l, m * l * l]])
    # generalized forces linearized in (s, psi, s_dot, psi_dot) and u
    dq = np.array([[0.0, 0.0, -b, 0.0], [0.0, m * g * l, 0.0, -c]])
    du = np.array([km, 0.0])
    A = np.zeros((4, 4))
    A[0, 2] = A[1, 3] = 1.0
    A[2:, :] = np.linalg.solve(mass, dq)
    B = np.zeros((4, 1))
    B[2:, 0] = np.linalg.solve(mass, du)
    return A, B


def linearize(params):
    """Zero-order-hold discretization of the upright Jacobians at ``params.dt``."""
    Ac, Bc = continuous_jacobians(params)
    aug = np.zeros((5, 5))
    aug[:4, :4] = Ac
    aug[:4, 4:] = Bc
    Phi = expm(aug * params.dt)
    return LinearModel(A=Phi[:4, :4], B=Phi[:4, 4:], dt=params.dt)


def weights_from_theta(theta):
    theta = np.asarray(theta, dtype=float)
    return LqrWeights(Wx=np.diag([10.0 ** theta[0], 1.0, 1.0, 0.1]), Wu=10.0 ** -theta[1])


def riccati_rhs(P, A, B, Wx, Wu):
    BtP = B.T @ P
    S = BtP @ B + Wu
    return A.T @ P @ A - (BtP @ A).T @ np.linalg.solve(S, BtP @ A) + Wx


def _doubling(A, G, H, max_doublings=64):
    """Jump along the value-iteration sequence: after k passes H is P_{2^k}.

    With ``G = B Wu^-1 B^T`` and ``H = Wx`` this is the iteration started from
    P = 0 (so P_1 = Wx), sampled at powers of two.
    """
    eye = np.eye(A.shape[0])
    for _ in range(max_doublings):
        W = np.linalg.solve(eye + G @ H, np.hstack([A, G]))
        IA, IG = W[:, :A.shape[1]], W[:, A.shape[1]:]
        H_next = H + A.T @ H @ IA
        G = G + A @ IG @ A.T
        A = A @ IA
        H_next = 0.5 * (H_next + H_next.T)
        G = 0.5 * (G + G.T)
        if not np.all(np.isfinite(H_next)):
            break
        change = np.max(np.abs(H_next - H))
        H = H_next
        # doubling converges quadratically, so run it down to rounding level
        if change <= 64 * np.finfo(float).eps * max(1.0, np.max(np.abs(H))):
            break
    return H


def solve_dare(model, weights, tol=1e-14, max_iter=10_000):
    """Stabilizing DARE solution of the fixed-point iteration from ``P0 = Wx``.

    Iterates P <- A'PA - A'PB (B'PB + Wu)^-1 B'PA + Wx.  Slow closed-loop modes
    make the plain iteration crawl, so the sequence is first advanced by
    doubling (each pass doubles the number of steps taken), then plain steps
    run until successive iterates differ by less than ``tol`` relative to
    ``max(1, max|P|)``.  Doubling alone stalls at a residual set by the
    conditioning of ``I + G H``; the plain steps remove that.  ``max_iter``
    caps the plain steps.

    ``model`` may also be an ``(A, B)`` pair and ``weights`` a ``(Q, R)`` pair of
    arrays, which is convenient for small test systems.
    """
    A, B = (model.A, model.B) if isinstance(model, LinearModel) else map(np.atleast_2d, model)
    if isinstance(weights, LqrWeights):
        Wx, Wu = weights.Wx, np.atleast_2d(weights.Wu)
    else:
        Wx, Wu = (np.atleast_2d(np.asarray(w, dtype=float)) for w in weights)
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    Wx = Wx.astype(float)
    # divergence is detected explicitly below, so overflow is not worth a warning
    with np.errstate(over="ignore", invalid="ignore"):
        G = B @ np.linalg.solve(Wu, B.T)
        P = _doubling(A, G, Wx)
        if not np.all(np.isfinite(P)):
            P = Wx.copy()
        for _ in range(max_iter):
            P_next = riccati_rhs(P, A, B, Wx, Wu)
            P_next = 0.5 * (P_next + P_next.T)
            if not np.all(np.isfinite(P_next)):
                break
            delta = np.max(np.abs(P_next - P))
            P = P_next
            if delta < tol * max(1.0, np.max(np.abs(P))):
                return P
    raise NotStabilizableError(
        f"DARE did not converge in {max_iter} iterations for Wx diag "
        f"{np.diag(Wx).tolist()}, Wu {np.ravel(Wu).tolist()}")


def lqr_gain(model, weights, **kw):
    P = solve_dare(model, weights, **kw)
    A, B = model.A, model.B
    Wu = np.atleast_2d(weights.Wu)
    return -np.linalg.solve(B.T @ P @ B + Wu, B.T @ P @ A)


def gain_from_theta(theta, model):
    """Feedback row ``F`` (shape (4,)) for tuning parameters ``theta``."""
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if theta.shape != (2,):
        raise InvalidArgumentError("theta must have length 2")
    return lqr_gain(model, weights_from_theta(theta)).reshape(-1)


def spectral_radius(M):
    return float(np.max(np.abs(np.linalg.eigvals(M))))
