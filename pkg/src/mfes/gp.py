"""Gaussian-process regression over two information sources.

Inputs are extended points ``(theta, delta)`` where ``delta = 0`` marks a
simulation and ``delta = 1`` a physical evaluation.  The covariance is

    k((t, d), (t', d')) = k_sim(t, t') + d * d' * k_err(t, t')

so the error component is only visible when both inputs are physical.  Each
source has its own constant prior mean offset and observation noise.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .errors import InvalidArgumentError, NumericalConditioningError

log = logging.getLogger(__name__)

KERNEL_VARIANTS = ("rational-quadratic", "squared-exponential")


@dataclass(frozen=True, eq=False)
class ExtendedPoint:
    theta: np.ndarray
    delta: int

    def __post_init__(self):
        object.__setattr__(self, "theta", np.atleast_1d(np.asarray(self.theta, dtype=float)))
        if self.delta not in (0, 1):
            raise InvalidArgumentError(f"delta must be 0 or 1, got {self.delta!r}")
        object.__setattr__(self, "delta", int(self.delta))


def in_box(theta, bounds):
    theta = np.atleast_2d(theta)
    return bool(np.all((theta >= bounds[:, 0]) & (theta <= bounds[:, 1])))


@dataclass(frozen=True)
class KernelSpec:
    variant: str = "rational-quadratic"
    output_variance: float = 1.0
    length_scales: tuple = (1.0,)
    alpha: float = 0.25

    def __post_init__(self):
        if self.variant not in KERNEL_VARIANTS:
            raise InvalidArgumentError(f"unknown kernel variant {self.variant!r}")
        ls = tuple(float(v) for v in np.atleast_1d(self.length_scales))
        object.__setattr__(self, "length_scales", ls)
        if not self.output_variance > 0 or min(ls) <= 0 or not self.alpha > 0:
            raise InvalidArgumentError("kernel variance, length scales and alpha must be positive")

    @property
    def dim(self):
        return len(self.length_scales)

    def sq_dist(self, X1, X2):
        X1 = np.atleast_2d(X1) / self.length_scales
        X2 = np.atleast_2d(X2) / self.length_scales
        d2 = (np.sum(X1 ** 2, 1)[:, None] + np.sum(X2 ** 2, 1)[None, :] - 2.0 * X1 @ X2.T)
        return np.maximum(d2, 0.0)

    def __call__(self, X1, X2):
        r2 = self.sq_dist(X1, X2)
        if self.variant == "rational-quadratic":
            return self.output_variance * (1.0 + r2 / (2.0 * self.alpha)) ** (-self.alpha)
        return self.output_variance * np.exp(-0.5 * r2)


@dataclass(frozen=True)
class CompositeKernel:
    k_sim: KernelSpec
    k_err: KernelSpec

    def __post_init__(self):
        if self.k_sim.dim != self.k_err.dim:
            raise InvalidArgumentError("k_sim and k_err must share the input dimension")

    @property
    def dim(self):
        return self.k_sim.dim

    @property
    def total_variance(self):
        return self.k_sim.output_variance + self.k_err.output_variance

    def __call__(self, X1, d1, X2, d2):
        X1, X2 = _as_inputs(X1, self.dim), _as_inputs(X2, self.dim)
        d1 = np.asarray(d1, dtype=float).reshape(-1)
        d2 = np.asarray(d2, dtype=float).reshape(-1)
        return self.k_sim(X1, X2) + np.outer(d1, d2) * self.k_err(X1, X2)

    def diag(self, X, d):
        X = _as_inputs(X, self.dim)
        d = np.asarray(d, dtype=float).reshape(-1)
        # stationary kernels: zero-lag value is the output variance
        return np.full(len(X), self.k_sim.output_variance) + d * self.k_err.output_variance


def _as_inputs(X, dim):
    X = np.asarray(X, dtype=float)
    if X.ndim <= 1:
        X = X.reshape(-1, dim) if X.size % dim == 0 and dim > 1 else X.reshape(-1, 1)
    if X.shape[1] != dim:
        raise InvalidArgumentError(f"expected inputs of dimension {dim}, got {X.shape[1]}")
    return X


def kernel_eval(k, a, b):
    """Covariance between two extended points."""
    if a.theta.shape != (k.dim,) or b.theta.shape != (k.dim,):
        raise InvalidArgumentError(
            f"dimension mismatch: kernel has {k.dim}, points have {a.theta.size} and {b.theta.size}")
    return float(k(a.theta[None], [a.delta], b.theta[None], [b.delta])[0, 0])


@dataclass(frozen=True)
class NoiseModel:
    eta_sim: float = 1e-5
    eta_exp: float = 2.08e-4

    def __post_init__(self):
        if not (np.isfinite(self.eta_sim) and np.isfinite(self.eta_exp)):
            raise InvalidArgumentError("noise levels must be finite")
        if self.eta_sim < 0 or self.eta_exp < 0:
            raise InvalidArgumentError("noise levels must be nonnegative")

    def variance(self, delta):
        delta = np.asarray(delta)
        return np.where(delta == 1, self.eta_exp ** 2, self.eta_sim ** 2)


@dataclass(frozen=True)
class MeanModel:
    m_sim: float = 0.04
    m_err: float = 0.02

    def __call__(self, delta):
        return self.m_sim + np.asarray(delta, dtype=float) * self.m_err


@dataclass(frozen=True, eq=False)
class GpModel:
    """Immutable GP posterior; ``add_observation`` returns a new model."""

    kernel: CompositeKernel
    mean: MeanModel = field(default_factory=MeanModel)
    noise: NoiseModel = field(default_factory=NoiseModel)
    X: np.ndarray = None
    delta: np.ndarray = None
    y: np.ndarray = None
    jitter: float = field(default=0.0, compare=False)
    _chol: np.ndarray = field(default=None, repr=False, compare=False)
    _alpha: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        d = self.kernel.dim
        X = np.empty((0, d)) if self.X is None else _as_inputs(self.X, d)
        delta = np.empty(0, dtype=int) if self.delta is None else np.asarray(self.delta, int).reshape(-1)
        y = np.empty(0) if self.y is None else np.asarray(self.y, float).reshape(-1)
        if not (len(X) == len(delta) == len(y)):
            raise InvalidArgumentError("X, delta and y must have the same length")
        if np.any((delta != 0) & (delta != 1)):
            raise InvalidArgumentError("delta entries must be 0 or 1")
        if not np.all(np.isfinite(y)):
            raise InvalidArgumentError("observations must be finite")
        if not np.all(np.isfinite(X)):
            raise InvalidArgumentError("inputs must be finite")
        for name, val in (("X", X), ("delta", delta), ("y", y)):
            val = np.array(val)
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        if self._chol is None:
            self._factorize()

    @property
    def n(self):
        return len(self.y)

    def gram(self):
        """K_n: kernel matrix plus per-source noise on the diagonal."""
        K = self.kernel(self.X, self.delta, self.X, self.delta)
        return K + np.diag(self.noise.variance(self.delta))

    def _factorize(self):
        if self.n == 0:
            object.__setattr__(self, "_chol", np.empty((0, 0)))
            object.__setattr__(self, "_alpha", np.empty(0))
            return
        K = self.gram()
        scale = self.kernel.total_variance
        rel = 1e-10
        while True:
            try:
                L = np.linalg.cholesky(K + rel * scale * np.eye(self.n))
                break
            except np.linalg.LinAlgError:
                rel *= 10.0
                if rel > 1e-4 * (1 + 1e-9):
                    raise NumericalConditioningError(
                        f"K_n not positive definite with jitter {rel / 10 * scale:.3e}",
                        jitter=rel / 10 * scale) from None
        if rel > 1e-10:
            log.info("GP factorization needed jitter %.1e x prior variance", rel)
        resid = self.y - self.mean(self.delta)
        alpha = solve_triangular(L.T, solve_triangular(L, resid, lower=True), lower=False)
        object.__setattr__(self, "_chol", L)
        object.__setattr__(self, "_alpha", alpha)
        object.__setattr__(self, "jitter", rel * scale)

    def add_observation(self, a, y):
        """Return a new model conditioned additionally on ``(a, y)``."""
        y = float(y)
        if not np.isfinite(y):
            raise InvalidArgumentError("observation must be finite")
        if a.theta.shape != (self.kernel.dim,):
            raise InvalidArgumentError("observation has the wrong dimension")
        return GpModel(self.kernel, self.mean, self.noise,
                       np.vstack([self.X, a.theta[None]]),
                       np.append(self.delta, a.delta),
                       np.append(self.y, y))

    def add_observations(self, X, delta, y):
        return GpModel(self.kernel, self.mean, self.noise,
                       np.vstack([self.X, _as_inputs(X, self.kernel.dim)]),
                       np.append(self.delta, np.asarray(delta, int)),
                       np.append(self.y, np.asarray(y, float)))

    def posterior(self, X, delta, full_cov=True):
        """Posterior mean and covariance (or variance if ``full_cov`` is False) of the latent cost.

        Query points are ``X`` (m, d) at fidelities ``delta`` (scalar or length m).
        Negative variances from round-off are clamped to zero.
        """
        X = _as_inputs(X, self.kernel.dim)
        delta = np.broadcast_to(np.asarray(delta, dtype=int), (len(X),))
        mu = self.mean(delta)
        if full_cov:
            cov = self.kernel(X, delta, X, delta)
        else:
            var = self.kernel.diag(X, delta)
        if self.n:
            Ks = self.kernel(self.X, self.delta, X, delta)
            mu = mu + Ks.T @ self._alpha
            V = solve_triangular(self._chol, Ks, lower=True)
            if full_cov:
                cov = cov - V.T @ V
            else:
                var = var - np.sum(V ** 2, axis=0)
        if full_cov:
            cov = 0.5 * (cov + cov.T)
            idx = np.diag_indices_from(cov)
            cov[idx] = np.maximum(cov[idx], 0.0)
            return mu, cov
        return mu, np.maximum(var, 0.0)

    def predict(self, X, delta):
        """Posterior mean and variance (diagonal only)."""
        return self.posterior(X, delta, full_cov=False)

    def permuted(self, order):
        order = np.asarray(order)
        return GpModel(self.kernel, self.mean, self.noise, self.X[order], self.delta[order], self.y[order])


def default_kernel(bounds, var_sim=1.6e-5, var_err=3.84e-4, alpha=0.25,
                   variant="rational-quadratic", length_fraction=0.2):
    """Composite kernel with length scales a fixed fraction of each box width."""
    widths = np.diff(np.asarray(bounds, dtype=float), axis=1).ravel()
    ls = tuple(length_fraction * widths)
    return CompositeKernel(KernelSpec(variant, var_sim, ls, alpha),
                           KernelSpec(variant, var_err, ls, alpha))
