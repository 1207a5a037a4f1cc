"""Distribution of the minimizer, its entropy, and the information-per-effort rule.

p_min is approximated by Monte-Carlo: joint posterior samples of the cost at
fidelity 1 on a finite set of representer points, with the argmin of every
sample counted.  The expected entropy change of a candidate evaluation uses
fantasy outcomes.  Rather than refactorizing the GP for every fantasy, the
samples are moved along the exact conditional path

    f_new = f + Sigma[:, c] / (Sigma[c, c] + eta_c^2) * (y - f_c - eps)

which is a draw from the posterior after observing ``y`` at ``c``.  All
candidates in one sweep share the same base samples (common random numbers).
"""

from dataclasses import dataclass

import numpy as np

from . import accel
from .errors import InvalidArgumentError, NumericalConditioningError
from .gp import ExtendedPoint, in_box

MAX_REPRESENTERS = 400
MAX_FANTASY_SAMPLES = 2_000_000


@dataclass(frozen=True, eq=False)
class RepresenterGrid:
    points: np.ndarray  # (R, d), implicitly at delta = 1

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if len(pts) < 2:
            raise InvalidArgumentError("a representer grid needs at least two points")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def size(self):
        return len(self.points)


@dataclass(frozen=True, eq=False)
class PminEstimate:
    grid: RepresenterGrid
    mass: np.ndarray
    entropy: float


@dataclass(eq=False)
class AcquisitionResult:
    best_theta: np.ndarray
    best_delta: int
    score: float
    theta: np.ndarray  # (C, d) candidate locations
    gain_sim: np.ndarray  # expected entropy decrease, delta = 0
    gain_exp: np.ndarray  # expected entropy decrease, delta = 1
    score_sim: np.ndarray
    score_exp: np.ndarray

    def table(self):
        """Rows of (theta, delta, expected entropy decrease, decrease per effort)."""
        rows = []
        for delta, gains, scores in ((0, self.gain_sim, self.score_sim), (1, self.gain_exp, self.score_exp)):
            for th, g, s in zip(self.theta, gains, scores):
                rows.append((th, delta, float(g), float(s)))
        return rows


def entropy(p):
    """Shannon entropy in nats of a mass vector or a ``PminEstimate``."""
    mass = p.mass if isinstance(p, PminEstimate) else np.asarray(p, dtype=float)
    nz = mass[mass > 0]
    return float(-np.sum(nz * np.log(nz)))


def lattice(bounds, R):
    """Regular lattice of exactly ``R`` points over a 1-D or 2-D box (corners included)."""
    bounds = np.asarray(bounds, dtype=float)
    d = len(bounds)
    if d == 1:
        counts = [R]
    elif d == 2:
        # most balanced factorization R = a * b
        a = max(f for f in range(1, int(np.sqrt(R)) + 1) if R % f == 0)
        counts = [a, R // a]
        widths = np.diff(bounds, axis=1).ravel()
        if widths[0] > widths[1]:
            counts = counts[::-1]
    else:
        n = round(R ** (1.0 / d))
        if n ** d != R:
            raise InvalidArgumentError(f"uniform grid in {d}-D needs R = n^{d}")
        counts = [n] * d
    axes = [np.linspace(lo, hi, c) if c > 1 else np.array([(lo + hi) / 2])
            for (lo, hi), c in zip(bounds, counts)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([m.ravel() for m in mesh])


def dense_lattice(bounds, per_axis=101, cap=10_000):
    d = len(bounds)
    n = min(per_axis, int(np.floor(cap ** (1.0 / d) + 1e-9)))
    axes = [np.linspace(lo, hi, n) for lo, hi in np.asarray(bounds, float)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([m.ravel() for m in mesh])


def build_representers(bounds, R, gp=None, strategy="uniform-grid", rng=None,
                       temperature=0.1, max_size=MAX_REPRESENTERS):
    """Representer points for p_min.

    ``posterior-weighted-sample`` draws uniform proposals and accepts each with
    probability exp(-(lcb - lcb_min) / T), where lcb = mu - 2 sigma at fidelity 1
    and T = ``temperature`` times the spread of lcb over a reference lattice.
    """
    bounds = np.asarray(bounds, dtype=float)
    if R < 2:
        raise InvalidArgumentError("R must be at least 2")
    if R > max_size:
        raise InvalidArgumentError(f"R={R} exceeds the configured maximum {max_size}")
    if np.any(bounds[:, 1] <= bounds[:, 0]):
        raise InvalidArgumentError("empty domain")
    if strategy == "uniform-grid":
        return RepresenterGrid(lattice(bounds, R))
    if strategy != "posterior-weighted-sample":
        raise InvalidArgumentError(f"unknown representer strategy {strategy!r}")
    if gp is None:
        raise InvalidArgumentError("posterior-weighted sampling needs a GP")
    if not temperature > 0:
        raise InvalidArgumentError("temperature must be positive")
    rng = rng if rng is not None else np.random.default_rng()

    def lcb(X):
        mu, var = gp.predict(X, 1)
        return mu - 2.0 * np.sqrt(var)

    ref = lcb(dense_lattice(bounds, per_axis=101, cap=2_000))
    lo_val, spread = ref.min(), ref.max() - ref.min()
    T = temperature * spread if spread > 0 else 1.0
    lows, width = bounds[:, 0], bounds[:, 1] - bounds[:, 0]
    accepted = []
    n_acc = 0
    for _ in range(10_000):
        prop = lows + width * rng.random((4 * R, len(bounds)))
        keep = rng.random(len(prop)) < np.exp(-np.maximum(lcb(prop) - lo_val, 0.0) / T)
        accepted.append(prop[keep])
        n_acc += int(keep.sum())
        if n_acc >= R:
            break
    pts = np.vstack(accepted)[:R]
    if len(pts) < R:  # pragma: no cover - needs an absurd temperature
        raise InvalidArgumentError("rejection sampler failed to fill the representer set")
    return RepresenterGrid(pts)


def sampling_factor(cov):
    """Matrix L with L @ L.T == cov, robust to rank deficiency (eigenvalues clipped at 0)."""
    if not np.all(np.isfinite(cov)):
        raise NumericalConditioningError("posterior covariance is not finite")
    try:
        w, U = np.linalg.eigh(cov)
    except np.linalg.LinAlgError as exc:
        raise NumericalConditioningError(f"covariance factorization failed: {exc}") from None
    return U * np.sqrt(np.clip(w, 0.0, None))


def _joint_samples(gp, X, delta, S, rng):
    mu, cov = gp.posterior(X, delta)
    L = sampling_factor(cov)
    Z = rng.standard_normal((S, len(mu)))
    return mu, cov, mu + Z @ L.T


def _counts_to_estimate(grid, idx, S):
    mass = np.bincount(idx, minlength=grid.size) / S
    return PminEstimate(grid, mass, entropy(mass))


def estimate_pmin(gp, grid, S, rng_seed=None):
    """Monte-Carlo p_min at fidelity 1 from ``S`` joint posterior samples (ties to lowest index)."""
    if S < 1:
        raise InvalidArgumentError("S must be >= 1")
    rng = np.random.default_rng(rng_seed)
    _, _, F = _joint_samples(gp, grid.points, 1, S, rng)
    return _counts_to_estimate(grid, np.argmin(F, axis=1), S)


def _check_budget(F, S, cap):
    if F < 1 or S < 1:
        raise InvalidArgumentError("F and S must be >= 1")
    if F * S > cap:
        raise InvalidArgumentError(f"F*S = {F * S} exceeds the configured cap {cap}")


def _fantasy_sweep(gp, grid, cand_X, cand_delta, F, S, rng):
    """(H_now, mean fantasy entropies) for candidates, from one shared sample set."""
    R = grid.size
    X = np.vstack([grid.points, cand_X])
    delta = np.concatenate([np.ones(R, dtype=int), np.asarray(cand_delta, int)])
    mu, cov, samples = _joint_samples(gp, X, delta, S, rng)
    eps = rng.standard_normal(S)
    z = rng.standard_normal(F)
    base = np.ascontiguousarray(samples[:, :R])
    cand_lat = np.ascontiguousarray(samples[:, R:])
    noise_var = gp.noise.variance(cand_delta)
    c_var = np.diag(cov)[R:]
    denom = c_var + noise_var
    with np.errstate(divide="ignore", invalid="ignore"):
        update = np.where(denom[:, None] > 0, cov[R:, :R] / denom[:, None], 0.0)
    update = np.ascontiguousarray(update)
    h_now = entropy(np.bincount(np.argmin(base, axis=1), minlength=R) / S)
    h_fant = accel.fantasy_entropy(base, cand_lat, eps, z, update, mu[R:],
                                   np.sqrt(denom), np.sqrt(noise_var))
    return h_now, np.asarray(h_fant)


def expected_entropy_change(gp, candidate, grid, F=20, S=1000, rng_seed=None,
                            max_samples=MAX_FANTASY_SAMPLES, bounds=None):
    """Expected decrease of p_min entropy from evaluating ``candidate`` (positive = information gained)."""
    _check_budget(F, S, max_samples)
    if bounds is not None and not in_box(candidate.theta, np.asarray(bounds)):
        raise InvalidArgumentError("candidate outside the domain")
    rng = np.random.default_rng(rng_seed)
    h_now, h_f = _fantasy_sweep(gp, grid, candidate.theta[None], [candidate.delta], F, S, rng)
    return float(h_now - h_f[0])


def choose(theta, gain_sim, gain_exp, efforts):
    """Pick the (theta, source) maximizing gain / effort.

    Ties go to the physical source, then to the lowest candidate index.
    """
    t_sim, t_exp = efforts
    if not (t_sim > 0 and t_exp > 0):
        raise InvalidArgumentError("efforts must be strictly positive")
    theta = np.atleast_2d(theta)
    gain_sim = np.asarray(gain_sim, dtype=float)
    gain_exp = np.asarray(gain_exp, dtype=float)
    score_sim = gain_sim / t_sim
    score_exp = gain_exp / t_exp
    ordered = np.concatenate([score_exp, score_sim])
    finite = np.isfinite(ordered)
    if not finite.any():
        raise NumericalConditioningError("all acquisition scores are non-finite")
    i = int(np.argmax(np.where(finite, ordered, -np.inf)))
    C = len(theta)
    delta, idx = (1, i) if i < C else (0, i - C)
    return AcquisitionResult(theta[idx].copy(), delta, float(ordered[i]), theta,
                             gain_sim, gain_exp, score_sim, score_exp)


def select_next(gp, candidates, efforts, grid, F=20, S=1000, rng_seed=None,
                max_samples=MAX_FANTASY_SAMPLES, sources=(0, 1)):
    """Evaluate every candidate at both fidelities and return the effort-weighted argmax.

    ``sources=(1,)`` restricts the sweep to physical evaluations (plain entropy search).
    """
    _check_budget(F, S, max_samples)
    candidates = np.atleast_2d(np.asarray(candidates, dtype=float))
    if len(candidates) == 0:
        raise InvalidArgumentError("no candidates")
    C = len(candidates)
    rng = np.random.default_rng(rng_seed)
    cand_X = np.vstack([candidates] * len(sources))
    cand_delta = np.repeat(np.asarray(sources, dtype=int), C)
    h_now, h_f = _fantasy_sweep(gp, grid, cand_X, cand_delta, F, S, rng)
    gains = {src: h_now - h_f[k * C:(k + 1) * C] for k, src in enumerate(sources)}
    excluded = np.full(C, -np.inf)
    return choose(candidates, gains.get(0, excluded), gains.get(1, excluded), efforts)


def _golden_section(f, lo, hi, iters=20):
    g = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def best_guess(gp, bounds, grid=None, per_axis=101, cap=10_000, iters=20):
    """Minimizer of the fidelity-1 posterior mean: dense lattice, then coordinate golden-section."""
    bounds = np.asarray(bounds, dtype=float)
    X = dense_lattice(bounds, per_axis, cap)
    if grid is not None:
        X = np.vstack([X, grid.points])
    mu, _ = gp.predict(X, 1)
    i = int(np.argmin(mu))
    x, fx = X[i].copy(), float(mu[i])
    n_axis = min(per_axis, int(np.floor(cap ** (1.0 / len(bounds)) + 1e-9)))
    cell = (bounds[:, 1] - bounds[:, 0]) / max(n_axis - 1, 1)

    def mean_at(pt):
        return float(gp.predict(pt[None], 1)[0][0])

    for j in range(len(bounds)):
        lo = max(bounds[j, 0], x[j] - cell[j])
        hi = min(bounds[j, 1], x[j] + cell[j])

        def along(t, j=j):
            pt = x.copy()
            pt[j] = t
            return mean_at(pt)

        t, ft = _golden_section(along, lo, hi, iters)
        if ft < fx:
            x[j], fx = t, ft
    return x
