"""One-dimensional two-source test problem.

The physical cost is a flat level with two Gaussian dips; the simulator sees
the same profile minus a smooth bias, so it is informative about where the
dips are but off in level and slightly in shape.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError
from .optimizer import ObjectivePair


@dataclass(frozen=True)
class Dip:
    center: float
    depth: float
    width: float

    def __post_init__(self):
        if not self.width > 0:
            raise InvalidArgumentError("dip width must be positive")


@dataclass(frozen=True)
class SyntheticPair:
    bounds: tuple = (0.0, 1.0)
    level: float = 0.6
    dips: tuple = (Dip(0.3, 0.5, 0.06), Dip(0.75, 0.35, 0.08))
    # bias(theta) = offset + slope * theta + amplitude * sin(2 pi theta / period)
    bias_offset: float = 0.1
    bias_slope: float = 0.0
    bias_amplitude: float = 0.0
    bias_period: float = 1.0
    eta_exp: float = 0.0
    eta_sim: float = 0.0

    def f_exp(self, theta):
        t = np.asarray(theta, dtype=float)
        out = np.full(t.shape, self.level)
        for d in self.dips:
            out = out - d.depth * np.exp(-0.5 * ((t - d.center) / d.width) ** 2)
        return out

    def bias(self, theta):
        t = np.asarray(theta, dtype=float)
        return (self.bias_offset + self.bias_slope * t
                + self.bias_amplitude * np.sin(2.0 * np.pi * t / self.bias_period))

    def f_sim(self, theta):
        return self.f_exp(theta) - self.bias(theta)

    def argmin(self, n=100_001, source="exp"):
        """Dense-grid minimizer of ``f_exp`` (or ``f_sim``)."""
        grid = np.linspace(*self.bounds, n)
        vals = self.f_exp(grid) if source == "exp" else self.f_sim(grid)
        return float(grid[np.argmin(vals)])

    def objective(self):
        def noisy(f, eta):
            def ev(theta, rng=None):
                y = float(f(np.asarray(theta, dtype=float).reshape(-1)[0]))
                if eta > 0:
                    rng = rng if rng is not None else np.random.default_rng()
                    y += eta * rng.standard_normal()
                return y
            return ev

        return ObjectivePair(eval_sim=noisy(self.f_sim, self.eta_sim),
                             eval_exp=noisy(self.f_exp, self.eta_exp),
                             bounds=np.array([self.bounds], dtype=float))
