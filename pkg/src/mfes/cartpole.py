"""Nonlinear cart-pole plant, closed-loop rollouts and the two-source objective.

The pole is a point mass at ``pole_length`` from the pivot; ``psi`` is measured
from upright.  The cart is driven by a motor force ``motor_gain * u`` (u in volts)
and opposed by viscous friction; the pole joint carries viscous damping.  An
optional sinusoidal force on the cart stands in for repeatable disturbances of
a physical rig (track cogging, cable drag) that a simulator leaves out.
"""

import csv
from dataclasses import dataclass, replace

import numpy as np

from . import accel
from .errors import InvalidArgumentError, NotStabilizableError
from .optimizer import ObjectivePair


@dataclass(frozen=True)
class CartPoleParams:
    cart_mass: float = 0.57  # kg
    pole_mass: float = 0.23  # kg
    pole_length: float = 0.33  # m, pivot to centre of mass
    gravity: float = 9.81
    motor_gain: float = 1.7  # N/V
    cart_friction: float = 0.0  # N s/m
    pole_damping: float = 0.0  # N m s/rad
    disturbance_amplitude: float = 0.0  # N, sinusoidal force on the cart
    disturbance_frequency: float = 0.0  # Hz
    dt: float = 0.01  # s
    horizon: int = 1000

    def __post_init__(self):
        for name in ("cart_mass", "pole_mass", "pole_length", "gravity", "dt"):
            if not getattr(self, name) > 0:
                raise InvalidArgumentError(f"{name} must be positive")
        if self.horizon < 1:
            raise InvalidArgumentError("horizon must be >= 1")

    def packed(self):
        return np.array([self.cart_mass, self.pole_mass, self.pole_length, self.gravity,
                         self.motor_gain, self.cart_friction, self.pole_damping, self.dt,
                         self.disturbance_amplitude, self.disturbance_frequency])


@dataclass(frozen=True)
class CartPoleState:
    s: float = 0.0
    psi: float = 0.0
    s_dot: float = 0.0
    psi_dot: float = 0.0

    def as_array(self):
        return np.array([self.s, self.psi, self.s_dot, self.psi_dot])


@dataclass(frozen=True)
class SafetyLimits:
    s_max: float = 0.15  # m
    psi_max: float = 0.7  # rad
    u_max: float = 10.0  # V


@dataclass
class RolloutResult:
    trajectory: np.ndarray  # (k_run, 5): s, psi, s_dot, psi_dot, u
    cost: float
    stable: bool
    violation_step: int | None = None

    @property
    def states(self):
        return self.trajectory[:, :4]

    @property
    def inputs(self):
        return self.trajectory[:, 4]


def default_real_params(**overrides):
    """Stand-in for the physical plant: nominal masses plus friction, joint damping and a 1 Hz disturbance."""
    base = dict(cart_friction=8.0, pole_damping=0.002, disturbance_amplitude=1.5,
                disturbance_frequency=1.0)
    base.update(overrides)
    return CartPoleParams(**base)


def default_sim_params(real=None, pole_mass_scale=0.85):
    """Biased simulator: lighter pole, no friction anywhere, no disturbance."""
    real = real or default_real_params()
    return replace(real, pole_mass=real.pole_mass * pole_mass_scale,
                   cart_friction=0.0, pole_damping=0.0, disturbance_amplitude=0.0)


def energy(params, x):
    """Total mechanical energy (kinetic + potential, pivot height as zero)."""
    M, m, l, g = params.cart_mass, params.pole_mass, params.pole_length, params.gravity
    s, psi, s_dot, psi_dot = np.asarray(x, dtype=float)
    kinetic = (0.5 * (M + m) * s_dot ** 2 + m * l * s_dot * psi_dot * np.cos(psi)
               + 0.5 * m * l ** 2 * psi_dot ** 2)
    return kinetic + m * g * l * np.cos(psi)


def step(params, x, u, limits=None, disturbance=0.0):
    """Advance one ``dt`` with classical RK4; ``u`` is saturated first when ``limits`` is given.

    ``disturbance`` is an extra force on the cart (N) held over the step.
    """
    if not np.isfinite(u):
        raise InvalidArgumentError("u must be finite")
    if limits is not None:
        u = float(np.clip(u, -limits.u_max, limits.u_max))
    x = x.as_array() if isinstance(x, CartPoleState) else np.asarray(x, dtype=float)
    out = accel.rk4_step(params.packed(), x[0], x[1], x[2], x[3], float(u), float(disturbance))
    return np.array(out)


def quadratic_cost(states, inputs):
    """Average stage cost s^2 + psi^2 + s_dot^2 + 0.1 psi_dot^2 + 10^-1.5 u^2."""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    inputs = np.asarray(inputs, dtype=float).reshape(-1)
    if states.shape[0] != inputs.shape[0] or states.shape[1] != 4:
        raise InvalidArgumentError("states must be (K, 4) with one input per row")
    stage = states ** 2 @ accel.COST_WEIGHTS[:4] + accel.COST_WEIGHTS[4] * inputs ** 2
    return float(stage.mean())


def rollout(params, limits, gain, x0=None, penalty=0.06, noise_std=0.0, rng=None):
    """Simulate ``u_k = gain @ x_k`` (saturated) for ``params.horizon`` steps.

    An unstable run (state limits left, or non-finite state) returns
    ``cost == penalty`` exactly.  Otherwise the average quadratic cost plus
    Gaussian noise of ``noise_std`` is returned, clamped at zero.
    """
    gain = np.asarray(gain, dtype=float).reshape(-1)
    if gain.shape != (4,):
        raise InvalidArgumentError("gain must have length 4")
    if not np.all(np.isfinite(gain)):
        return RolloutResult(np.zeros((0, 5)), float(penalty), False, 0)
    if x0 is None:
        x0 = CartPoleState(psi=0.1)
    x_init = x0.as_array() if isinstance(x0, CartPoleState) else np.asarray(x0, dtype=float)
    K = params.horizon
    traj = np.zeros((K, 5))
    total, violation = accel.rollout_kernel(params.packed(), gain, x_init, K, limits.u_max,
                                            limits.s_max, limits.psi_max, traj)
    if violation >= 0:
        return RolloutResult(traj[:violation], float(penalty), False, int(violation))
    cost = total / K
    if noise_std > 0:
        rng = rng if rng is not None else np.random.default_rng()
        cost = max(cost + noise_std * rng.standard_normal(), 0.0)
    return RolloutResult(traj, float(cost), True, None)


def write_trajectory_csv(path, result):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["step", "s", "psi", "s_dot", "psi_dot", "u"])
        for k, row in enumerate(result.trajectory):
            writer.writerow([k] + [repr(float(v)) for v in row])


def make_objective_pair(real_params, sim_params, limits, penalties=(0.06, 0.04),
                        noise=(2.08e-4, 1e-5), theta_to_gain=None, x0=None,
                        bounds=((-3.0, 2.0), (1.0, 5.0))):
    """Build the physical/simulated objective callables ``f(theta, rng) -> cost``."""
    if theta_to_gain is None:
        raise InvalidArgumentError("theta_to_gain is required")
    pen_exp, pen_sim = penalties
    eta_exp, eta_sim = noise
    x0 = x0 if x0 is not None else CartPoleState(psi=0.1)

    def gain_of(theta):
        # a gain that cannot be designed counts as an unstable controller
        try:
            return theta_to_gain(theta)
        except NotStabilizableError:
            return np.full(4, np.nan)

    def eval_exp(theta, rng=None):
        return rollout(real_params, limits, gain_of(theta), x0, pen_exp, eta_exp, rng).cost

    def eval_sim(theta, rng=None):
        return rollout(sim_params, limits, gain_of(theta), x0, pen_sim, eta_sim, rng).cost

    return ObjectivePair(eval_sim=eval_sim, eval_exp=eval_exp, bounds=np.asarray(bounds, float))
