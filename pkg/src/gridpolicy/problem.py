"""Problem definitions: dynamics, costs, constraints, and built-in benchmarks.

A control problem is a bundle of vectorized callables over batched arrays:
states have shape ``(..., state_dim)`` and controls ``(..., control_dim)``,
and every callable must accept arbitrary matching batch shapes.  Stage costs
may be *relaxed* by a constant multiplier ``lam`` on an auxiliary per-stage
output ``average_fn``; the relaxation shifts the stationary optimum so that
minimizing long-run cost steers the achieved long-run average of
``average_fn`` toward a nominal value.

The built-in benchmarks are a torque-limited pendulum integrated with
classical fourth-order Runge-Kutta substeps under a zero-order hold:

    theta_ddot = u / (m l^2) - (d / m) theta_dot - (g / l) sin(theta)
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

Array = np.ndarray
VectorFn = Callable[[Array, Array], Array]


@dataclass(frozen=True)
class ProblemDef:
    """A constrained control problem on continuous state/control spaces.

    Attributes:
        state_dim: dimension of the state vector.
        control_dim: dimension of the control vector.
        dynamics: ``(x, u) -> x_next`` with shape ``(..., state_dim)``.
        stage_cost: ``(x, u) -> f_c`` with shape ``(...,)``.
        inequality: ``(x, u) -> g`` with shape ``(..., n_g)``; a pair is
            admissible iff every component satisfies ``g <= 0``.
        average_fn: ``(x, u) -> f_a`` with shape ``(...,)``, the per-stage
            quantity whose long-run average is steered by the relaxation.
        lam: relaxation multiplier.  ``None`` disables the relaxation
            entirely (the relaxed cost degenerates to the stage cost).
        nominal_average: target long-run average of ``average_fn``, when the
            problem prescribes one.
    """

    state_dim: int
    control_dim: int
    dynamics: VectorFn
    stage_cost: VectorFn
    inequality: VectorFn
    average_fn: VectorFn
    lam: float | None = None
    nominal_average: float | None = None

    def __post_init__(self) -> None:
        if self.state_dim < 1 or self.control_dim < 1:
            raise ValueError("state_dim and control_dim must be at least 1")


def relaxed_cost(problem: ProblemDef, x: Array, u: Array) -> Array:
    """Relaxed stage cost ``f_c + lam * f_a`` (just ``f_c`` when lam is None)."""
    c = np.asarray(problem.stage_cost(x, u), dtype=float)
    if problem.lam is None:
        return c
    return c + problem.lam * np.asarray(problem.average_fn(x, u), dtype=float)


# ---------------------------------------------------------------------------
# pendulum dynamics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PendulumParams:
    """Physical and discretization parameters of the pendulum benchmarks.

    ``sample_time`` is the zero-order-hold interval; each sample is integrated
    with ``substeps`` classical RK4 steps at constant torque.
    """

    mass: float = 1.0
    gravity: float = 1.0
    length: float = 1.0
    damping: float = 0.0
    sample_time: float = 0.2
    substeps: int = 10

    def __post_init__(self) -> None:
        if min(self.mass, self.gravity, self.length) <= 0.0:
            raise ValueError("mass, gravity and length must be positive")
        if self.damping < 0.0:
            raise ValueError("damping must be nonnegative")
        if self.sample_time <= 0.0:
            raise ValueError("sample_time must be positive")
        if self.substeps < 1:
            raise ValueError("substeps must be at least 1")


def pendulum_step(params: PendulumParams, x: Array, u: Array) -> Array:
    """One zero-order-hold sample of the pendulum, batched.

    Args:
        params: physical parameters and integration settings.
        x: states ``(..., 2)`` as ``(theta, theta_dot)``.
        u: torques ``(..., 1)``.

    Returns:
        Next states, shape ``(..., 2)``.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    th = x[..., 0]
    om = x[..., 1]
    tq = u[..., 0]

    inv_ml2 = 1.0 / (params.mass * params.length**2)
    damp = params.damping / params.mass
    grav = params.gravity / params.length
    h = params.sample_time / params.substeps

    def acc(theta: Array, omega: Array) -> Array:
        return tq * inv_ml2 - damp * omega - grav * np.sin(theta)

    for _ in range(params.substeps):
        k1t = om
        k1o = acc(th, om)
        k2t = om + 0.5 * h * k1o
        k2o = acc(th + 0.5 * h * k1t, om + 0.5 * h * k1o)
        k3t = om + 0.5 * h * k2o
        k3o = acc(th + 0.5 * h * k2t, om + 0.5 * h * k2o)
        k4t = om + h * k3o
        k4o = acc(th + h * k3t, om + h * k3o)
        th = th + (h / 6.0) * (k1t + 2.0 * k2t + 2.0 * k3t + k4t)
        om = om + (h / 6.0) * (k1o + 2.0 * k2o + 2.0 * k3o + k4o)
    return np.stack([th, om], axis=-1)


def _box_inequality(
    torque_limit: float,
    theta_bounds: tuple[float, float],
    omega_bounds: tuple[float, float],
) -> VectorFn:
    """Componentwise ``g(x, u) <= 0`` encoding of box bounds on u, theta, omega."""

    def g(x: Array, u: Array) -> Array:
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        th = x[..., 0]
        om = x[..., 1]
        tq = u[..., 0]
        return np.stack(
            [
                tq - torque_limit,
                -torque_limit - tq,
                th - theta_bounds[1],
                theta_bounds[0] - th,
                om - omega_bounds[1],
                omega_bounds[0] - om,
            ],
            axis=-1,
        )

    return g


def builtin_min_time_pendulum(
    target_halfwidth: tuple[float, float] = (0.1, 0.1),
    params: PendulumParams | None = None,
    theta_bounds: tuple[float, float] = (-2.0, 3.5),
    omega_bounds: tuple[float, float] = (-1.5, 2.0),
    torque_limit: float = 1.0,
) -> ProblemDef:
    """Minimum-time swing-up to the upright position.

    The stage cost is 1 outside a rectangular target window around
    ``(pi, 0)`` and 0 strictly inside it, so the optimal cost-to-go counts
    samples until capture.  The window halfwidths are bound at construction
    time; ``target_halfwidth[i]`` applies to state component ``i`` and the
    window test is strict (``< halfwidth``) on both axes.

    ``lam`` is 0: the relaxed cost coincides with the stage cost.
    """
    if params is None:
        params = PendulumParams(damping=0.0)
    w_th, w_om = float(target_halfwidth[0]), float(target_halfwidth[1])
    if w_th <= 0.0 or w_om <= 0.0:
        raise ValueError("target halfwidths must be positive")

    def dynamics(x: Array, u: Array) -> Array:
        return pendulum_step(params, x, u)

    def stage_cost(x: Array, u: Array) -> Array:
        x = np.asarray(x, dtype=float)
        th = x[..., 0]
        om = x[..., 1]
        in_window = (np.abs(th - math.pi) < w_th) & (np.abs(om) < w_om)
        return np.where(in_window, 0.0, 1.0)

    def average_fn(x: Array, u: Array) -> Array:
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1], dtype=float)

    return ProblemDef(
        state_dim=2,
        control_dim=1,
        dynamics=dynamics,
        stage_cost=stage_cost,
        inequality=_box_inequality(torque_limit, theta_bounds, omega_bounds),
        average_fn=average_fn,
        lam=0.0,
        nominal_average=None,
    )


def builtin_avg_angle_pendulum(
    theta_ref: float,
    params: PendulumParams | None = None,
    theta_bounds: tuple[float, float] = (-1.0, 1.0),
    omega_bounds: tuple[float, float] = (-1.0, 1.0),
    torque_limit: float = 1.0,
) -> ProblemDef:
    """Minimum control effort subject to a prescribed long-run mean angle.

    The stage cost is ``u^2`` and the per-stage average output is ``theta``.
    The relaxation multiplier is the closed form for holding the damped
    pendulum at ``theta_ref``:

        lam = -2 (m g l)^2 sin(theta_ref) cos(theta_ref)

    which makes the relaxed stationary optimum sit at the torque
    ``u = m g l sin(theta_ref)`` balancing gravity.  ``theta_ref`` must be
    strictly interior to ``theta_bounds``.
    """
    if params is None:
        params = PendulumParams(damping=1.0)
    theta_ref = float(theta_ref)
    if not theta_bounds[0] < theta_ref < theta_bounds[1]:
        raise ValueError(
            f"theta_ref must lie strictly inside {theta_bounds}, got {theta_ref}"
        )
    mgl = params.mass * params.gravity * params.length
    lam = -2.0 * mgl**2 * math.sin(theta_ref) * math.cos(theta_ref)

    def dynamics(x: Array, u: Array) -> Array:
        return pendulum_step(params, x, u)

    def stage_cost(x: Array, u: Array) -> Array:
        u = np.asarray(u, dtype=float)
        return u[..., 0] ** 2

    def average_fn(x: Array, u: Array) -> Array:
        x = np.asarray(x, dtype=float)
        return x[..., 0]

    return ProblemDef(
        state_dim=2,
        control_dim=1,
        dynamics=dynamics,
        stage_cost=stage_cost,
        inequality=_box_inequality(torque_limit, theta_bounds, omega_bounds),
        average_fn=average_fn,
        lam=lam,
        nominal_average=theta_ref,
    )
