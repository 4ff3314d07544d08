"""Time integration: velocity Verlet for rigid bodies, midpoint RK2 for
everything else, and the generic time-dependent state abstraction."""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from .errors import SchemaError
from .rigid_body import (
    RigidBody,
    compute_accelerations,
    quat_mul,
    quat_normalize,
)


class StateObject(ABC):
    """Anything that evolves as ``ds/dt = rhs(s, t)`` alongside the bodies."""

    state: np.ndarray

    @abstractmethod
    def rhs(self, state: np.ndarray, t: float) -> np.ndarray:
        ...

    def post_step(self, t: float) -> None:
        """Hook run once the step is complete (resets, renormalization)."""


class ScalarRateState(StateObject):
    """A scalar ``R`` evolving by a user rate law ``g(R, t, **params)``.

    The canonical use is a growing or shrinking sphere radius; ``on_change`` is
    invoked after every step with the new value so the owner can swap in a
    rebuilt shape.
    """

    def __init__(self, value: float, rate, params=None, on_change=None):
        self.state = np.array([float(value)])
        self.rate = rate
        self.params = dict(params or {})
        self.on_change = on_change

    @property
    def value(self) -> float:
        return float(self.state[0])

    def rhs(self, state, t):
        return np.array([float(self.rate(float(state[0]), t, **self.params))])

    def post_step(self, t):
        if self.on_change is not None:
            self.on_change(self.value)


def constant_rate(value, t, rate=0.0):
    """Rate law ``dR/dt = rate``."""
    return rate


@dataclass(frozen=True)
class StepPlan:
    dt: float
    t_end: float
    output_interval: float

    def __post_init__(self):
        errors = []
        if not self.dt > 0.0:
            errors.append(f"dt: must be positive, got {self.dt}")
        if not self.output_interval >= self.dt:
            errors.append(f"output_interval: must be >= dt, got {self.output_interval}")
        if not self.t_end >= self.output_interval:
            errors.append(f"t_end: must be >= output_interval, got {self.t_end}")
        if errors:
            raise SchemaError(errors)

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    @property
    def output_every(self) -> int:
        return max(1, int(round(self.output_interval / self.dt)))


def rk2_step(state: StateObject, t: float, dt: float) -> np.ndarray:
    """Advance ``state`` in place with the midpoint rule and return the new vector."""
    s = np.asarray(state.state, dtype=float)
    half = s + 0.5 * dt * np.asarray(state.rhs(s, t), dtype=float)
    new = s + dt * np.asarray(state.rhs(half, t + 0.5 * dt), dtype=float)
    state.state = new
    return new


def quaternion_increment(q, omega, omega_dot, dt):
    """Second-order orientation update followed by renormalization."""
    w = np.asarray(omega, dtype=float) + 0.5 * dt * np.asarray(omega_dot, dtype=float)
    pure = np.concatenate([np.zeros(np.shape(w)[:-1] + (1,)), w], axis=-1)
    return quat_normalize(q + 0.5 * dt * quat_mul(pure, q))


def verlet_step(body: RigidBody, dt: float, accelerations=None, t: float = 0.0):
    """One velocity-Verlet step of a single body.

    ``accelerations`` is a callable ``body -> (vdot, wdot)`` evaluated at the
    current state and again after the drift; it defaults to the body's own
    accumulated loads. Fixed bodies drift at their kinematic velocity.
    """
    if body.fixed:
        body.velocity = body.kinematic_velocity.copy()
        body.position = body.position + dt * body.kinematic_velocity
        return body
    accel = accelerations if accelerations is not None else (lambda b: compute_accelerations(b, t))
    a0, alpha0 = accel(body)
    body.position = body.position + dt * body.velocity + 0.5 * dt * dt * a0
    if body.dim == 2:
        body.orientation = body.orientation + dt * body.angular_velocity + 0.5 * dt * dt * alpha0
    else:
        body.orientation = quaternion_increment(body.orientation, body.angular_velocity, alpha0, dt)
    # the second kick needs forces at the new configuration
    v_old, w_old = body.velocity, body.angular_velocity
    body.velocity = v_old + dt * a0
    body.angular_velocity = w_old + dt * alpha0
    a1, alpha1 = accel(body)
    body.velocity = v_old + 0.5 * dt * (a0 + a1)
    body.angular_velocity = w_old + 0.5 * dt * (alpha0 + alpha1)
    return body


def advance_simulation(simulation, plan: StepPlan, observers=None, progress=None, sink=None):
    """Run ``simulation`` over ``plan`` and return the observer records.

    ``simulation`` is anything exposing ``t``, ``step(dt)`` and ``is_empty``
    (the engine in :mod:`sdfdem.simulation`). Observers are callables
    ``(simulation, t) -> list[record]`` fired every ``plan.output_interval``.
    When ``sink`` is given, each firing's records are handed to it instead of
    being collected, and an empty list is returned.
    """
    observers = list(observers or [])
    records = []
    if simulation.is_empty:
        return records

    def fire():
        batch = []
        for obs in observers:
            batch.extend(obs(simulation, simulation.t))
        if sink is None:
            records.extend(batch)
        else:
            sink(batch)

    fire()
    every = plan.output_every
    for k in range(1, plan.n_steps + 1):
        simulation.step(plan.dt)
        if k % every == 0:
            fire()
            if progress is not None:
                progress(k, simulation)
    return records
