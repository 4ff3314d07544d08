"""Rigid-body kinematics, quaternion algebra and Newton-Euler accelerations.

Orientation conventions
-----------------------
3-D orientations are unit quaternions ``(w, x, y, z)`` that rotate reference
coordinates into the global frame, ``x = ybar + q o X``; the inverse map
``X = conj(q) o (x - ybar)`` takes a global point into the body frame. In 2-D
the orientation is a scalar angle ``theta`` with the same meaning, so the
reference map rotates the offset by ``-theta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import FixedBody, NonUnitAxis
from .geometry import ShapeDescriptor, mass_properties

# -- quaternions ---------------------------------------------------------------


def quaternion_from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    norm = np.linalg.norm(axis)
    if abs(norm - 1.0) > 1e-9:
        raise NonUnitAxis(f"rotation axis must be unit length, got |axis|={norm}")
    half = 0.5 * angle
    return np.concatenate([[math.cos(half)], axis * math.sin(half)])


def quat_mul(a, b):
    """Hamilton product, broadcasting over leading dimensions."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    aw, ax, ay, az = np.moveaxis(a, -1, 0)
    bw, bx, by, bz = np.moveaxis(b, -1, 0)
    return np.stack([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ], axis=-1)


def quat_conj(q):
    q = np.asarray(q, dtype=float)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def quat_normalize(q):
    q = np.asarray(q, dtype=float)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def quat_to_matrix(q):
    """Rotation matrix (or stack of them) for unit quaternion(s)."""
    q = np.asarray(q, dtype=float)
    w, x, y, z = np.moveaxis(q, -1, 0)
    R = np.stack([
        1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y),
    ], axis=-1)
    return R.reshape(q.shape[:-1] + (3, 3))


def rotate(q, x):
    """Rotate vector(s) ``x`` by unit quaternion(s) ``q``."""
    x = np.asarray(x, dtype=float)
    q = np.asarray(q, dtype=float)
    u = q[..., 1:]
    w = q[..., :1]
    t = 2.0 * np.cross(u, x)
    return x + w * t + np.cross(u, t)


def rot2(theta, x):
    """Rotate 2-D vector(s) by angle(s) ``theta``."""
    x = np.asarray(x, dtype=float)
    c, s = np.cos(theta), np.sin(theta)
    return np.stack([c * x[..., 0] - s * x[..., 1], s * x[..., 0] + c * x[..., 1]], axis=-1)


def cross_w(omega, r):
    """``omega x r``; ``omega`` is scalar per body in 2-D."""
    r = np.asarray(r, dtype=float)
    if r.shape[-1] == 2:
        omega = np.asarray(omega, dtype=float)
        return np.stack([-omega * r[..., 1], omega * r[..., 0]], axis=-1)
    return np.cross(omega, r)


def cross_r(r, f):
    """Torque ``r x f``; the scalar z-component in 2-D."""
    r = np.asarray(r, dtype=float)
    f = np.asarray(f, dtype=float)
    if r.shape[-1] == 2:
        return r[..., 0] * f[..., 1] - r[..., 1] * f[..., 0]
    return np.cross(r, f)


# -- poses -----------------------------------------------------------------------


@dataclass
class Pose:
    position: np.ndarray
    orientation: object  # float angle in 2-D, quaternion in 3-D

    @property
    def dim(self):
        return len(self.position)

    @classmethod
    def identity(cls, dim=3, position=None):
        pos = np.zeros(dim) if position is None else np.asarray(position, dtype=float)
        return cls(pos, 0.0 if dim == 2 else np.array([1.0, 0.0, 0.0, 0.0]))


def to_reference(pose: Pose, x):
    offset = np.asarray(x, dtype=float) - pose.position
    if pose.dim == 2:
        return rot2(-pose.orientation, offset)
    return rotate(quat_conj(pose.orientation), offset)


def from_reference(pose: Pose, X):
    X = np.asarray(X, dtype=float)
    if pose.dim == 2:
        return pose.position + rot2(pose.orientation, X)
    return pose.position + rotate(pose.orientation, X)


def rotate_to_global(pose: Pose, V):
    """Rotate a direction (no translation) from the body frame to global."""
    if pose.dim == 2:
        return rot2(pose.orientation, V)
    return rotate(pose.orientation, V)


def rotate_to_reference(pose: Pose, v):
    if pose.dim == 2:
        return rot2(-pose.orientation, v)
    return rotate(quat_conj(pose.orientation), v)


# -- body forces -----------------------------------------------------------------


@dataclass
class LoadContext:
    """State of a group of bodies handed to a body-force law."""

    positions: np.ndarray
    velocities: np.ndarray
    masses: np.ndarray
    volumes: np.ndarray
    reference: np.ndarray
    t: float


class BodyForce:
    """A force field acting on every body it is attached to.

    ``force`` is vectorized: it receives a :class:`LoadContext` over ``n``
    bodies and returns an ``(n, d)`` array.
    """

    def force(self, ctx: LoadContext) -> np.ndarray:
        raise NotImplementedError


@dataclass(eq=False)
class Gravity(BodyForce):
    acceleration: np.ndarray

    def force(self, ctx):
        return ctx.masses[:, None] * np.asarray(self.acceleration, dtype=float)[None, :]


@dataclass(eq=False)
class ConstantForce(BodyForce):
    value: np.ndarray

    def force(self, ctx):
        return np.broadcast_to(np.asarray(self.value, dtype=float), ctx.positions.shape).copy()


@dataclass(eq=False)
class ViscousDamping(BodyForce):
    """Mass-proportional drag ``-c m v``; used to relax toward static states."""

    coefficient: float

    def force(self, ctx):
        return -self.coefficient * ctx.masses[:, None] * ctx.velocities


@dataclass(eq=False)
class StripTraction(BodyForce):
    """Ramped body force per unit volume on two end strips of a plate.

    Bodies whose reference ``x`` exceeds ``x_high`` are pulled along ``+x`` and
    those below ``x_low`` along ``-x`` with density
    ``amplitude * (1 - exp(-rate * t))``.
    """

    amplitude: float = 3.0
    rate: float = 10.0
    x_low: float = 0.05
    x_high: float = 0.95

    def density(self, x_ref, t):
        ramp = self.amplitude * (1.0 - math.exp(-self.rate * t))
        x_ref = np.asarray(x_ref, dtype=float)
        return np.where(x_ref > self.x_high, ramp, np.where(x_ref < self.x_low, -ramp, 0.0))

    def force(self, ctx):
        out = np.zeros_like(ctx.positions)
        out[:, 0] = self.density(ctx.reference[:, 0], ctx.t) * ctx.volumes
        return out


# -- bodies ----------------------------------------------------------------------


@dataclass(eq=False)
class RigidBody:
    """Particle or material point carrying its own kinematic state.

    ``fixed`` bodies (walls, clamps, driven plates) skip the Newton-Euler
    update and translate at ``kinematic_velocity``. Bodies with
    ``rotates=False`` keep their orientation (peridynamic material points).
    """

    id: int
    shape: ShapeDescriptor
    density: float = 1.0
    position: np.ndarray = None
    velocity: np.ndarray = None
    orientation: object = None
    angular_velocity: object = None
    fixed: bool = False
    kinematic_velocity: np.ndarray = None
    body_forces: list = field(default_factory=list)
    group: int = -1
    rotates: bool = True
    mass: float = field(init=False)
    inertia_ref: object = field(init=False)
    volume: float = field(init=False)

    def __post_init__(self):
        d = self.shape.dim
        self.position = np.zeros(d) if self.position is None else np.asarray(self.position, dtype=float).copy()
        self.velocity = np.zeros(d) if self.velocity is None else np.asarray(self.velocity, dtype=float).copy()
        if self.orientation is None:
            self.orientation = 0.0 if d == 2 else np.array([1.0, 0.0, 0.0, 0.0])
        elif d == 3:
            self.orientation = quat_normalize(self.orientation)
        else:
            self.orientation = float(self.orientation)
        if self.angular_velocity is None:
            self.angular_velocity = 0.0 if d == 2 else np.zeros(3)
        elif d == 3:
            self.angular_velocity = np.asarray(self.angular_velocity, dtype=float).copy()
        else:
            self.angular_velocity = float(self.angular_velocity)
        if self.kinematic_velocity is None:
            self.kinematic_velocity = np.zeros(d)
        else:
            self.kinematic_velocity = np.asarray(self.kinematic_velocity, dtype=float).copy()
        if self.shape.is_finite:
            self.mass, self.inertia_ref, self.volume = mass_properties(self.shape, self.density)
        else:
            self.fixed = True
            self.mass, self.inertia_ref, self.volume = self.shape.mass_properties(self.density)
        self.reference_position = self.position.copy()
        self.force = np.zeros(d)
        self.torque = 0.0 if d == 2 else np.zeros(3)

    @property
    def dim(self):
        return self.shape.dim

    @property
    def pose(self) -> Pose:
        return Pose(self.position, self.orientation)

    def reset_loads(self):
        self.force = np.zeros(self.dim)
        self.torque = 0.0 if self.dim == 2 else np.zeros(3)

    def sdf(self, x):
        return self.shape.sdf(to_reference(self.pose, x))

    def inertia_global(self):
        if self.dim == 2:
            return self.inertia_ref
        R = quat_to_matrix(self.orientation)
        return R @ self.inertia_ref @ R.T

    def external_force(self, t=0.0):
        ctx = LoadContext(
            self.position[None, :], self.velocity[None, :], np.array([self.mass]),
            np.array([self.volume]), self.reference_position[None, :], t,
        )
        total = np.zeros(self.dim)
        for law in self.body_forces:
            total = total + law.force(ctx)[0]
        return total

    def kinetic_energy(self):
        e = 0.5 * self.mass * float(self.velocity @ self.velocity)
        if self.dim == 2:
            return e + 0.5 * self.inertia_ref * self.angular_velocity**2
        w = self.angular_velocity
        return e + 0.5 * float(w @ self.inertia_global() @ w)


def compute_accelerations(body: RigidBody, t: float = 0.0):
    """Translational and angular acceleration from the accumulated loads."""
    if body.fixed:
        raise FixedBody(f"body {body.id} is kinematic; it has no dynamics")
    vdot = (body.force + body.external_force(t)) / body.mass
    if not body.rotates:
        return vdot, 0.0 if body.dim == 2 else np.zeros(3)
    if body.dim == 2:
        return vdot, body.torque / body.inertia_ref
    I = body.inertia_global()
    w = body.angular_velocity
    wdot = np.linalg.solve(I, body.torque - np.cross(w, I @ w))
    return vdot, wdot


def apply_pair_load(body: RigidBody, F, contact_point):
    F = np.asarray(F, dtype=float)
    body.force = body.force + F
    body.torque = body.torque + cross_r(np.asarray(contact_point, dtype=float) - body.position, F)
