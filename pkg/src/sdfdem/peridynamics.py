"""Discrete state-based peridynamics and bonded Euler-Bernoulli beams.

Material points carry a reference position and a cell volume. Bonds are
stored once per unordered pair (``i < j``) in flat arrays, and every per-point
sum is a ``np.bincount`` over the two endpoint columns, so the reduction order
is fixed and results are reproducible.

Linear peridynamic solid, per bond ``i -> j`` with reference vector ``xi``:

    omega = exp(-|xi|^2 / delta^2)
    m_i   = sum_j omega |xi|^2 V_j
    theta = (3 / m_i) sum_j omega |xi| e V_j
    f_ij  = omega (3 k theta_i |xi| + 15 mu e^d_ij) / m_i,   e^d = e - theta |xi| / 3

and the pair force on ``i`` is ``(f_ij + f_ji) Yhat V_i V_j``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateDeformedBond, IsolatedPoint
from .neighbors import SpatialIndex
from .rigid_body import rotate, quat_conj

DEFORMED_TOL = 1e-12


@dataclass(frozen=True)
class LinearSolidMaterial:
    k: float
    mu: float
    delta: float
    s_c: float = 0.01
    volume: float = 1.0
    density: float = 1.0

    def __post_init__(self):
        if not (self.k > 0.0 and self.mu >= 0.0 and self.delta > 0.0 and self.s_c > 0.0):
            raise ValueError("require k > 0, mu >= 0, delta > 0 and s_c > 0")

    @property
    def handoff_stiffness(self) -> float:
        """Contact stiffness used between the two points of a broken bond."""
        return 18.0 * self.k / (math.pi * self.delta**4) * self.volume**2


def influence(xi_len, delta: float):
    return np.exp(-np.square(xi_len) / delta**2)


def bond_extension(x, x_prime, u, u_prime):
    x, x_prime = np.asarray(x, dtype=float), np.asarray(x_prime, dtype=float)
    deformed = (x_prime + np.asarray(u_prime, dtype=float)) - (x + np.asarray(u, dtype=float))
    return np.linalg.norm(deformed, axis=-1) - np.linalg.norm(x_prime - x, axis=-1)


class BondSet:
    """Horizon connectivity of a set of material points.

    Arrays ``i``, ``j`` (with ``i < j``), reference vectors ``xi`` and lengths,
    and a ``broken`` mask. Broken bonds never heal.
    """

    def __init__(self, points, volumes, delta: float, i, j):
        self.points = np.asarray(points, dtype=float)
        self.n = len(self.points)
        self.volumes = np.broadcast_to(np.asarray(volumes, dtype=float), (self.n,)).copy()
        self.delta = float(delta)
        self.i = np.asarray(i, dtype=int)
        self.j = np.asarray(j, dtype=int)
        self.xi = self.points[self.j] - self.points[self.i]
        self.length = np.linalg.norm(self.xi, axis=1)
        self.omega = influence(self.length, self.delta)
        self.broken = np.zeros(len(self.i), dtype=bool)
        self.weighted_volume = self._weighted_volume()

    def __len__(self):
        return len(self.i)

    def _point_sum(self, w_i, w_j):
        """``sum over bonds`` of ``w_i`` onto endpoint i and ``w_j`` onto j."""
        return np.bincount(self.i, w_i, minlength=self.n) + np.bincount(self.j, w_j, minlength=self.n)

    def _weighted_volume(self):
        live = ~self.broken
        base = live * self.omega * self.length**2
        return self._point_sum(base * self.volumes[self.j], base * self.volumes[self.i])

    def refresh(self):
        self.weighted_volume = self._weighted_volume()

    def bonds_of(self, point: int):
        """Indices of live bonds touching ``point``."""
        return np.nonzero(((self.i == point) | (self.j == point)) & ~self.broken)[0]

    def bond_count(self):
        live = (~self.broken).astype(float)
        return self._point_sum(live, live).astype(int)

    def broken_count(self):
        b = self.broken.astype(float)
        return self._point_sum(b, b).astype(int)


def build_horizon(points, volumes, delta: float) -> BondSet:
    """Bond every pair of points with ``0 < |x_j - x_i| <= delta``."""
    if not delta > 0.0:
        raise ValueError("horizon must be positive")
    pts = np.asarray(points, dtype=float)
    if len(pts) < 2:
        return BondSet(pts, volumes, delta, [], [])
    index = SpatialIndex(pts)
    # pad the open-ball query so bonds at exactly delta are kept, then filter
    qi, pj = index.radius_query_batch(pts, np.full(len(pts), delta * (1.0 + 1e-12) + 1e-300))
    keep = qi < pj
    qi, pj = qi[keep], pj[keep]
    d = np.linalg.norm(pts[pj] - pts[qi], axis=1)
    keep = (d > 0.0) & (d <= delta)
    return BondSet(pts, volumes, delta, qi[keep], pj[keep])


def weighted_volume(point: int, bonds: BondSet) -> float:
    idx = bonds.bonds_of(point)
    if len(idx) == 0:
        raise IsolatedPoint(f"point {point} has no intact bonds")
    other = np.where(bonds.i[idx] == point, bonds.j[idx], bonds.i[idx])
    return float(np.sum(bonds.omega[idx] * bonds.length[idx] ** 2 * bonds.volumes[other]))


def _extensions(bonds: BondSet, displacements):
    u = np.asarray(displacements, dtype=float)
    Y = bonds.xi + u[bonds.j] - u[bonds.i]
    return Y, np.linalg.norm(Y, axis=1) - bonds.length


def _dilations(bonds: BondSet, e):
    live = ~bonds.broken
    base = live * bonds.omega * bonds.length * e
    s = bonds._point_sum(base * bonds.volumes[bonds.j], base * bonds.volumes[bonds.i])
    m = bonds.weighted_volume
    return np.divide(3.0 * s, m, out=np.zeros_like(s), where=m > 0.0)


def dilation(point: int, bonds: BondSet, displacements) -> float:
    m = weighted_volume(point, bonds)
    _, e = _extensions(bonds, displacements)
    idx = bonds.bonds_of(point)
    other = np.where(bonds.i[idx] == point, bonds.j[idx], bonds.i[idx])
    return float(3.0 / m * np.sum(bonds.omega[idx] * bonds.length[idx] * e[idx] * bonds.volumes[other]))


def linear_solid_scalar_state(xi_len, theta, e, m, material: LinearSolidMaterial):
    """Scalar force state ``f`` of one bond as seen from the point with
    dilation ``theta`` and weighted volume ``m``."""
    w = influence(xi_len, material.delta)
    e_dev = e - theta * xi_len / 3.0
    return w * (3.0 * material.k * theta * xi_len + 15.0 * material.mu * e_dev) / m


def bond_pair_forces(bonds: BondSet, displacements, material: LinearSolidMaterial):
    """Per-bond force ``eta V_i V_j`` acting on endpoint ``i`` (``-`` on ``j``)."""
    Y, e = _extensions(bonds, displacements)
    Ylen = np.linalg.norm(Y, axis=1)
    live = ~bonds.broken
    if np.any(Ylen[live] < DEFORMED_TOL):
        k = int(np.nonzero(live & (Ylen < DEFORMED_TOL))[0][0])
        raise DegenerateDeformedBond(
            f"bond ({bonds.i[k]}, {bonds.j[k]}) collapsed to length {Ylen[k]:.3g}"
        )
    theta = _dilations(bonds, e)
    m = bonds.weighted_volume
    m_i = np.where(m[bonds.i] > 0.0, m[bonds.i], 1.0)
    m_j = np.where(m[bonds.j] > 0.0, m[bonds.j], 1.0)
    f_ij = linear_solid_scalar_state(bonds.length, theta[bonds.i], e, m_i, material)
    f_ji = linear_solid_scalar_state(bonds.length, theta[bonds.j], e, m_j, material)
    scale = np.where(live, (f_ij + f_ji) * bonds.volumes[bonds.i] * bonds.volumes[bonds.j], 0.0)
    Yhat = Y / np.where(Ylen > 0.0, Ylen, 1.0)[:, None]
    return scale[:, None] * Yhat


def assemble_peridynamic_forces(bonds: BondSet, displacements, material: LinearSolidMaterial):
    """Internal force on every material point."""
    eta = bond_pair_forces(bonds, displacements, material)
    d = bonds.points.shape[1]
    out = np.empty((bonds.n, d))
    for k in range(d):
        out[:, k] = np.bincount(bonds.i, eta[:, k], minlength=bonds.n) - np.bincount(
            bonds.j, eta[:, k], minlength=bonds.n
        )
    return out


def apply_fracture(bonds: BondSet, displacements, s_c: float):
    """Break every live bond stretched beyond ``s_c``; return the new pairs."""
    if not s_c > 0.0:
        raise ValueError("critical stretch must be positive")
    _, e = _extensions(bonds, displacements)
    stretch = e / bonds.length
    newly = (~bonds.broken) & (stretch > s_c)
    if newly.any():
        bonds.broken |= newly
        bonds.refresh()
    idx = np.nonzero(newly)[0]
    return [(int(bonds.i[k]), int(bonds.j[k])) for k in idx]


# -- bonded beams ----------------------------------------------------------------------


@dataclass(frozen=True)
class BeamBondMaterial:
    """Elastic beam joining two material points.

    ``I`` is the bending second moment, ``A`` the section area and ``r`` the
    bond radius. Torsion uses ``G J`` with ``G = E / (2 (1 + nu))`` and the
    polar moment ``J = 2 I`` unless given.
    """

    E: float
    I: float
    A: float
    r: float
    nu: float = 0.3
    J: float = None

    def __post_init__(self):
        if not (self.E > 0.0 and self.I > 0.0 and self.A > 0.0 and self.r > 0.0):
            raise ValueError("beam material parameters must be positive")

    @classmethod
    def circular(cls, E: float, r: float, nu: float = 0.3):
        return cls(E=E, I=math.pi * r**4 / 4.0, A=math.pi * r**2, r=r, nu=nu)

    @property
    def G(self):
        return self.E / (2.0 * (1.0 + self.nu))

    @property
    def polar(self):
        return 2.0 * self.I if self.J is None else self.J


@dataclass
class BeamBondSet:
    """Beam bonds with their reference geometry.

    In 2-D the reference state is the chord angle and the endpoint angles; in
    3-D it is the bond direction and a perpendicular twist marker, both stored
    in each endpoint's body frame.
    """

    i: np.ndarray
    j: np.ndarray
    length: np.ndarray
    material: BeamBondMaterial
    dim: int
    chord0: np.ndarray = None
    theta_i0: np.ndarray = None
    theta_j0: np.ndarray = None
    d_i: np.ndarray = None
    d_j: np.ndarray = None
    p_i: np.ndarray = None
    p_j: np.ndarray = None
    broken: np.ndarray = field(default=None)

    def __len__(self):
        return len(self.i)


def make_beam_bonds(positions, orientations, pairs, material: BeamBondMaterial) -> BeamBondSet:
    """Record the reference geometry of beams joining ``pairs`` of points."""
    pos = np.asarray(positions, dtype=float)
    pairs = np.asarray(pairs, dtype=int).reshape(-1, 2)
    i, j = pairs[:, 0], pairs[:, 1]
    Y = pos[j] - pos[i]
    length = np.linalg.norm(Y, axis=1)
    if np.any(length <= 0.0):
        raise DegenerateDeformedBond("beam bond between coincident points")
    dim = pos.shape[1]
    bs = BeamBondSet(i, j, length, material, dim, broken=np.zeros(len(i), dtype=bool))
    if dim == 2:
        th = np.asarray(orientations, dtype=float)
        bs.chord0 = np.arctan2(Y[:, 1], Y[:, 0])
        bs.theta_i0, bs.theta_j0 = th[i].copy(), th[j].copy()
        return bs
    q = np.asarray(orientations, dtype=float)
    e = Y / length[:, None]
    # any unit vector orthogonal to the bond marks the twist
    helper = np.where(np.abs(e[:, :1]) < 0.9, np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0]))
    p = np.cross(e, helper)
    p /= np.linalg.norm(p, axis=1, keepdims=True)
    bs.d_i, bs.d_j = rotate(quat_conj(q[i]), e), rotate(quat_conj(q[j]), e)
    bs.p_i, bs.p_j = rotate(quat_conj(q[i]), p), rotate(quat_conj(q[j]), p)
    return bs


def _wrap(angle):
    return (angle + np.pi) % (2.0 * np.pi) - np.pi


def beam_bond_loads(bonds: BeamBondSet, positions, orientations):
    """Forces and torques ``(F_i, F_j, tau_i, tau_j)`` of every beam bond.

    The loads are the exact negative gradients of the bond energy

        U = EA/(2 l0) (l - l0)^2 + (2 EI / l0)(b_i.b_i + b_i.b_j + b_j.b_j) + GJ/(2 l0) s^2

    where ``b`` measures each end's rotation away from the current chord and
    ``s`` the relative twist. Because ``U`` is invariant under rigid motion,
    the two ends carry equal-opposite forces and balanced moments.
    """
    mat = bonds.material
    pos = np.asarray(positions, dtype=float)
    Y = pos[bonds.j] - pos[bonds.i]
    l = np.linalg.norm(Y, axis=1)
    if np.any(l < DEFORMED_TOL):
        raise DegenerateDeformedBond("beam bond collapsed to zero length")
    e = Y / l[:, None]
    l0 = bonds.length
    axial = mat.E * mat.A * (l - l0) / l0
    cb = 2.0 * mat.E * mat.I / l0

    if bonds.dim == 2:
        th = np.asarray(orientations, dtype=float)
        chord_rot = _wrap(np.arctan2(Y[:, 1], Y[:, 0]) - bonds.chord0)
        phi_i = _wrap(th[bonds.i] - bonds.theta_i0 - chord_rot)
        phi_j = _wrap(th[bonds.j] - bonds.theta_j0 - chord_rot)
        M_i = cb * (2.0 * phi_i + phi_j)
        M_j = cb * (2.0 * phi_j + phi_i)
        n = np.stack([-e[:, 1], e[:, 0]], axis=1)
        dU_dY = axial[:, None] * e - ((M_i + M_j) / l)[:, None] * n
        return dU_dY, -dU_dY, -M_i, -M_j

    q = np.asarray(orientations, dtype=float)
    qi, qj = q[bonds.i], q[bonds.j]
    a_i, a_j = rotate(qi, bonds.d_i), rotate(qj, bonds.d_j)
    b_i, b_j = np.cross(e, a_i), np.cross(e, a_j)
    g_i = cb[:, None] * (2.0 * b_i + b_j)
    g_j = cb[:, None] * (2.0 * b_j + b_i)
    M_i = np.cross(a_i, np.cross(g_i, e))
    M_j = np.cross(a_j, np.cross(g_j, e))
    w = np.cross(a_i, g_i) + np.cross(a_j, g_j)

    p_i, p_j = rotate(qi, bonds.p_i), rotate(qj, bonds.p_j)
    pxp = np.cross(p_i, p_j)
    s = np.einsum("ij,ij->i", e, pxp)
    ct = (mat.G * mat.polar / l0 * s)[:, None]
    ep_i = np.einsum("ij,ij->i", e, p_i)[:, None]
    ep_j = np.einsum("ij,ij->i", e, p_j)[:, None]
    pp = np.einsum("ij,ij->i", p_i, p_j)[:, None]
    M_i = M_i + ct * (ep_i * p_j - pp * e)
    M_j = M_j + ct * (pp * e - ep_j * p_i)
    w = w + ct * pxp

    # project onto the plane orthogonal to the chord: d e = P dY / l
    w_perp = w - np.einsum("ij,ij->i", w, e)[:, None] * e
    dU_dY = axial[:, None] * e + w_perp / l[:, None]
    return dU_dY, -dU_dY, -M_i, -M_j
