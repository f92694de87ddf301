"""Closed-form kinematics for one linear-delta finger.

The finger is a parallel mechanism: three sliders ride parallel rails
aligned with +z, mounted at ``base_radius`` from the finger axis at the
``rail_angles``. Rigid links of ``link_length`` connect each slider to a
common point fingertip, so the tip position is the intersection of three
spheres centered on the sliders.

Conventions: lengths in mm, angles in radians internally (degrees only in
the geometry dataclass, which mirrors the config file). Joint vectors have
shape (3,) and fingertip points shape (3,); every operation also accepts a
leading batch dimension, i.e. (n, 3) in and (n, 3) out.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NoSolution, Singular, Unreachable

__all__ = [
    "FingerGeometry",
    "finger_fk",
    "finger_ik",
    "finger_reachable",
    "finger_jacobian",
    "finger_workspace_sample",
]


@dataclass(frozen=True)
class FingerGeometry:
    """Geometric constants of one finger.

    The effector is modeled as a point: any physical effector-platform
    radius is absorbed into ``base_radius``.
    """

    base_radius: float = 20.0
    link_length: float = 40.0
    stroke: float = 20.0
    rail_angles_deg: tuple[float, float, float] = (0.0, 120.0, 240.0)

    def __post_init__(self):
        if not (self.link_length > self.base_radius > 0.0):
            raise ValueError("require link_length > base_radius > 0")
        if self.stroke <= 0.0:
            raise ValueError("stroke must be positive")
        angles = [a % 360.0 for a in self.rail_angles_deg]
        if len(set(angles)) != 3:
            raise ValueError("rail angles must be distinct modulo 360")

    @property
    def rail_bases(self) -> np.ndarray:
        """(3, 2) xy positions of the rails in the finger frame."""
        ang = np.deg2rad(np.asarray(self.rail_angles_deg, dtype=float))
        return self.base_radius * np.stack([np.cos(ang), np.sin(ang)], axis=1)


def _as_batch(x, name: str) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    squeeze = arr.ndim == 1
    if squeeze:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"{name} must have shape (3,) or (n, 3)")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr, squeeze


def finger_fk(geom: FingerGeometry, joints) -> np.ndarray:
    """Fingertip position for given slider positions.

    Solves the three-sphere intersection (trilateration) and returns the
    branch with the larger z, i.e. the tip ahead of the sliders.

    Raises NoSolution if the spheres do not intersect.
    """
    s, squeeze = _as_batch(joints, "joints")
    bases = geom.rail_bases
    # Sphere centers: rail base xy lifted to the slider height.
    c = np.empty((s.shape[0], 3, 3))
    c[:, :, :2] = bases[None, :, :]
    c[:, :, 2] = s

    c1, c2, c3 = c[:, 0], c[:, 1], c[:, 2]
    ex = c2 - c1
    d = np.linalg.norm(ex, axis=1)
    if np.any(d <= 0):
        raise NoSolution("coincident sphere centers")
    ex = ex / d[:, None]
    v13 = c3 - c1
    i = np.einsum("ij,ij->i", ex, v13)
    ey = v13 - i[:, None] * ex
    j = np.linalg.norm(ey, axis=1)
    if np.any(j <= 0):
        raise NoSolution("collinear sphere centers")
    ey = ey / j[:, None]
    ez = np.cross(ex, ey)

    # Equal radii L for all three spheres.
    L2 = geom.link_length**2
    x = d / 2.0
    y = (i * i + j * j - 2.0 * i * x) / (2.0 * j)
    h2 = L2 - x * x - y * y
    bad = h2 < -1e-12 * L2
    if np.any(bad):
        raise NoSolution(f"spheres do not intersect for rows {np.flatnonzero(bad)}")
    h = np.sqrt(np.maximum(h2, 0.0))

    base = c1 + x[:, None] * ex + y[:, None] * ey
    p_up = base + h[:, None] * ez
    p_dn = base - h[:, None] * ez
    p = np.where((p_up[:, 2] >= p_dn[:, 2])[:, None], p_up, p_dn)
    return p[0] if squeeze else p


def finger_ik(geom: FingerGeometry, point) -> np.ndarray:
    """Slider positions that place the fingertip at ``point``.

    Per-leg closed form, tip-ahead-of-slider branch:
    ``s_i = p_z - sqrt(L^2 - |p_xy - b_i|^2)``. The result is NOT clamped
    to the stroke; use finger_reachable to test that separately.

    Raises Unreachable if any leg's radicand is negative.
    """
    p, squeeze = _as_batch(point, "point")
    bases = geom.rail_bases
    diff = p[:, None, :2] - bases[None, :, :]  # (n, 3, 2)
    r2 = geom.link_length**2 - np.einsum("nij,nij->ni", diff, diff)
    bad = r2 < 0.0
    if np.any(bad):
        rows, legs = np.nonzero(bad)
        raise Unreachable(f"target beyond link length (row {rows[0]}, leg {legs[0]})")
    s = p[:, 2:3] - np.sqrt(r2)
    return s[0] if squeeze else s


def finger_reachable(geom: FingerGeometry, point, tol: float = 1e-9) -> np.ndarray | bool:
    """True where ``point`` is reachable with sliders inside the stroke."""
    p, squeeze = _as_batch(point, "point")
    bases = geom.rail_bases
    diff = p[:, None, :2] - bases[None, :, :]
    r2 = geom.link_length**2 - np.einsum("nij,nij->ni", diff, diff)
    ok = np.all(r2 >= 0.0, axis=1)
    s = p[:, 2:3] - np.sqrt(np.maximum(r2, 0.0))
    ok &= np.all((s >= -tol) & (s <= geom.stroke + tol), axis=1)
    return bool(ok[0]) if squeeze else ok


def finger_jacobian(geom: FingerGeometry, joints) -> np.ndarray:
    """d(tip)/d(sliders), the 3x3 Jacobian at ``joints``.

    Obtained by differentiating the sphere constraints: with sphere
    centers c_i, the rows A_i = (p - c_i) satisfy A @ J = diag(p_z - s_i).

    Raises Singular when cond(A) > 1e12.
    """
    s = np.asarray(joints, dtype=float)
    if s.shape != (3,):
        raise ValueError("joints must have shape (3,)")
    p = finger_fk(geom, s)
    bases = geom.rail_bases
    centers = np.column_stack([bases, s])
    A = p[None, :] - centers
    if np.linalg.cond(A) > 1e12:
        raise Singular("kinematic constraints are rank-deficient at this pose")
    B = np.diag(p[2] - s)
    return np.linalg.solve(A, B)


def finger_workspace_sample(geom: FingerGeometry, n: int, seed: int) -> np.ndarray:
    """FK images of ``n`` joint vectors drawn uniformly from the stroke cube.

    Deterministic per seed; returns an (n, 3) array of fingertip points.
    """
    if n <= 0:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(seed)
    joints = rng.uniform(0.0, geom.stroke, size=(n, 3))
    return finger_fk(geom, joints)
