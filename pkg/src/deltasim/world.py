"""Quasi-static planar manipulation world.

Rigid 2D polygons live in the hand-plane frame (x right, y up, origin at
the hand center). Fingertips act on them as contact discs: each world step
projects the fingertip points to the plane and resolves any disc-polygon
penetration by translating the object along the minimal translation vector
and rotating it about its centroid in proportion to the contact torque.
Inertia is ignored; objects only move to resolve contact.

Every operation is a deterministic function of its inputs, so identical
fingertip trajectories reproduce bit-identical scenes and renders.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np

log = logging.getLogger(__name__)

__all__ = [
    "RigidObject2D",
    "Scene",
    "TaskSpec",
    "InHandImage",
    "world_step",
    "render_inhand",
    "task_reset",
    "task_success",
    "block_slide_task",
    "shape_insert_task",
    "cross_polygon",
    "diamond_polygon",
]

# Contact resolution knobs.
ROTATION_GAIN = 0.5  # rad per (mm penetration x normalized tangential arm)
ROTATION_CAP = 0.1  # rad per world step
MAX_ITERATIONS = 8
CONVERGED_CORRECTION = 1e-3  # mm
NONCONVERGENCE_CORRECTION = 0.1  # mm


def _rot2(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def polygon_signed_area(verts: np.ndarray) -> float:
    x, y = verts[:, 0], verts[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def polygon_centroid(verts: np.ndarray) -> np.ndarray:
    x, y = verts[:, 0], verts[:, 1]
    cross = x * np.roll(y, -1) - np.roll(x, -1) * y
    area = 0.5 * np.sum(cross)
    cx = np.sum((x + np.roll(x, -1)) * cross) / (6.0 * area)
    cy = np.sum((y + np.roll(y, -1)) * cross) / (6.0 * area)
    return np.array([cx, cy])


def points_in_polygon(points: np.ndarray, verts: np.ndarray) -> np.ndarray:
    """Even-odd rule, vectorized over an (N, 2) point array."""
    x, y = points[:, 0, None], points[:, 1, None]
    x1, y1 = verts[None, :, 0], verts[None, :, 1]
    x2, y2 = np.roll(verts[:, 0], -1)[None, :], np.roll(verts[:, 1], -1)[None, :]
    straddles = (y1 > y) != (y2 > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        x_cross = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
    hits = straddles & (x < x_cross)
    return np.sum(hits, axis=1) % 2 == 1


def closest_boundary_point(c: np.ndarray, verts: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """Closest point on the polygon boundary to ``c``.

    Returns (point, outward_edge_normal_of_the_closest_edge, distance).
    """
    a = verts
    b = np.roll(verts, -1, axis=0)
    e = b - a
    ee = np.einsum("ij,ij->i", e, e)
    t = np.clip(np.einsum("ij,ij->i", c[None, :] - a, e) / ee, 0.0, 1.0)
    proj = a + t[:, None] * e
    d2 = np.einsum("ij,ij->i", c[None, :] - proj, c[None, :] - proj)
    k = int(np.argmin(d2))
    # CCW winding: outward normal of edge (a -> b) is (e_y, -e_x).
    n = np.array([e[k, 1], -e[k, 0]])
    n /= np.linalg.norm(n)
    return proj[k], n, float(np.sqrt(d2[k]))


@dataclass
class RigidObject2D:
    """A rigid polygon: body-frame vertices plus a planar pose."""

    vertices: np.ndarray  # (V, 2) body frame, CCW
    pose: np.ndarray  # (x mm, y mm, theta rad)
    friction_class: Literal["free", "fixed"] = "free"
    symmetry_order: int = 1  # rotational symmetry of the shape (k-fold)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)
        self.pose = np.asarray(self.pose, dtype=float)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2 or len(self.vertices) < 3:
            raise ValueError("vertices must have shape (V>=3, 2)")
        if polygon_signed_area(self.vertices) < 0:
            self.vertices = self.vertices[::-1].copy()
        if abs(polygon_signed_area(self.vertices)) <= 1.0:
            raise ValueError("degenerate polygon (area <= 1 mm^2)")
        if self.pose.shape != (3,) or not np.all(np.isfinite(self.pose)):
            raise ValueError("pose must be 3 finite values")

    def world_vertices(self) -> np.ndarray:
        return self.vertices @ _rot2(self.pose[2]).T + self.pose[:2]

    def world_centroid(self) -> np.ndarray:
        return polygon_centroid(self.world_vertices())

    def copy(self) -> "RigidObject2D":
        return RigidObject2D(self.vertices.copy(), self.pose.copy(), self.friction_class, self.symmetry_order)


@dataclass
class Scene:
    """Objects plus the fingertip contact discs, all in the plane frame."""

    objects: list[RigidObject2D]
    fingertip_discs: np.ndarray = field(default_factory=lambda: np.zeros((4, 2)))  # (4, 2) centers
    disc_radius: float = 5.0
    bounds: tuple[float, float, float, float] = (-56.0, -56.0, 56.0, 56.0)
    nonconverged_steps: int = 0

    def __post_init__(self):
        self.fingertip_discs = np.asarray(self.fingertip_discs, dtype=float)
        if self.disc_radius <= 0:
            raise ValueError("disc radius must be positive")
        if sum(o.friction_class == "free" for o in self.objects) > 1:
            raise ValueError("at most one free object per scene")

    def copy(self) -> "Scene":
        return Scene(
            [o.copy() for o in self.objects],
            self.fingertip_discs.copy(),
            self.disc_radius,
            self.bounds,
            self.nonconverged_steps,
        )

    def free_object(self) -> RigidObject2D | None:
        for o in self.objects:
            if o.friction_class == "free":
                return o
        return None


def _resolve_disc(obj: RigidObject2D, c: np.ndarray, radius: float, rot_applied: float) -> tuple[float, float]:
    """Push ``obj`` out of one disc. Returns (correction mm, rotation delta)."""
    verts = obj.world_vertices()
    q, edge_n, d = closest_boundary_point(c, verts)
    inside = bool(points_in_polygon(c[None, :], verts)[0])
    if inside:
        sd = -d
        n = edge_n if d < 1e-12 else (q - c) / d
    else:
        sd = d
        if d < 1e-12:
            n = edge_n
        else:
            n = (c - q) / d
    pen = radius - sd
    if pen <= 0.0:
        return 0.0, 0.0

    # Translate the object away from the disc along the contact normal.
    push = -n * pen
    centroid = obj.world_centroid()
    obj.pose[:2] += push

    # Torque of the push applied at the contact point about the centroid.
    # The net step rotation stays within +-ROTATION_CAP: each contact's
    # contribution is clamped so the signed accumulator cannot leave the
    # band (symmetric squeezes cancel instead of one side eating the cap).
    arm = q - centroid
    arm_len = np.linalg.norm(arm)
    dtheta = 0.0
    if arm_len > 1e-9:
        torque = (arm[0] * (-n[1]) - arm[1] * (-n[0])) / arm_len
        dtheta = float(np.clip(
            ROTATION_GAIN * pen * torque,
            -ROTATION_CAP - rot_applied,
            ROTATION_CAP - rot_applied,
        ))
        if dtheta != 0.0:
            # Rotate about the (translated) centroid, not the pose origin.
            g = centroid + push
            obj.pose[2] += dtheta
            obj.pose[:2] = g + _rot2(dtheta) @ (obj.pose[:2] - g)
    return pen, dtheta


def world_step(scene: Scene, fingertips: np.ndarray, dt: float) -> Scene:
    """Advance the scene with fingertips at the given (4, 3) hand-frame points.

    Only the xy projection of the fingertips matters. Free objects are
    pushed out of every penetrating disc; contacts are iterated to a fixed
    point (at most 8 passes or until the largest correction falls below
    1e-3 mm). Fixed objects never move.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    tips = np.asarray(fingertips, dtype=float)
    if tips.shape == (4, 3):
        tips = tips[:, :2]
    if tips.shape != (4, 2):
        raise ValueError("fingertips must have shape (4, 3) or (4, 2)")

    out = scene.copy()
    out.fingertip_discs = tips.copy()
    obj = out.free_object()
    if obj is None:
        return out

    rot_applied = 0.0
    last_corr = 0.0
    for _ in range(MAX_ITERATIONS):
        last_corr = 0.0
        for c in out.fingertip_discs:
            pen, rot = _resolve_disc(obj, c, out.disc_radius, rot_applied)
            rot_applied += rot
            last_corr = max(last_corr, pen)
        if last_corr < CONVERGED_CORRECTION:
            break
    else:
        if last_corr > NONCONVERGENCE_CORRECTION:
            out.nonconverged_steps += 1
            log.warning("contact resolution did not converge (last correction %.3f mm)", last_corr)
    return out


@dataclass(frozen=True)
class InHandImage:
    """Monochrome top-down render centered on the hand."""

    pixels: np.ndarray  # (height, width) uint8
    mm_per_px: float = 3.5

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


IMAGE_SIZE = 32
MM_PER_PX = 3.5
BACKGROUND = 0
OBJECT_SHADE = 128
DISC_SHADE = 255


def render_inhand(scene: Scene, size: int = IMAGE_SIZE, mm_per_px: float = MM_PER_PX) -> InHandImage:
    """Orthographic rasterization: objects at 128, discs at 255 on black.

    Pixel (row, col) covers the plane point
    x = (col - (size-1)/2) * mm_per_px, y = ((size-1)/2 - row) * mm_per_px,
    so the image center coincides with the hand center.
    """
    half = (size - 1) / 2.0
    cols, rows = np.meshgrid(np.arange(size), np.arange(size))
    px = (cols - half) * mm_per_px
    py = (half - rows) * mm_per_px
    pts = np.stack([px.ravel(), py.ravel()], axis=1)

    img = np.zeros(size * size, dtype=np.uint8)
    for obj in scene.objects:
        img[points_in_polygon(pts, obj.world_vertices())] = OBJECT_SHADE
    for c in scene.fingertip_discs:
        d2 = (pts[:, 0] - c[0]) ** 2 + (pts[:, 1] - c[1]) ** 2
        img[d2 <= scene.disc_radius**2] = DISC_SHADE
    return InHandImage(img.reshape(size, size), mm_per_px)


TIMG_MAGIC = b"TIMG"


def timg_write(path, image: InHandImage) -> None:
    """Golden-image file: 16-byte header (magic, width, height, reserved) + raw bytes."""
    import struct

    with open(path, "wb") as f:
        f.write(TIMG_MAGIC)
        f.write(struct.pack("<III", image.width, image.height, 0))
        f.write(image.pixels.tobytes())


def timg_read(path) -> np.ndarray:
    import struct

    from .errors import CorruptFile

    with open(path, "rb") as f:
        header = f.read(16)
        if len(header) < 16 or header[:4] != TIMG_MAGIC:
            raise CorruptFile("bad TIMG header", offset=0)
        w, h, _ = struct.unpack("<III", header[4:16])
        data = f.read(w * h)
        if len(data) != w * h:
            raise CorruptFile("truncated TIMG payload", offset=16 + len(data))
        return np.frombuffer(data, dtype=np.uint8).reshape(h, w)


# --- task definitions -------------------------------------------------------

BLOCK_HALF_LEN = 11.0  # x half-extent of the slide block
BLOCK_HALF_H = 30.0  # y half-extent at the block middle
BLOCK_TAPER = 0.22  # dy/dx of the long faces (taller on the left)


def block_polygon(
    half_len: float = BLOCK_HALF_LEN, half_h: float = BLOCK_HALF_H, taper: float = BLOCK_TAPER
) -> np.ndarray:
    """Tapered slide block: a symmetric trapezoid, taller on the left.

    The slightly slanted long faces give the top and bottom fingers a
    leftward push component anywhere along the block, and squeezing both
    faces self-centers it; the hand-center region itself is outside every
    fingertip's reach, so a straight-sided block could not be pushed
    through it.
    """
    h_r = half_h - taper * half_len
    h_l = half_h + taper * half_len
    return np.array([[half_len, -h_r], [half_len, h_r], [-half_len, h_l], [-half_len, -h_l]])


def cross_polygon(arm_half_width: float = 10.0, arm_half_length: float = 32.0) -> np.ndarray:
    """Four-petal plus shape used for the insert task (4-fold symmetric)."""
    a, b = arm_half_width, arm_half_length
    return np.array(
        [
            [b, a], [a, a], [a, b], [-a, b], [-a, a], [-b, a],
            [-b, -a], [-a, -a], [-a, -b], [a, -b], [a, -a], [b, -a],
        ]
    )


def diamond_polygon(half_long: float = 32.0, half_short: float = 14.0) -> np.ndarray:
    """Elongated rhombus (2-fold symmetric)."""
    return np.array([[half_long, 0.0], [0.0, half_short], [-half_long, 0.0], [0.0, -half_short]])


@dataclass(frozen=True)
class TaskSpec:
    """Task goal parameters and reset distribution."""

    kind: Literal["BlockSlide", "ShapeInsert"]
    goal_x: float = 0.0  # BlockSlide: success line for the block's max-x vertex
    goal_pose: tuple[float, float, float] = (0.0, 0.0, 0.0)
    pos_tol: float = 5.0  # mm
    ang_tol: float = 0.2  # rad
    shape: Literal["flower", "diamond"] = "flower"

    def __post_init__(self):
        if self.pos_tol <= 0 or self.ang_tol <= 0:
            raise ValueError("tolerances must be positive")


def block_slide_task() -> TaskSpec:
    return TaskSpec(kind="BlockSlide")


def shape_insert_task(shape: str = "flower") -> TaskSpec:
    return TaskSpec(kind="ShapeInsert", shape=shape)


def _object_for(task: TaskSpec, pose: np.ndarray) -> RigidObject2D:
    if task.kind == "BlockSlide":
        return RigidObject2D(block_polygon(), pose, "free", symmetry_order=2)
    if task.shape == "flower":
        return RigidObject2D(cross_polygon(), pose, "free", symmetry_order=4)
    return RigidObject2D(diamond_polygon(), pose, "free", symmetry_order=2)


def task_reset(task: TaskSpec, seed: int) -> Scene:
    """Deterministic per-seed initial scene for the task."""
    rng = np.random.default_rng(seed)
    if task.kind == "BlockSlide":
        for _ in range(1000):
            pose = np.array([rng.uniform(5.0, 25.0), rng.uniform(-5.0, 5.0), 0.0])
            scene = Scene([_object_for(task, pose)])
            if not task_success(task, scene):
                return scene
        raise RuntimeError("could not draw a non-successful reset")
    pose = np.array(
        [rng.uniform(-15.0, 15.0), rng.uniform(-15.0, 15.0), rng.uniform(-np.pi / 4, np.pi / 4)]
    )
    return Scene([_object_for(task, pose)])


def wrap_symmetric(angle: float, order: int) -> float:
    """Wrap an angle into the fundamental domain of a k-fold symmetry."""
    period = 2.0 * np.pi / max(order, 1)
    return float((angle + period / 2.0) % period - period / 2.0)


def task_success(task: TaskSpec, scene: Scene) -> bool:
    obj = scene.free_object()
    if obj is None:
        return False
    if task.kind == "BlockSlide":
        return bool(np.max(obj.world_vertices()[:, 0]) <= task.goal_x)
    goal = np.asarray(task.goal_pose)
    pos_err = float(np.linalg.norm(obj.pose[:2] - goal[:2]))
    ang_err = abs(wrap_symmetric(obj.pose[2] - goal[2], obj.symmetry_order))
    return pos_err <= task.pos_tol and ang_err <= task.ang_tol
