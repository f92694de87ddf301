"""Four delta fingers assembled into a hand, plus actuator tracking.

Hand frame: z shared with every finger frame (fingers parallel, pointing
toward the manipulation plane), fingers mounted on a circle of
``mount_radius`` at the ``mount_angles``. Finger i's frame is rotated about
z by its mount angle and translated to its mount point, so the assembly is
rotationally symmetric.

Joint vectors ``q`` hold 12 values in finger-major order (finger 0 legs
0-2, finger 1 legs 0-2, ...), each in [0, stroke] mm. This 12-vector is
the canonical state and action representation everywhere downstream.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .kinematics import FingerGeometry, finger_fk, finger_ik

__all__ = ["HandLayout", "ActuatorModel", "HandState", "hand_fk", "hand_ik", "actuator_step"]


@dataclass(frozen=True)
class HandLayout:
    """Mounting geometry of the four fingers."""

    geometry: FingerGeometry = field(default_factory=FingerGeometry)
    mount_radius: float = 40.0
    mount_angles_deg: tuple[float, ...] = (0.0, 90.0, 180.0, 270.0)

    def __post_init__(self):
        if len(self.mount_angles_deg) != 4:
            raise ValueError("hand has exactly four fingers")
        if len({a % 360.0 for a in self.mount_angles_deg}) != 4:
            raise ValueError("mount angles must be distinct")

    @property
    def finger_count(self) -> int:
        return 4

    def mount_xy(self, i: int) -> np.ndarray:
        a = np.deg2rad(self.mount_angles_deg[i])
        return self.mount_radius * np.array([np.cos(a), np.sin(a)])

    def rotation(self, i: int) -> np.ndarray:
        """World-from-finger rotation about z for finger i."""
        a = np.deg2rad(self.mount_angles_deg[i])
        ca, sa = np.cos(a), np.sin(a)
        return np.array([[ca, -sa, 0.0], [sa, ca, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class ActuatorModel:
    """Proportional position tracking with a speed cap.

    The real actuators run a PID loop whose gains are not public; a
    proportional term plus a rate limit reproduces the observable contract
    (bounded-rate convergence to the desired position, no overshoot).
    """

    max_speed: float = 40.0  # mm/s
    control_rate: float = 33.0  # Hz
    proportional_gain: float = 20.0  # 1/s

    def __post_init__(self):
        if min(self.max_speed, self.control_rate, self.proportional_gain) <= 0:
            raise ValueError("actuator parameters must be positive")


def _check_q(q) -> np.ndarray:
    arr = np.asarray(q, dtype=float)
    if arr.shape != (12,):
        raise ValueError("hand joints must have shape (12,)")
    if not np.all(np.isfinite(arr)):
        raise ValueError("hand joints must be finite")
    return arr


def hand_fk(layout: HandLayout, q) -> np.ndarray:
    """(4, 3) fingertip positions in the hand frame for 12 joints."""
    q = _check_q(q)
    tips = np.empty((4, 3))
    for i in range(4):
        local = finger_fk(layout.geometry, q[3 * i : 3 * i + 3])
        tips[i] = layout.rotation(i) @ local
        tips[i, :2] += layout.mount_xy(i)
    return tips


def hand_ik(layout: HandLayout, tips) -> np.ndarray:
    """12 joints placing the four fingertips at ``tips`` (hand frame, (4, 3)).

    Unclamped, like finger_ik; raises Unreachable when a tip is out of reach.
    """
    tips = np.asarray(tips, dtype=float)
    if tips.shape != (4, 3):
        raise ValueError("tips must have shape (4, 3)")
    q = np.empty(12)
    for i in range(4):
        local = tips[i].copy()
        local[:2] -= layout.mount_xy(i)
        local = layout.rotation(i).T @ local
        q[3 * i : 3 * i + 3] = finger_ik(layout.geometry, local)
    return q


@dataclass
class HandState:
    """Joint state plus cached forward kinematics.

    Mutated by exactly one simulation thread; share copies elsewhere.
    ``fingertips`` always equals hand_fk(joints).
    """

    layout: HandLayout
    joints: np.ndarray
    desired: np.ndarray
    fingertips: np.ndarray

    @classmethod
    def at(cls, layout: HandLayout, joints) -> "HandState":
        q = np.clip(_check_q(joints), 0.0, layout.geometry.stroke)
        return cls(layout, q, q.copy(), hand_fk(layout, q))

    @classmethod
    def rest(cls, layout: HandLayout) -> "HandState":
        """All sliders at mid-stroke."""
        return cls.at(layout, np.full(12, layout.geometry.stroke / 2.0))

    def copy(self) -> "HandState":
        return HandState(self.layout, self.joints.copy(), self.desired.copy(), self.fingertips.copy())


def actuator_step(state: HandState, desired, dt: float, model: ActuatorModel = ActuatorModel()) -> HandState:
    """Advance the actuators toward ``desired`` over ``dt`` seconds.

    q' = q + clamp(gain * (desired - q) * dt, +-max_speed * dt), then
    clamped to the stroke; desired itself is clamped before use. Returns a
    new HandState with the fingertip cache refreshed.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    stroke = state.layout.geometry.stroke
    target = np.clip(_check_q(desired), 0.0, stroke)
    step = model.proportional_gain * (target - state.joints) * dt
    cap = model.max_speed * dt
    q = state.joints + np.clip(step, -cap, cap)
    q = np.clip(q, 0.0, stroke)
    return HandState(state.layout, q, target, hand_fk(state.layout, q))
