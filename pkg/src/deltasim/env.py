"""Offline simulation environment: hand + world stepped on a virtual clock.

One step advances the actuators toward a 12-joint desired position and
resolves world contacts, both at the policy rate (20 Hz). Deterministic:
identical (task, seed, command sequence) reproduces identical states.
"""

from __future__ import annotations

import numpy as np

from .bus import VirtualClock
from .hand import ActuatorModel, HandLayout, HandState, actuator_step
from .world import Scene, TaskSpec, render_inhand, task_reset, task_success, world_step

__all__ = ["SimEnv"]


class SimEnv:
    def __init__(
        self,
        task: TaskSpec,
        layout: HandLayout = HandLayout(),
        actuator: ActuatorModel = ActuatorModel(),
        rate_hz: float = 20.0,
    ):
        self.task = task
        self.layout = layout
        self.actuator = actuator
        self.dt = 1.0 / rate_hz
        self.clock = VirtualClock()
        self.hand: HandState | None = None
        self.scene: Scene | None = None

    def reset(self, seed: int) -> None:
        self.clock = VirtualClock()
        self.hand = HandState.rest(self.layout)
        self.scene = task_reset(self.task, seed)
        # Establish the fingertip discs before the first observation.
        self.scene = world_step(self.scene, self.hand.fingertips, self.dt)

    @property
    def t(self) -> float:
        return self.clock.now()

    def observe(self) -> tuple[np.ndarray, np.ndarray]:
        """(in-hand image uint8 (32, 32), joints (12,) mm)."""
        return render_inhand(self.scene).pixels, self.hand.joints.copy()

    def step(self, desired: np.ndarray) -> None:
        self.hand = actuator_step(self.hand, desired, self.dt, self.actuator)
        self.scene = world_step(self.scene, self.hand.fingertips, self.dt)
        self.clock.advance(self.dt)

    def success(self) -> bool:
        return task_success(self.task, self.scene)
