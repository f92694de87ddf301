"""Receding-horizon policy deployment, scripted experts, and DAgger.

The scripted experts stand in for the human teleoperator so data
collection and the acceptance suite run unattended. They are memoryless
functions of the scene (plus the current joints, used only to hold
position after success): every call computes fingertip targets from the
object's world-frame faces, converts them through inverse kinematics, and
clamps to the stroke.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bus import EpisodeMeta, SyncFrame
from .dataset import Episode, denormalize, normalize
from .env import SimEnv
from .errors import AlignmentViolation, Unreachable
from .hand import HandLayout
from .kinematics import finger_ik, finger_reachable
from .world import Scene, TaskSpec, wrap_symmetric

__all__ = [
    "RolloutConfig",
    "RolloutResult",
    "ReplayPolicy",
    "ScriptedExpert",
    "rollout",
    "rollout_many",
    "collect_expert_episode",
    "DaggerConfig",
    "dagger_collect",
]

Z_TIP = 42.0  # working height for expert fingertip targets, mm
DISC_R = 5.0
PARK = 54.0  # parked fingertips sit at this radius, clear of the tasks' objects


@dataclass(frozen=True)
class RolloutConfig:
    max_steps: int = 1667  # one capped episode at the downsampled-equivalent rate
    rate_hz: float = 20.0


@dataclass
class RolloutResult:
    frames: list[SyncFrame]
    success: bool
    steps: int
    seed: int


# --- fingertip target -> joint conversion ------------------------------------


def targets_to_joints(layout: HandLayout, targets_xyz: np.ndarray) -> np.ndarray:
    """IK for four (x, y, z) fingertip targets, clamped to stroke.

    Unreachable targets are walked toward the finger mount until a leg
    solution exists; the stroke clamp then bounds the commanded joints.
    """
    geom = layout.geometry
    q = np.empty(12)
    for i in range(4):
        mount = layout.mount_xy(i)
        local = np.array([targets_xyz[i][0] - mount[0], targets_xyz[i][1] - mount[1], targets_xyz[i][2]])
        local[:2] = layout.rotation(i)[:2, :2].T @ local[:2]
        for shrink in range(12):
            try:
                s = finger_ik(geom, local)
                break
            except Unreachable:
                local[:2] *= 0.8
        else:
            s = np.full(3, geom.stroke / 2.0)
        q[3 * i : 3 * i + 3] = np.clip(s, 0.0, geom.stroke)
    return q


Z_OPTIONS = (42.0, 40.0, 38.0, 44.0, 46.0, 36.0, 48.0)


def _finger_for(layout: HandLayout, target_xy: np.ndarray) -> tuple[int, float] | None:
    """Closest finger (and a working height) whose workspace contains the
    target; the finger's reach blob varies with z, so several heights are
    tried. Returns (finger index, z) or None."""
    order = np.argsort([np.linalg.norm(target_xy - layout.mount_xy(i)) for i in range(4)])
    for i in order:
        local_xy = layout.rotation(i)[:2, :2].T @ (target_xy - layout.mount_xy(i))
        for z in Z_OPTIONS:
            if finger_reachable(layout.geometry, [local_xy[0], local_xy[1], z]):
                return int(i), float(z)
    return None


def _concave_vertices(verts: np.ndarray) -> np.ndarray:
    prev = verts - np.roll(verts, 1, axis=0)
    nxt = np.roll(verts, -1, axis=0) - verts
    cross = prev[:, 0] * nxt[:, 1] - prev[:, 1] * nxt[:, 0]
    return verts[cross < 0.0]


def _clear_of(pt: np.ndarray, bad: np.ndarray, margin: float = 6.5) -> bool:
    return bad.size == 0 or bool(np.min(np.linalg.norm(bad - pt, axis=1)) > margin)


def _edge_iter(verts: np.ndarray):
    for a, b in zip(verts, np.roll(verts, -1, axis=0)):
        e = b - a
        length = float(np.linalg.norm(e))
        if length <= 8.0:
            continue
        n = np.array([e[1], -e[0]]) / length
        yield a, e, n, length


def _cross2(u, v) -> float:
    return float(u[0] * v[1] - u[1] * v[0])


def _zero_torque_point(a: np.ndarray, e: np.ndarray, n: np.ndarray, centroid: np.ndarray) -> np.ndarray:
    """Point on the edge where the push line passes through the centroid
    (clamped to the edge interior), so the push produces no spin."""
    denom = _cross2(e, n)
    t = 0.5 if abs(denom) < 1e-9 else _cross2(centroid - a, n) / denom
    return a + np.clip(t, 0.15, 0.85) * e


# --- scripted experts ---------------------------------------------------------


class ScriptedExpert:
    """Deterministic demonstration source for both planar tasks."""

    def __init__(self, task: TaskSpec, layout: HandLayout = HandLayout()):
        self.task = task
        self.layout = layout
        self._park = np.array(
            [
                [PARK * np.cos(np.deg2rad(a)), PARK * np.sin(np.deg2rad(a)), Z_TIP]
                for a in layout.mount_angles_deg
            ]
        )

    def __call__(self, scene: Scene, joints: np.ndarray) -> np.ndarray:
        from .world import task_success

        if task_success(self.task, scene):
            return joints.copy()  # hold position at the goal
        if self.task.kind == "BlockSlide":
            targets = self._block_slide_targets(scene)
        else:
            targets = self._shape_insert_targets(scene)
        return targets_to_joints(self.layout, targets)

    # BlockSlide: the right finger pushes the block's right end toward the
    # hand center while the top/bottom pair works the tapered long faces as
    # a funnel, squeezing alternately to keep it centered and feed it left.
    def _block_slide_targets(self, scene: Scene) -> np.ndarray:
        obj = scene.free_object()
        verts = obj.world_vertices()
        centroid = obj.world_centroid()
        tips = scene.fingertip_discs
        targets = self._park.copy()
        theta = float(obj.pose[2])

        # Pusher: contact point on the right end face (edge v0 -> v1) at the
        # centroid height, offset along the face normal (torque-free push
        # that stays on the face even when the block is rotated).
        fx = float(verts[:, 0].max())
        end_a, end_b = verts[0], verts[1]
        if fx > 22.0:
            y_lo, y_hi = sorted((end_a[1], end_b[1]))
            cy = float(np.clip(centroid[1], max(y_lo + 4.0, -8.0), min(y_hi - 4.0, 8.0)))
            face_x = float(np.interp(cy, *zip(*sorted([(end_a[1], end_a[0]), (end_b[1], end_b[0])]))))
            e = end_b - end_a
            n = np.array([e[1], -e[0]]) / np.linalg.norm(e)
            push = np.array([face_x, cy]) + n * (DISC_R - 1.5)
            targets[0] = (push[0], push[1], Z_TIP)

        # Funnel squeeze on the tapered long faces. The gate offset from the
        # centroid cancels the taper torque; the theta term steers residual
        # rotation back to zero. Approach is staged: align x while clear of
        # the block, then descend, so travel never clips a corner.
        top_a, top_b = verts[1], verts[2]
        bot_a, bot_b = verts[3], verts[0]
        y_clear_top = float(verts[:, 1].max()) + DISC_R + 2.0
        y_clear_bot = float(verts[:, 1].min()) - DISC_R - 2.0
        lo = max(min(top_a[0], top_b[0]), min(bot_a[0], bot_b[0])) + 3.0
        hi = min(max(top_a[0], top_b[0]), max(bot_a[0], bot_b[0])) - 3.0
        pen = 1.2

        def staged(finger: int, gate: float, engage_y: float, clear_y: float):
            if abs(tips[finger][0] - gate) > 1.5:
                targets[finger] = (gate, clear_y, Z_TIP)
            else:
                targets[finger] = (gate, engage_y, Z_TIP)

        gate_top = float(np.clip(centroid[0] + 5.5 + 30.0 * theta, -12.0, 12.0))
        gate_bot = float(np.clip(centroid[0] + 5.5 - 30.0 * theta, -12.0, 12.0))
        if lo <= hi:
            gate_top = float(np.clip(gate_top, lo, hi))
            gate_bot = float(np.clip(gate_bot, lo, hi))
            y_top = float(np.interp(gate_top, *zip(*sorted([(top_a[0], top_a[1]), (top_b[0], top_b[1])]))))
            y_bot = float(np.interp(gate_bot, *zip(*sorted([(bot_a[0], bot_a[1]), (bot_b[0], bot_b[1])]))))
            if centroid[1] >= 0.0:
                staged(1, gate_top, y_top + DISC_R - pen, y_clear_top)
                targets[3] = (gate_bot, y_clear_bot, Z_TIP)
            else:
                staged(3, gate_bot, y_bot - DISC_R + pen, y_clear_bot)
                targets[1] = (gate_top, y_clear_top, Z_TIP)
        return targets

    # ShapeInsert: waypoint pushing. While the orientation is off, steer the
    # object to a staging point where one petal reaches into a finger's
    # workspace (petals pointing diagonally are untouchable: the blobs sit
    # on the axes), rotate it there, then push it onto the goal.
    def _shape_insert_targets(self, scene: Scene) -> np.ndarray:
        obj = scene.free_object()
        verts = obj.world_vertices()
        centroid = obj.world_centroid()
        targets = self._park.copy()
        goal = np.asarray(self.task.goal_pose)

        theta = float(obj.pose[2] - goal[2])
        ang_err = wrap_symmetric(theta, obj.symmetry_order)
        need_rotation = abs(ang_err) > 0.5 * self.task.ang_tol
        nav = self._rotation_waypoints(theta, obj)[0] if need_rotation else goal[:2]

        pos_err = obj.pose[:2] - nav
        dist = float(np.linalg.norm(pos_err))
        concave = _concave_vertices(verts)

        if dist > 2.5:
            # Translation with as little spin as possible: on each usable
            # face prefer the contact whose push line passes through the
            # centroid, falling back to other points along the face.
            away = pos_err / dist
            candidates = []
            for a, e, n, _ in _edge_iter(verts):
                score = float(n @ away)
                if score < 0.3:
                    continue
                pts = [_zero_torque_point(a, e, n, centroid)]
                pts += [a + t * e for t in (0.35, 0.5, 0.65, 0.2, 0.8)]
                for pt in pts:
                    if not _clear_of(pt, concave):
                        continue
                    arm = pt - centroid
                    residual = abs(_cross2(arm, n)) / max(float(np.linalg.norm(arm)), 1e-9)
                    candidates.append((score - 0.5 * residual, pt, n))
            for _, pt, n in sorted(candidates, key=lambda c: -c[0]):
                if self._try_push(targets, pt, n, pen=1.5):
                    return targets
        if need_rotation:
            want = -np.sign(ang_err)
            candidates = []
            for a, e, n, _ in _edge_iter(verts):
                for t in (0.08, 0.2, 0.35, 0.5, 0.65, 0.8, 0.92):
                    pt = a + t * e
                    if not _clear_of(pt, concave):
                        continue
                    arm = pt - centroid
                    lever = float(np.linalg.norm(arm))
                    if lever < 1e-6:
                        continue
                    torque = _cross2(arm, -n) / lever
                    candidates.append((want * torque, pt, n))
            for score, pt, n in sorted(candidates, key=lambda c: -c[0]):
                if score < 0.25:
                    break
                if self._try_push(targets, pt, n, pen=1.2):
                    return targets
        return targets

    def _rotation_waypoints(self, theta: float, obj) -> list[np.ndarray]:
        """Object positions from which some petal tip enters a finger blob,
        nearest first."""
        radius = float(np.max(np.linalg.norm(obj.vertices, axis=1)))
        period = 2.0 * np.pi / max(obj.symmetry_order, 1)
        offsets = []
        for k in range(max(obj.symmetry_order, 1)):
            arm = theta + k * period
            arm_u = np.array([np.cos(arm), np.sin(arm)])
            for a in range(4):
                axis_u = np.array([np.cos(a * np.pi / 2.0), np.sin(a * np.pi / 2.0)])
                offsets.append(radius * (axis_u - arm_u))
        offsets.sort(key=lambda o: float(np.linalg.norm(o)))
        return [np.clip(o, -13.0, 13.0) for o in offsets]

    def _try_push(self, targets: np.ndarray, mid: np.ndarray, n: np.ndarray, pen: float) -> bool:
        disc_center = mid + n * (DISC_R - pen)
        hit = _finger_for(self.layout, disc_center)
        if hit is None:
            return False
        finger, z = hit
        targets[finger] = (disc_center[0], disc_center[1], z)
        return True


# --- rollouts -----------------------------------------------------------------


def _episode_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=(0xD5, seed)))


class _ObsBuffer:
    """Keeps the last To observations, normalized for the policy."""

    def __init__(self, policy):
        self.To = policy.window.obs_horizon
        self.stats = policy.stats
        self.images: list[np.ndarray] = []
        self.joints: list[np.ndarray] = []

    def push(self, image_u8: np.ndarray, joints_mm: np.ndarray):
        self.images.append(image_u8.astype(np.float32) / 255.0)
        self.joints.append(
            normalize(joints_mm, self.stats.joints_min, self.stats.joints_max).astype(np.float32)
        )
        if len(self.images) > self.To:
            self.images.pop(0)
            self.joints.pop(0)

    def stacked(self) -> tuple[np.ndarray, np.ndarray]:
        imgs, js = self.images, self.joints
        while len(imgs) < self.To:  # clamp-pad at episode start, like training
            imgs = [imgs[0]] + imgs
            js = [js[0]] + js
        return np.stack(imgs), np.stack(js)


def rollout(policy, env: SimEnv, cfg: RolloutConfig, seed: int) -> RolloutResult:
    """Deploy a policy: predict a chunk, execute Ta actions, re-plan."""
    return rollout_many(policy, [env], cfg, [seed])[0]


def rollout_many(policy, envs: list[SimEnv], cfg: RolloutConfig, seeds: list[int]) -> list[RolloutResult]:
    """Lockstep batched rollouts; per-episode rng streams are independent of
    the batch composition, so results match one-at-a-time deployment."""
    Ta = policy.window.exec_horizon
    stats = policy.stats
    results = []
    buffers = []
    rngs = [_episode_rng(s) for s in seeds]
    for env, seed in zip(envs, seeds):
        env.reset(seed)
        buf = _ObsBuffer(policy)
        img, joints = env.observe()
        buf.push(img, joints)
        buffers.append(buf)
        results.append(RolloutResult(frames=[], success=False, steps=0, seed=seed))

    alive = list(range(len(envs)))
    while alive:
        images = np.stack([buffers[i].stacked()[0] for i in alive])
        joints = np.stack([buffers[i].stacked()[1] for i in alive])
        chunks = policy.sample(images, joints, [rngs[i] for i in alive])
        for row, i in enumerate(alive):
            chunk_mm = denormalize(chunks[row][:Ta], stats.actions_min, stats.actions_max)
            env, res, buf = envs[i], results[i], buffers[i]
            # A chunk always runs to completion unless the task succeeds;
            # max_steps gates re-planning, not mid-chunk execution.
            for a in chunk_mm:
                img, q = env.observe()
                res.frames.append(
                    SyncFrame(env.t, q.astype(np.float32), a.astype(np.float32), img)
                )
                env.step(a)
                buf.push(*env.observe())
                res.steps += 1
                if env.success():
                    res.success = True
                    break
        alive = [i for i in alive if not results[i].success and results[i].steps < cfg.max_steps]
    return results


class ReplayPolicy:
    """Replays a recorded episode's actions through the policy interface.

    Stateful (keeps a cursor into the episode), so deploy it one episode at
    a time via rollout(); it is the oracle for closed-loop evaluation and
    the CLI's replay path.
    """

    algo = "replay"

    def __init__(self, episode: Episode, window=None):
        from .dataset import NormStats, WindowConfig

        self.episode = episode
        self.window = window or WindowConfig(downsample_factor=1)
        actions = episode.actions.astype(float)
        lo = actions.min(axis=0)
        hi = actions.max(axis=0)
        self.stats = NormStats(lo, hi, lo, hi)
        self._cursor = 0

    def sample(self, images, joints, rng) -> np.ndarray:
        Ta = self.window.exec_horizon
        Tp = self.window.pred_horizon
        idx = np.clip(np.arange(self._cursor, self._cursor + Tp), 0, len(self.episode) - 1)
        chunk = self.episode.actions[idx].astype(float)
        self._cursor += Ta
        out = normalize(chunk, self.stats.actions_min, self.stats.actions_max)
        return out[None, :, :].astype(np.float32)


# --- expert data collection ----------------------------------------------------


def collect_expert_episode(
    task: TaskSpec, seed: int, max_steps: int = 1667, layout: HandLayout = HandLayout()
) -> Episode:
    """Run the scripted expert to success (or the step cap) and record."""
    env = SimEnv(task, layout)
    env.reset(seed)
    expert = ScriptedExpert(task, layout)
    frames = []
    success = False
    for _ in range(max_steps):
        img, q = env.observe()
        desired = expert(env.scene, q)
        frames.append(SyncFrame(env.t, q.astype(np.float32), desired.astype(np.float32), img))
        env.step(desired)
        if env.success():
            success = True
            img, q = env.observe()
            frames.append(SyncFrame(env.t, q.astype(np.float32), q.astype(np.float32), img))
            break
    meta = EpisodeMeta(task=task.kind, source="expert", success=success, seed=seed)
    return Episode.from_frames(frames, meta)


# --- DAgger --------------------------------------------------------------------


@dataclass(frozen=True)
class DaggerConfig:
    stall_window: int = 40  # steps with no joint motion that count as a stall
    stall_tol: float = 0.05  # mm
    pause_budget: int = 400  # pause unconditionally after this many steps
    freeze_steps: int = 5  # settle ticks between pause and takeover
    correction_cap: int = 1200
    align_tol: float = 0.01  # mm


def dagger_collect(
    policy,
    task: TaskSpec,
    seeds: list[int],
    cfg: DaggerConfig = DaggerConfig(),
    rollout_cfg: RolloutConfig = RolloutConfig(),
    layout: HandLayout = HandLayout(),
) -> list[Episode]:
    """Run the policy per seed; when it stalls or times out, pause, align the
    correction source to the current joints, and record the expert finishing
    the task. Returns corrective episodes (source="dagger"); successful
    policy runs contribute nothing."""
    expert = ScriptedExpert(task, layout)
    Ta = policy.window.exec_horizon
    stats = policy.stats
    corrections = []
    for seed in seeds:
        env = SimEnv(task, layout)
        env.reset(seed)
        rng = _episode_rng(seed)
        buf = _ObsBuffer(policy)
        img, q = env.observe()
        buf.push(img, q)
        joint_history = [q]
        steps = 0
        paused = False
        while steps < rollout_cfg.max_steps and not env.success():
            images, joints = buf.stacked()
            chunk = policy.sample(images[None], joints[None], [rng])[0]
            chunk_mm = denormalize(chunk[:Ta], stats.actions_min, stats.actions_max)
            for a in chunk_mm:
                env.step(a)
                buf.push(*env.observe())
                joint_history.append(env.hand.joints.copy())
                steps += 1
                if env.success() or steps >= rollout_cfg.max_steps:
                    break
            recent = joint_history[-cfg.stall_window :]
            stalled = (
                len(recent) == cfg.stall_window
                and np.max(np.abs(np.diff(np.stack(recent), axis=0))) < cfg.stall_tol
            )
            if stalled or steps >= cfg.pause_budget:
                paused = True
                break
        if env.success() or not paused:
            continue

        # Pause: freeze the desired joints and let the actuators settle.
        for _ in range(cfg.freeze_steps):
            env.step(env.hand.desired)

        # Align: the correction source snaps its targets to the current
        # joints; the first corrective action must match them exactly.
        takeover_joints = env.hand.joints.copy()
        first_action = takeover_joints.copy()
        if np.max(np.abs(first_action - takeover_joints)) > cfg.align_tol:
            raise AlignmentViolation("teleop takeover targets deviate from current joints")

        frames = []
        img, q = env.observe()
        frames.append(SyncFrame(env.t, q.astype(np.float32), first_action.astype(np.float32), img))
        env.step(first_action)
        success = False
        for _ in range(cfg.correction_cap):
            img, q = env.observe()
            desired = expert(env.scene, q)
            frames.append(SyncFrame(env.t, q.astype(np.float32), desired.astype(np.float32), img))
            env.step(desired)
            if env.success():
                success = True
                break
        meta = EpisodeMeta(task=task.kind, source="dagger", success=success, seed=seed)
        corrections.append(Episode.from_frames(frames, meta))
    return corrections
