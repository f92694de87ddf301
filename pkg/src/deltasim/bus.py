"""Timestamped multi-rate streams, synchronization, and episode recording.

An in-process publish/subscribe bus stands in for the middleware: topics
are registered with a nominal rate, publishers stamp samples with a
monotonic clock (virtual in simulation, wall clock live), and a consumer
aligns the streams onto the joint-state master clock with the
latest-no-later rule before recording.

Episode files are little-endian binary: magic "TEPS", version u32,
manifest_len u32, manifest JSON, frame_count u64, then per frame
t f64, joints 12xf32, action 12xf32, image bytes.
"""

from __future__ import annotations

import bisect
import json
import struct
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Iterable

import numpy as np

from .errors import CorruptFile, EmptyStream, MonotonicityViolation, UnknownTopic

__all__ = [
    "StampedSample",
    "StreamRates",
    "SyncFrame",
    "Bus",
    "VirtualClock",
    "synchronize",
    "EpisodeMeta",
    "record",
    "replay",
    "MAX_EPISODE_FRAMES",
]

MAX_EPISODE_FRAMES = 5000  # collection cap per demonstration


@dataclass(frozen=True)
class StreamRates:
    """Nominal stream frequencies, Hz."""

    joint_state: float = 20.0
    control: float = 33.0
    slider: float = 133.0
    inhand_camera: float = 30.0
    external_camera: float = 10.0

    def __post_init__(self):
        if min(vars(self).values()) <= 0:
            raise ValueError("rates must be positive")

    def as_dict(self) -> dict[str, float]:
        return dict(vars(self))


@dataclass(frozen=True)
class StampedSample:
    t: float
    topic: str
    payload: Any


@dataclass(frozen=True)
class SyncFrame:
    """One time-aligned record: joints are the master clock."""

    t: float
    joints: np.ndarray  # (12,) mm
    action: np.ndarray  # (12,) mm, desired joints in force at t
    image: np.ndarray  # (h, w) uint8


class VirtualClock:
    """Deterministic clock advanced explicitly by the simulation loop."""

    def __init__(self, t0: float = 0.0):
        self._t = float(t0)

    def now(self) -> float:
        return self._t

    def advance(self, dt: float) -> float:
        self._t += dt
        return self._t


class _TopicBuffer:
    def __init__(self, rate: float, retain_s: float):
        self.rate = rate
        self.capacity = max(int(np.ceil(rate * retain_s)), 2)
        self.lock = threading.Lock()
        self.samples: list[StampedSample] = []

    def append(self, sample: StampedSample):
        with self.lock:
            if self.samples and sample.t < self.samples[-1].t:
                raise MonotonicityViolation(
                    f"{sample.topic}: t={sample.t} after t={self.samples[-1].t}"
                )
            self.samples.append(sample)
            if len(self.samples) > self.capacity:
                del self.samples[: len(self.samples) - self.capacity]

    def snapshot(self) -> list[StampedSample]:
        with self.lock:
            return list(self.samples)


class Bus:
    """Topic registry with per-topic ring buffers (>= 2 s retained)."""

    def __init__(self, rates: StreamRates = StreamRates(), retain_s: float = 2.0):
        self.rates = rates
        self._topics: dict[str, _TopicBuffer] = {}
        self._lock = threading.Lock()
        for name, rate in rates.as_dict().items():
            self.register(name, rate, retain_s)

    def register(self, topic: str, rate: float, retain_s: float = 2.0):
        with self._lock:
            self._topics[topic] = _TopicBuffer(rate, retain_s)

    def _buffer(self, topic: str) -> _TopicBuffer:
        try:
            return self._topics[topic]
        except KeyError:
            raise UnknownTopic(topic) from None

    def publish(self, topic: str, t: float, payload: Any):
        self._buffer(topic).append(StampedSample(float(t), topic, payload))

    def subscribe(self, topic: str) -> list[StampedSample]:
        """Snapshot of the retained samples, in publish order."""
        return self._buffer(topic).snapshot()

    def latest(self, topic: str) -> StampedSample | None:
        samples = self._buffer(topic).snapshot()
        return samples[-1] if samples else None


def synchronize(
    master: Iterable[StampedSample],
    companions: dict[str, Iterable[StampedSample]],
) -> list[dict[str, Any]]:
    """Align companion streams onto the master stream.

    One output record per master sample; each companion field carries the
    latest companion sample with timestamp <= the master's (latest-no-later).
    Master samples older than some companion's first sample are dropped.

    Raises EmptyStream when the master or any companion has no samples.
    """
    master = list(master)
    if not master:
        raise EmptyStream("master stream is empty")
    comp_lists = {name: list(stream) for name, stream in companions.items()}
    for name, samples in comp_lists.items():
        if not samples:
            raise EmptyStream(f"companion stream '{name}' is empty")
    comp_times = {name: [s.t for s in samples] for name, samples in comp_lists.items()}

    frames = []
    for m in master:
        record: dict[str, Any] = {"t": m.t, "master": m}
        ok = True
        for name, times in comp_times.items():
            idx = bisect.bisect_right(times, m.t) - 1
            if idx < 0:
                ok = False
                break
            record[name] = comp_lists[name][idx]
        if ok:
            frames.append(record)
    return frames


def sync_frames(
    joints: Iterable[StampedSample],
    desired: Iterable[StampedSample],
    images: Iterable[StampedSample],
) -> list[SyncFrame]:
    """Specialize synchronize() to the (joints, action, image) record."""
    rows = synchronize(list(joints), {"desired": list(desired), "image": list(images)})
    return [
        SyncFrame(
            t=r["t"],
            joints=np.asarray(r["master"].payload, dtype=np.float32),
            action=np.asarray(r["desired"].payload, dtype=np.float32),
            image=np.asarray(r["image"].payload, dtype=np.uint8),
        )
        for r in rows
    ]


# --- episode files -----------------------------------------------------------

TEPS_MAGIC = b"TEPS"
TEPS_VERSION = 1


@dataclass
class EpisodeMeta:
    task: str
    source: str  # human | expert | dagger
    success: bool
    seed: int
    rates: dict[str, float] = field(default_factory=lambda: StreamRates().as_dict())
    image: dict[str, float] = field(default_factory=lambda: {"w": 32, "h": 32, "mm_per_px": 3.5})
    created_unix_s: float = field(default_factory=lambda: float(int(time.time())))

    def to_json(self) -> str:
        return json.dumps(
            {
                "task": self.task,
                "source": self.source,
                "success": self.success,
                "seed": self.seed,
                "rates": self.rates,
                "image": self.image,
                "created_unix_s": self.created_unix_s,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "EpisodeMeta":
        d = json.loads(text)
        return cls(
            task=d["task"],
            source=d["source"],
            success=bool(d["success"]),
            seed=int(d["seed"]),
            rates=d["rates"],
            image=d["image"],
            created_unix_s=d["created_unix_s"],
        )


def record(frames: Iterable[SyncFrame], meta: EpisodeMeta, path) -> int:
    """Write an episode file; returns the number of frames written.

    Recording stops at MAX_EPISODE_FRAMES frames regardless of input length.
    """
    frames = list(frames)[:MAX_EPISODE_FRAMES]
    if not frames:
        raise ValueError("refusing to record an empty episode")
    w = int(meta.image["w"])
    h = int(meta.image["h"])
    manifest = meta.to_json().encode("utf-8")
    with open(path, "wb") as f:
        f.write(TEPS_MAGIC)
        f.write(struct.pack("<I", TEPS_VERSION))
        f.write(struct.pack("<I", len(manifest)))
        f.write(manifest)
        f.write(struct.pack("<Q", len(frames)))
        for fr in frames:
            if fr.image.shape != (h, w):
                raise ValueError(f"frame image shape {fr.image.shape} != manifest ({h}, {w})")
            f.write(struct.pack("<d", fr.t))
            f.write(np.asarray(fr.joints, dtype="<f4").tobytes())
            f.write(np.asarray(fr.action, dtype="<f4").tobytes())
            f.write(np.ascontiguousarray(fr.image, dtype=np.uint8).tobytes())
    return len(frames)


def replay(path) -> tuple[list[SyncFrame], EpisodeMeta]:
    """Read an episode file back, bit-exactly."""
    with open(path, "rb") as f:
        data = f.read()

    def need(offset: int, n: int, what: str) -> bytes:
        if offset + n > len(data):
            raise CorruptFile(f"truncated while reading {what}", offset=offset)
        return data[offset : offset + n]

    if need(0, 4, "magic") != TEPS_MAGIC:
        raise CorruptFile("bad magic", offset=0)
    (version,) = struct.unpack("<I", need(4, 4, "version"))
    if version != TEPS_VERSION:
        raise CorruptFile(f"unsupported version {version}", offset=4)
    (manifest_len,) = struct.unpack("<I", need(8, 4, "manifest length"))
    off = 12
    meta = EpisodeMeta.from_json(need(off, manifest_len, "manifest").decode("utf-8"))
    off += manifest_len
    (frame_count,) = struct.unpack("<Q", need(off, 8, "frame count"))
    off += 8

    w = int(meta.image["w"])
    h = int(meta.image["h"])
    frame_size = 8 + 12 * 4 + 12 * 4 + w * h
    frames = []
    for _ in range(frame_count):
        blob = need(off, frame_size, "frame")
        (t,) = struct.unpack("<d", blob[:8])
        joints = np.frombuffer(blob[8:56], dtype="<f4").copy()
        action = np.frombuffer(blob[56:104], dtype="<f4").copy()
        image = np.frombuffer(blob[104:], dtype=np.uint8).reshape(h, w).copy()
        frames.append(SyncFrame(t=t, joints=joints, action=action, image=image))
        off += frame_size
    if off != len(data):
        raise CorruptFile("trailing bytes after last frame", offset=off)
    return frames, meta
