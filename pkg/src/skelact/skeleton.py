"""Skeleton sequence data model, file formats, and kinematic-tree helpers.

A sequence is T frames of J joints in meters, with performer/camera/setup
metadata.  Files come in two shapes: the NTU-style ``.skeleton`` text layout
and a portable JSON-lines archive (one sequence per line).  The kinematic
tree is a rooted spanning tree over the joints; its incidence matrix turns
joint positions into bone vectors and the tree walk turns them back.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyBodyError, ParseError, TopologyError, UsageError

PROTOCOLS = ("cross-subject", "cross-view", "cross-setup")

# Training performer ids of the standard NTU cross-subject protocol.
NTU_TRAIN_SUBJECTS = frozenset(
    {1, 2, 4, 5, 8, 9, 13, 14, 15, 16, 17, 18, 19, 25, 27, 28, 31, 34, 35, 38}
)

_NTU_NAME = re.compile(r"S(\d+)C(\d+)P(\d+)R(\d+)A(\d+)")


class SkeletonSequence:
    """Ordered joint frames plus capture metadata.

    frames: (T, J, 3) float32, T >= 2, all coordinates finite.
    Equality compares frames and metadata but never ``source``, which only
    records where the sequence came from.
    """

    __slots__ = ("frames", "action_label", "subject_id", "camera_id", "setup_id", "source")

    def __init__(self, frames, action_label: int, subject_id: int, camera_id: int,
                 setup_id: int = 0, source: str = ""):
        frames = np.asarray(frames, dtype=np.float32)
        if frames.ndim != 3 or frames.shape[2] != 3:
            raise UsageError(f"frames must be (T, J, 3), got {frames.shape}")
        if frames.shape[0] < 2:
            raise UsageError("a sequence needs at least 2 frames")
        if not np.all(np.isfinite(frames)):
            raise UsageError("non-finite joint coordinate")
        self.frames = frames
        self.action_label = int(action_label)
        self.subject_id = int(subject_id)
        self.camera_id = int(camera_id)
        self.setup_id = int(setup_id)
        self.source = source

    @property
    def frame_count(self) -> int:
        return self.frames.shape[0]

    @property
    def joint_count(self) -> int:
        return self.frames.shape[1]

    def __eq__(self, other) -> bool:
        if not isinstance(other, SkeletonSequence):
            return NotImplemented
        return (
            self.action_label == other.action_label
            and self.subject_id == other.subject_id
            and self.camera_id == other.camera_id
            and self.setup_id == other.setup_id
            and self.frames.shape == other.frames.shape
            and np.array_equal(self.frames, other.frames)
        )

    def __repr__(self) -> str:
        return (f"SkeletonSequence(T={self.frame_count}, J={self.joint_count}, "
                f"label={self.action_label}, subject={self.subject_id}, "
                f"camera={self.camera_id}, setup={self.setup_id})")


# ---------------------------------------------------------------------------
# kinematic tree


def build_incidence(bones, joint_count: int) -> np.ndarray:
    """Joint-to-bone incidence matrix: column k has +1 at the bone's child
    joint and -1 at its parent, so bone vectors are X . C for X of shape
    (3, J).  Validates that the bones form a spanning tree."""
    bones = [(int(p), int(c)) for p, c in bones]
    if len(bones) != joint_count - 1:
        raise TopologyError(f"{len(bones)} bones cannot span {joint_count} joints")
    c = np.zeros((joint_count, len(bones)), dtype=np.float32)
    adjacency: list[list[tuple[int, int]]] = [[] for _ in range(joint_count)]
    for k, (p, q) in enumerate(bones):
        if not (0 <= p < joint_count and 0 <= q < joint_count):
            raise TopologyError(f"bone ({p}, {q}) references a missing joint")
        if p == q:
            raise TopologyError(f"bone ({p}, {q}) is a self-loop")
        c[q, k] = 1.0
        c[p, k] = -1.0
        adjacency[p].append((q, k))
        adjacency[q].append((p, k))
    seen = [False] * joint_count
    stack = [0]
    seen[0] = True
    count = 1
    while stack:
        u = stack.pop()
        for v, _ in adjacency[u]:
            if not seen[v]:
                seen[v] = True
                count += 1
                stack.append(v)
    if count != joint_count:
        raise TopologyError("bones do not connect all joints")
    return c


@dataclass(frozen=True)
class Topology:
    """Rooted spanning tree over joints, with derived matrices.

    incidence: (J, b) with +1 child / -1 parent per column.
    paths: (J, b) signed membership of each bone on the root-to-joint path;
    joint positions recover from bone vectors as X = root + V . paths^T.
    """

    joint_count: int
    bones: tuple[tuple[int, int], ...]
    root: int
    incidence: np.ndarray = field(init=False, repr=False, compare=False)
    paths: np.ndarray = field(init=False, repr=False, compare=False)
    _order: tuple[tuple[int, int, int, float], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        bones = tuple((int(p), int(c)) for p, c in self.bones)
        object.__setattr__(self, "bones", bones)
        if not 0 <= self.root < self.joint_count:
            raise TopologyError(f"root {self.root} out of range")
        incidence = build_incidence(bones, self.joint_count)
        adjacency: list[list[tuple[int, int, float]]] = [[] for _ in range(self.joint_count)]
        for k, (p, q) in enumerate(bones):
            adjacency[p].append((q, k, 1.0))   # traverse parent->child: add the bone
            adjacency[q].append((p, k, -1.0))  # traverse child->parent: subtract it
        paths = np.zeros((self.joint_count, len(bones)), dtype=np.float32)
        order: list[tuple[int, int, int, float]] = []
        seen = [False] * self.joint_count
        seen[self.root] = True
        queue = [self.root]
        while queue:
            u = queue.pop(0)
            for v, k, sign in adjacency[u]:
                if seen[v]:
                    continue
                seen[v] = True
                paths[v] = paths[u]
                paths[v, k] = sign
                order.append((v, u, k, sign))
                queue.append(v)
        object.__setattr__(self, "incidence", incidence)
        object.__setattr__(self, "paths", paths)
        object.__setattr__(self, "_order", tuple(order))

    @property
    def bone_count(self) -> int:
        return len(self.bones)


def bones_from_joints(frames: np.ndarray, topology: Topology) -> np.ndarray:
    """Bone vectors child - parent, shape (..., b, 3) from frames (..., J, 3)."""
    parents = np.array([p for p, _ in topology.bones])
    children = np.array([c for _, c in topology.bones])
    return frames[..., children, :] - frames[..., parents, :]


def reconstruct_joints(bones: np.ndarray, topology: Topology, root_pos) -> np.ndarray:
    """Recover a (3, J) joint matrix from (3, b) bone vectors by walking the
    tree from the root, which carries ``root_pos``."""
    bones = np.asarray(bones)
    if bones.shape != (3, topology.bone_count):
        raise UsageError(f"expected (3, {topology.bone_count}) bones, got {bones.shape}")
    joints = np.zeros((3, topology.joint_count), dtype=bones.dtype)
    joints[:, topology.root] = np.asarray(root_pos, dtype=bones.dtype)
    for child, parent, k, sign in topology._order:
        joints[:, child] = joints[:, parent] + sign * bones[:, k]
    return joints


def ntu_topology() -> Topology:
    """25-joint Kinect-v2 body tree rooted at the mid-spine joint."""
    bones = (
        (1, 0), (0, 12), (0, 16), (1, 20), (20, 2), (2, 3),
        (20, 4), (4, 5), (5, 6), (6, 7), (7, 22), (22, 21),
        (20, 8), (8, 9), (9, 10), (10, 11), (11, 24), (24, 23),
        (12, 13), (13, 14), (14, 15), (16, 17), (17, 18), (18, 19),
    )
    return Topology(joint_count=25, bones=bones, root=1)


# ---------------------------------------------------------------------------
# NTU .skeleton text format


class _Cursor:
    def __init__(self, text: str):
        self.lines = text.splitlines()
        self.pos = 0

    def take(self) -> tuple[str, int]:
        if self.pos >= len(self.lines):
            raise ParseError("unexpected end of file", line=len(self.lines))
        self.pos += 1
        return self.lines[self.pos - 1].strip(), self.pos

    def take_int(self, what: str) -> tuple[int, int]:
        text, num = self.take()
        try:
            return int(text.split()[0]), num
        except (ValueError, IndexError):
            raise ParseError(f"expected {what}, got {text!r}", line=num) from None


def parse_ntu(path) -> SkeletonSequence:
    """Parse one NTU-style ``.skeleton`` file into the primary body's sequence.

    Layout: a frame count; per frame a body count; per body an info line, a
    joint count line (must be 25), then one line per joint whose first three
    fields are x y z.  When several bodies are tracked, the one with the
    largest total frame-to-frame displacement energy wins; frames without a
    tracked body are dropped.  Metadata comes from the SsssCcccPpppRrrrAaaa
    filename pattern.
    """
    path = Path(path)
    match = _NTU_NAME.search(path.name)
    if match is None:
        raise ParseError(f"filename {path.name!r} lacks the SsssCcccPpppRrrrAaaa pattern")
    setup, camera, subject, _, action = (int(g) for g in match.groups())

    cur = _Cursor(path.read_text())
    frame_count, _ = cur.take_int("frame count")
    observations: dict[str, list[tuple[int, np.ndarray]]] = {}
    body_order: list[str] = []
    for frame_idx in range(frame_count):
        body_count, _ = cur.take_int("body count")
        for _ in range(body_count):
            info, _ = cur.take()
            body_id = info.split()[0] if info else "0"
            joint_count, num = cur.take_int("joint count")
            if joint_count != 25:
                raise ParseError(f"expected 25 joints, got {joint_count}", line=num)
            coords = np.empty((25, 3), dtype=np.float32)
            for j in range(25):
                text, num = cur.take()
                parts = text.split()
                if len(parts) < 3:
                    raise ParseError(f"joint line has {len(parts)} fields, need at least 3", line=num)
                try:
                    coords[j] = [float(parts[0]), float(parts[1]), float(parts[2])]
                except ValueError:
                    raise ParseError(f"bad joint coordinates {text!r}", line=num) from None
            if body_id not in observations:
                observations[body_id] = []
                body_order.append(body_id)
            observations[body_id].append((frame_idx, coords))

    if not observations:
        raise EmptyBodyError(f"{path.name}: no tracked body in any frame")

    def energy(obs: list[tuple[int, np.ndarray]]) -> float:
        total = 0.0
        for (_, a), (_, b) in zip(obs, obs[1:]):
            total += float(np.sum((b - a) ** 2))
        return total

    primary = max(body_order, key=lambda bid: energy(observations[bid]))
    frames = np.stack([coords for _, coords in observations[primary]])
    if frames.shape[0] < 2:
        raise ParseError(f"{path.name}: primary body tracked in fewer than 2 frames")
    if not np.all(np.isfinite(frames)):
        raise ParseError(f"{path.name}: non-finite joint coordinate")
    return SkeletonSequence(frames, action_label=action, subject_id=subject,
                            camera_id=camera, setup_id=setup, source=str(path))


# ---------------------------------------------------------------------------
# JSON-lines archive


def _fmt(value: np.float32) -> str:
    # 9 significant digits round-trip any float32 exactly
    return "%.9g" % float(value)


def write_jsonl(sequences, path) -> None:
    """One JSON object per line: label, subject, camera, setup, frames."""
    with open(path, "w", encoding="utf-8") as fh:
        for seq in sequences:
            frames = ",".join(
                "[" + ",".join("[" + ",".join(_fmt(c) for c in joint) + "]" for joint in frame) + "]"
                for frame in seq.frames
            )
            fh.write(
                '{"label":%d,"subject":%d,"camera":%d,"setup":%d,"frames":[%s]}\n'
                % (seq.action_label, seq.subject_id, seq.camera_id, seq.setup_id, frames)
            )


def parse_jsonl(path) -> list[SkeletonSequence]:
    """Inverse of write_jsonl.  An empty file is an empty dataset.  All
    sequences in one file must agree on the joint count."""
    sequences: list[SkeletonSequence] = []
    expected_joints: int | None = None
    with open(path, "r", encoding="utf-8") as fh:
        for num, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc.msg}", line=num) from None
            if not isinstance(obj, dict):
                raise ParseError("expected a JSON object", line=num)
            for key in ("label", "subject", "camera", "frames"):
                if key not in obj:
                    raise ParseError(f"missing field {key!r}", line=num)
            raw = obj["frames"]
            if not isinstance(raw, list) or len(raw) < 2:
                raise ParseError("expected at least 2 frames", line=num)
            for frame in raw:
                if not isinstance(frame, list):
                    raise ParseError("frame is not a list of joints", line=num)
                if expected_joints is None:
                    expected_joints = len(frame)
                if len(frame) != expected_joints:
                    raise ParseError(f"expected {expected_joints} joints, got {len(frame)}", line=num)
                for joint in frame:
                    if not isinstance(joint, list) or len(joint) != 3:
                        raise ParseError("joint is not an [x, y, z] triple", line=num)
            frames = np.array(raw, dtype=np.float32)
            if not np.all(np.isfinite(frames)):
                raise ParseError("non-finite joint coordinate", line=num)
            try:
                sequences.append(
                    SkeletonSequence(
                        frames,
                        action_label=int(obj["label"]),
                        subject_id=int(obj["subject"]),
                        camera_id=int(obj["camera"]),
                        setup_id=int(obj.get("setup", 0)),
                        source=f"{path}:{num}",
                    )
                )
            except (TypeError, ValueError) as exc:
                raise ParseError(str(exc), line=num) from None
    return sequences


# ---------------------------------------------------------------------------
# preprocessing


def resample(seq: SkeletonSequence, frame_count: int) -> SkeletonSequence:
    """Linear interpolation to exactly ``frame_count`` frames along uniform
    time positions; first and last frames are preserved bit-exactly."""
    if frame_count < 2:
        raise UsageError(f"resample needs frame_count >= 2, got {frame_count}")
    return SkeletonSequence(
        resample_frames(seq.frames, frame_count),
        action_label=seq.action_label, subject_id=seq.subject_id,
        camera_id=seq.camera_id, setup_id=seq.setup_id, source=seq.source,
    )


def resample_frames(frames: np.ndarray, frame_count: int) -> np.ndarray:
    t_in = frames.shape[0]
    positions = np.arange(frame_count, dtype=np.float64) * (t_in - 1) / (frame_count - 1)
    base = np.minimum(positions.astype(np.int64), t_in - 2)
    frac = (positions - base).astype(np.float32)
    lo = frames[base]
    hi = frames[base + 1]
    out = lo + frac[:, None, None] * (hi - lo)
    exact = positions - np.floor(positions) < 1e-9
    out[exact] = frames[np.floor(positions[exact]).astype(np.int64)]
    return out


def center_root(seq: SkeletonSequence, root: int = 0) -> SkeletonSequence:
    """Translate so the first frame's root joint sits at the origin."""
    offset = seq.frames[0, root].copy()
    return SkeletonSequence(
        seq.frames - offset, action_label=seq.action_label, subject_id=seq.subject_id,
        camera_id=seq.camera_id, setup_id=seq.setup_id, source=seq.source,
    )


def preprocess(seq: SkeletonSequence, root: int, frame_count: int) -> np.ndarray:
    """center_root then resample; returns the (frame_count, J, 3) array."""
    return resample_frames(center_root(seq, root).frames, frame_count)


# ---------------------------------------------------------------------------
# dataset splits


@dataclass(frozen=True)
class DatasetSplit:
    """Index partition of a sequence list under a named protocol."""

    train: tuple[int, ...]
    test: tuple[int, ...]
    protocol: str

    def __post_init__(self):
        overlap = set(self.train) & set(self.test)
        if overlap:
            raise UsageError(f"split overlaps on ids {sorted(overlap)[:5]}")


def split_dataset(sequences, protocol: str, train_subjects=None) -> DatasetSplit:
    """Partition sequence indices by performer, camera, or setup.

    cross-subject: train = sequences whose subject id is in ``train_subjects``
    (default: the first 80 percent of the sorted subject ids, rounded up).
    cross-view: camera 1 is the test view, all other cameras train.
    cross-setup: even setup ids train, odd ids test.
    """
    if protocol not in PROTOCOLS:
        raise UsageError(f"unknown protocol {protocol!r}, expected one of {PROTOCOLS}")
    sequences = list(sequences)
    if protocol == "cross-subject":
        if train_subjects is None:
            subjects = sorted({s.subject_id for s in sequences})
            keep = math.ceil(0.8 * len(subjects))
            train_subjects = set(subjects[:keep])
        else:
            train_subjects = set(train_subjects)
        in_train = [s.subject_id in train_subjects for s in sequences]
    elif protocol == "cross-view":
        in_train = [s.camera_id != 1 for s in sequences]
    else:
        in_train = [s.setup_id % 2 == 0 for s in sequences]
    train = tuple(i for i, keep in enumerate(in_train) if keep)
    test = tuple(i for i, keep in enumerate(in_train) if not keep)
    return DatasetSplit(train=train, test=test, protocol=protocol)
