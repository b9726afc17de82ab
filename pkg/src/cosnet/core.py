"""Shared domain types: clip tracks, agent configurations, action spaces, rewards.

Clip indices are 0-based. Clip ``j`` covers frames ``[j * f_clip, (j + 1) * f_clip)``;
frames past ``M * f_clip`` belong to no clip.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

DEFAULT_STEPS = (-16, -8, -4, -2, -1, 0, 1, 2, 4, 8, 16)
SUMMARY_BUDGET = 0.15


class CosnetError(Exception):
    """Base class for errors raised by this package."""


class DegenerateInputError(CosnetError):
    pass


class TrackError(CosnetError):
    pass


@dataclass(frozen=True, eq=False)
class ClipTrack:
    """One video: ``M`` clip feature vectors plus optional per-frame annotations."""

    features: np.ndarray
    f_clip: int = 16
    f_total: Optional[int] = None
    annotations: Optional[np.ndarray] = None
    importance: Optional[np.ndarray] = None
    video_id: str = "video"

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 2:
            raise TrackError(f"features must be a 2-D array, got shape {feats.shape}")
        object.__setattr__(self, "features", feats)
        if self.f_total is None:
            object.__setattr__(self, "f_total", feats.shape[0] * self.f_clip)
        if self.annotations is not None:
            object.__setattr__(self, "annotations", np.asarray(self.annotations, dtype=np.int8))
        if self.importance is not None:
            object.__setattr__(self, "importance", np.asarray(self.importance, dtype=np.float64))

    @property
    def M(self) -> int:
        return self.features.shape[0]

    @property
    def D(self) -> int:
        return self.features.shape[1]

    @property
    def annotated(self) -> bool:
        return self.annotations is not None

    @cached_property
    def cosines(self) -> np.ndarray:
        """Pairwise clip cosine similarities, clipped to [-1, 1]."""
        return cosine_matrix(self.features)

    def clip_frames(self, j: int) -> range:
        return range(j * self.f_clip, (j + 1) * self.f_clip)

    def key_counts(self) -> np.ndarray:
        """Number of annotated key frames inside each clip, shape ``(M,)``."""
        if self.annotations is None:
            raise TrackError(f"track {self.video_id!r} has no annotations")
        covered = self.annotations[: self.M * self.f_clip]
        return covered.reshape(self.M, self.f_clip).sum(axis=1).astype(np.int64)

    def __eq__(self, other):
        if not isinstance(other, ClipTrack):
            return NotImplemented

        def same(a, b):
            if a is None or b is None:
                return a is None and b is None
            return a.shape == b.shape and bool(np.array_equal(a, b))

        return (
            self.f_clip == other.f_clip
            and self.f_total == other.f_total
            and self.video_id == other.video_id
            and same(self.features, other.features)
            and same(self.annotations, other.annotations)
            and same(self.importance, other.importance)
        )


def validate_track(track: ClipTrack) -> list[str]:
    """Return a list of violated invariants; empty when the track is well formed."""
    problems = []
    M, D = track.features.shape
    if M < 2:
        problems.append(f"need at least 2 clips, got M={M}")
    if D < 1:
        problems.append(f"feature dimension must be >= 1, got D={D}")
    if track.f_clip < 1:
        problems.append(f"f_clip must be >= 1, got {track.f_clip}")
    if not np.all(np.isfinite(track.features)):
        bad = sorted(set(np.nonzero(~np.isfinite(track.features))[0].tolist()))
        problems.append(f"non-finite feature values in clips {bad}")
    if D >= 1:
        norms = np.linalg.norm(track.features, axis=1)
        for j in np.nonzero(norms == 0)[0]:
            problems.append(f"clip {int(j)} has a zero feature vector")
    min_total = M * track.f_clip - (track.f_clip - 1)
    if track.f_total < min_total:
        problems.append(f"f_total={track.f_total} too small for {M} clips of {track.f_clip} frames (need >= {min_total})")
    if track.annotations is not None:
        ann = track.annotations
        if ann.ndim != 1 or ann.shape[0] != track.f_total:
            problems.append(f"annotation length {ann.size} != f_total {track.f_total}")
        elif not np.all((ann == 0) | (ann == 1)):
            problems.append("annotations must be binary 0/1")
    if track.importance is not None:
        imp = track.importance
        if imp.ndim != 1 or imp.shape[0] != track.f_total:
            problems.append(f"importance length {imp.size} != f_total {track.f_total}")
        elif not np.all((imp >= 0) & (imp <= 1)):
            problems.append("importance scores must lie in [0, 1]")
    return problems


def max_agents(f_total: int, f_clip: int) -> int:
    """Largest ``N`` with ``N * f_clip <= 0.15 * f_total``."""
    if f_clip < 1 or f_total < f_clip:
        raise DegenerateInputError(f"need f_total >= f_clip >= 1, got f_total={f_total}, f_clip={f_clip}")
    # integer arithmetic keeps the boundary exact: 20 * N * f_clip <= 3 * f_total
    n = (3 * f_total) // (20 * f_clip)
    if n < 1:
        raise DegenerateInputError(
            f"15% of {f_total} frames is less than one clip of {f_clip} frames"
        )
    return n


def training_agents(f_total: int, f_clip: int) -> int:
    """Agent count used for training runs: ``max_agents`` clamped to at least 2."""
    return max(2, max_agents(f_total, f_clip))


def coarsen_track(track: ClipTrack, multiplier: int) -> ClipTrack:
    """Merge runs of ``multiplier`` consecutive clips, averaging their features.

    Trailing base clips that do not fill a whole coarse clip are dropped; the
    frame annotations are kept as-is and rebucketed by the new clip length.
    """
    if multiplier < 1:
        raise ValueError("multiplier must be >= 1")
    if multiplier == 1:
        return track
    M = track.M // multiplier
    if M < 2:
        raise DegenerateInputError(f"only {track.M} base clips, cannot form 2 clips of x{multiplier}")
    feats = track.features[: M * multiplier].reshape(M, multiplier, track.D).mean(axis=1)
    return ClipTrack(
        features=feats,
        f_clip=track.f_clip * multiplier,
        f_total=track.f_total,
        annotations=track.annotations,
        importance=track.importance,
        video_id=track.video_id,
    )


@dataclass(frozen=True)
class ActionSpace:
    steps: tuple[int, ...] = DEFAULT_STEPS

    def __post_init__(self):
        steps = tuple(int(s) for s in self.steps)
        if 0 not in steps:
            raise ValueError("action space must contain the stay-still action 0")
        if len(set(steps)) != len(steps):
            raise ValueError("duplicate steps in action space")
        object.__setattr__(self, "steps", steps)

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def reach(self) -> int:
        return max(abs(s) for s in self.steps)

    @property
    def stay_index(self) -> int:
        return self.steps.index(0)

    def offsets(self, indices: Sequence[int]) -> np.ndarray:
        return np.asarray(self.steps, dtype=np.int64)[np.asarray(indices, dtype=np.int64)]


@dataclass
class AgentConfiguration:
    """Sorted, collision-free agent foci with their recurrent states aligned by slot."""

    positions: np.ndarray
    hidden_states: Optional[np.ndarray] = None
    round: int = 0

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.int64)

    @property
    def N(self) -> int:
        return len(self.positions)

    def is_valid(self, M: int) -> bool:
        p = self.positions
        return (
            p.ndim == 1
            and bool(np.all((p >= 0) & (p < M)))
            and len(np.unique(p)) == len(p)
            and bool(np.all(np.diff(p) > 0))
        )

    def sorted(self) -> "AgentConfiguration":
        order = np.argsort(self.positions, kind="stable")
        hidden = None if self.hidden_states is None else self.hidden_states[order]
        return AgentConfiguration(self.positions[order], hidden, self.round)

    def left(self, i: int) -> int:
        return int(self.positions[(i - 1) % self.N])

    def right(self, i: int) -> int:
        return int(self.positions[(i + 1) % self.N])


def random_configuration(M: int, N: int, rng: np.random.Generator) -> AgentConfiguration:
    if N > M:
        raise DegenerateInputError(f"cannot place {N} agents on {M} clips")
    return AgentConfiguration(np.sort(rng.choice(M, size=N, replace=False)))


@dataclass
class RewardBundle:
    """Per-agent reward components for one round; absent components stay ``None``."""

    r_lu: Optional[np.ndarray] = None
    r_gu: Optional[np.ndarray] = None
    r_u: Optional[np.ndarray] = None
    r_ls: Optional[np.ndarray] = None
    r_gs: Optional[np.ndarray] = None
    r_s: Optional[np.ndarray] = None
    r_total: Optional[np.ndarray] = None

    FIELDS = ("r_lu", "r_gu", "r_u", "r_ls", "r_gs", "r_s", "r_total")

    def populated(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in self.FIELDS if getattr(self, name) is not None}


def cosine_matrix(features: np.ndarray) -> np.ndarray:
    unit = features / np.linalg.norm(features, axis=1, keepdims=True)
    return np.clip(unit @ unit.T, -1.0, 1.0)
