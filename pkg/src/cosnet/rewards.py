"""Reward components, their combinations and discounted returns.

Unsupervised rewards compare clip features; supervised rewards count annotated
key frames. Every component is kept inside ``[0, 1]``: negative cosines are
clamped to 0 for the local centrality term and the diversity term is clipped.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import AgentConfiguration, ClipTrack, CosnetError, RewardBundle, TrackError
from .environment import StepOutcome, neighbor_clips

MODES = ("US", "U", "S", "LU", "GU", "LS", "GS")
SUPERVISED_MODES = frozenset({"US", "S", "LS", "GS"})


class RewardModeError(CosnetError):
    pass


@dataclass(frozen=True)
class RewardConfig:
    alpha1: float = 1.0
    alpha2: float = 1.0
    alpha3: float = 1.0
    alpha4: float = 1.0
    gamma: float = 0.9
    mode: str = "US"

    def __post_init__(self):
        for name in ("alpha1", "alpha2", "alpha3", "alpha4", "gamma"):
            value = getattr(self, name)
            if not 0 < value <= 1:
                raise ValueError(f"{name} must lie in (0, 1], got {value}")
        if self.mode not in MODES:
            raise RewardModeError(f"unknown reward mode {self.mode!r}; expected one of {MODES}")

    @property
    def supervised(self) -> bool:
        return self.mode in SUPERVISED_MODES


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("cosine similarity is undefined for a zero vector")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def local_unsupervised(track: ClipTrack, config: AgentConfiguration, agent: int) -> float:
    """Minimum cosine between an agent's focus and its neighborhood, floored at 0.

    An empty neighborhood scores 1.
    """
    neighbors = neighbor_clips(config, agent, track.M)
    if not neighbors:
        return 1.0
    cos = track.cosines[config.positions[agent], neighbors]
    return float(np.clip(cos.min(), 0.0, 1.0))


def global_unsupervised(track: ClipTrack, config: AgentConfiguration) -> float:
    """One minus the mean cosine over ordered pairs of distinct foci, clipped to [0, 1]."""
    N = config.N
    if N < 2:
        raise ValueError("diversity needs at least 2 agents")
    sim = track.cosines[np.ix_(config.positions, config.positions)]
    off_diagonal = sim.sum() - np.trace(sim)
    return float(np.clip(1.0 - off_diagonal / (N * (N - 1)), 0.0, 1.0))


def _require_annotations(track: ClipTrack):
    if track.annotations is None:
        raise TrackError(f"supervised reward needs annotations for track {track.video_id!r}")


def local_supervised(track: ClipTrack, agent, old_pos: int, new_pos: int, skipped_clips, alpha2: float = 1.0,
                     key_counts=None) -> float:
    """Change reward (precision gain of the move) plus skip reward (key frames not skipped).

    ``agent`` is carried for symmetry with the other per-agent rewards; the value
    depends only on the move.
    """
    _require_annotations(track)
    keys = track.key_counts() if key_counts is None else key_counts
    f_clip = track.f_clip
    change = 0.25 * (1.0 + keys[new_pos] / f_clip - keys[old_pos] / f_clip)
    skipped_frames = len(skipped_clips) * f_clip
    if skipped_frames == 0:
        keep = 1.0
    else:
        keep = 1.0 - keys[list(skipped_clips)].sum() / skipped_frames
    return float(change + 0.5 * alpha2 * keep)


def global_supervised(track: ClipTrack, config_old: AgentConfiguration, config_new: AgentConfiguration,
                      key_counts=None) -> float:
    """Half of one plus the change in key-frame precision over all foci."""
    _require_annotations(track)
    keys = track.key_counts() if key_counts is None else key_counts
    total = config_new.N * track.f_clip
    gain = keys[config_new.positions].sum() - keys[config_old.positions].sum()
    return float(0.5 * (1.0 + gain / total))


def combine(bundle: RewardBundle, config: RewardConfig) -> RewardBundle:
    """Fill in ``r_u``, ``r_s`` and ``r_total`` from the populated components."""

    def need(*names):
        for name in names:
            if getattr(bundle, name) is None:
                raise RewardModeError(f"mode {config.mode} needs {name}, which is absent")
        return [getattr(bundle, n) for n in names]

    mode = config.mode
    if mode in ("US", "U"):
        lu, gu = need("r_lu", "r_gu")
        bundle.r_u = 0.5 * (lu + config.alpha1 * gu)
    if mode in ("US", "S"):
        ls, gs = need("r_ls", "r_gs")
        bundle.r_s = 0.5 * (ls + config.alpha3 * gs)
    if mode == "US":
        bundle.r_total = 0.5 * (bundle.r_s + config.alpha4 * bundle.r_u)
    elif mode == "U":
        bundle.r_total = bundle.r_u
    elif mode == "S":
        bundle.r_total = bundle.r_s
    else:
        bundle.r_total = need("r_" + mode.lower())[0]
    return bundle


def round_rewards(track: ClipTrack, config_old: AgentConfiguration, outcome: StepOutcome,
                  config: RewardConfig, key_counts=None) -> RewardBundle:
    """Rewards for one executed round, indexed by round-start slot.

    Local unsupervised rewards are measured on the post-round configuration.
    """
    mode = config.mode
    N = config_old.N
    new_sorted = AgentConfiguration(outcome.new_positions)
    # sorted slot of each round-start slot after the move
    slot_after = np.empty(N, dtype=np.int64)
    slot_after[outcome.order] = np.arange(N)
    bundle = RewardBundle()

    if mode in ("US", "U", "LU"):
        lu_sorted = np.array([local_unsupervised(track, new_sorted, k) for k in range(N)])
        bundle.r_lu = lu_sorted[slot_after]
    if mode in ("US", "U", "GU"):
        bundle.r_gu = np.full(N, global_unsupervised(track, new_sorted))
    if mode in SUPERVISED_MODES:
        _require_annotations(track)
        keys = track.key_counts() if key_counts is None else key_counts
        if mode in ("US", "S", "LS"):
            bundle.r_ls = np.array([
                local_supervised(track, i, int(outcome.origins[i]), int(outcome.destinations[i]),
                                 outcome.skipped_clips[i], config.alpha2, key_counts=keys)
                for i in range(N)
            ])
        if mode in ("US", "S", "GS"):
            bundle.r_gs = np.full(N, global_supervised(track, config_old, new_sorted, key_counts=keys))
    return combine(bundle, config)


def discounted_returns(rewards, gamma: float) -> np.ndarray:
    """``R_t = r_t + gamma * R_{t+1}`` accumulated backwards along axis 0."""
    if not 0 < gamma <= 1:
        raise ValueError(f"gamma must lie in (0, 1], got {gamma}")
    r = np.asarray(rewards, dtype=np.float64)
    out = np.empty_like(r)
    running = np.zeros(r.shape[1:], dtype=np.float64)
    for t in range(r.shape[0] - 1, -1, -1):
        running = r[t] + gamma * running
        out[t] = running
    return out
