"""Summaries and the frame-level F-score."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ClipTrack


@dataclass
class Summary:
    video_id: str
    selected: np.ndarray
    mask: np.ndarray
    f_clip: int

    def intervals(self) -> list[tuple[int, int]]:
        """Half-open frame ranges covered by the selected clips, in temporal order."""
        return [(int(j) * self.f_clip, (int(j) + 1) * self.f_clip) for j in np.sort(self.selected)]


def clip_mask(positions, track: ClipTrack) -> np.ndarray:
    mask = np.zeros(track.f_total, dtype=np.int8)
    for j in np.asarray(positions, dtype=np.int64):
        mask[j * track.f_clip:(j + 1) * track.f_clip] = 1
    return mask


def extract_summary(trace, track: ClipTrack) -> Summary:
    """The terminal foci of an episode, expanded to a per-frame mask."""
    selected = np.sort(np.asarray(trace.final_positions, dtype=np.int64))
    return Summary(track.video_id, selected, clip_mask(selected, track), track.f_clip)


def precision_recall(generated, ground_truth) -> tuple[float, float]:
    gen = np.asarray(generated).astype(bool)
    gt = np.asarray(ground_truth).astype(bool)
    if gen.shape != gt.shape:
        raise ValueError(f"mask length mismatch: generated {gen.shape} vs ground truth {gt.shape}")
    overlap = np.count_nonzero(gen & gt)
    n_gen = np.count_nonzero(gen)
    n_gt = np.count_nonzero(gt)
    if n_gt == 0:
        raise ValueError("ground-truth mask has no key frames")
    precision = overlap / n_gen if n_gen else 0.0
    return precision, overlap / n_gt


def f_score(generated, ground_truth) -> float:
    """Harmonic mean of precision and recall, as a percentage; 0 without overlap."""
    p, r = precision_recall(generated, ground_truth)
    if p + r == 0:
        return 0.0
    return 2 * p * r / (p + r) * 100.0


def random_subset_fscore(track: ClipTrack, n_agents: int, draws: int, rng: np.random.Generator) -> float:
    """Mean F-score of ``draws`` uniformly random ``n_agents``-clip summaries."""
    scores = []
    for _ in range(draws):
        picks = rng.choice(track.M, size=n_agents, replace=False)
        scores.append(f_score(clip_mask(picks, track), track.annotations))
    return float(np.mean(scores))
