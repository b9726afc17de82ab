"""Planted-cluster clip tracks for desk-scale experiments."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ClipTrack


@dataclass(frozen=True)
class SyntheticSpec:
    """Two centroids with cosine ``1 - margin``; ``planted`` key clips sit near the first.

    The key clips form ``segments`` contiguous runs at random offsets, like key
    shots in a real video. ``noise`` is the per-component standard deviation
    relative to unit-norm centroids.
    """

    M: int = 64
    D: int = 32
    f_clip: int = 16
    planted: int = 8
    margin: float = 1.0
    noise: float = 0.1
    segments: int = 1
    seed: int = 0
    video_id: str = "synthetic"

    def __post_init__(self):
        if not 0 <= self.planted <= self.M:
            raise ValueError(f"planted={self.planted} must lie in [0, M={self.M}]")
        if not 0 < self.margin <= 2:
            raise ValueError("margin must lie in (0, 2]")
        if self.D < 2:
            raise ValueError("need D >= 2 to separate the two centroids")
        if self.planted and not 1 <= self.segments <= self.planted:
            raise ValueError("segments must lie in [1, planted]")
        if self.noise < 0:
            raise ValueError("noise must be non-negative")


def centroids(spec: SyntheticSpec, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    basis, _ = np.linalg.qr(rng.standard_normal((spec.D, 2)))
    cos = 1.0 - spec.margin
    key = basis[:, 0]
    background = cos * basis[:, 0] + np.sqrt(max(0.0, 1.0 - cos * cos)) * basis[:, 1]
    return key, background


def planted_clips(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    """Indices of key clips: ``segments`` non-touching runs summing to ``planted``."""
    if spec.planted == 0:
        return np.zeros(0, dtype=np.int64)
    cuts = np.sort(rng.choice(np.arange(1, spec.planted), size=spec.segments - 1, replace=False))
    lengths = np.diff(np.concatenate([[0], cuts, [spec.planted]]))
    # gaps between runs: distribute the free clips, every internal gap >= 1
    free = spec.M - spec.planted
    if spec.segments > 1 and free < spec.segments:
        raise ValueError("not enough background clips to separate the segments")
    weights = rng.dirichlet(np.ones(spec.segments + 1))
    extra = free - spec.segments
    gaps = np.floor(weights * max(extra, 0)).astype(np.int64)
    gaps[1:spec.segments] += 1
    start = int(gaps[0])
    out = []
    for length, gap in zip(lengths, gaps[1:]):
        out.extend(range(start, start + int(length)))
        start += int(length) + int(gap)
    shift = int(rng.integers(spec.M))
    return np.sort((np.asarray(out, dtype=np.int64) + shift) % spec.M)


def generate_synthetic(spec: SyntheticSpec) -> ClipTrack:
    rng = np.random.default_rng(spec.seed)
    key, background = centroids(spec, rng)
    planted = planted_clips(spec, rng)
    is_key = np.zeros(spec.M, dtype=bool)
    is_key[planted] = True
    base = np.where(is_key[:, None], key, background)
    features = base + spec.noise * rng.standard_normal((spec.M, spec.D))
    scale = rng.uniform(0.5, 2.0, size=(spec.M, 1))
    # stored as float32 on disk; round now so a save/load round trip is exact
    features = (features * scale).astype(np.float32).astype(np.float64)
    annotations = np.repeat(is_key.astype(np.int8), spec.f_clip)
    return ClipTrack(
        features=features,
        f_clip=spec.f_clip,
        f_total=spec.M * spec.f_clip,
        annotations=annotations,
        video_id=spec.video_id,
    )
