"""Exhaustive search over agent configurations for tiny tracks.

A configuration is scored as a stationary round: every agent stays still for
one round and the per-agent combined reward is averaged. Taken literally the
supervised rewards of a stationary round are constants (0.75 and 0.5 with unit
scale factors), so here they are measured against an empty reference: the
previous-round key-frame counts are taken as zero. That makes the score track
how many key frames the configuration actually holds.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from .core import AgentConfiguration, ClipTrack, CosnetError, RewardBundle
from .rewards import RewardConfig, combine, global_unsupervised, local_unsupervised

MAX_SUBSETS = 10**6


class InstanceTooLargeError(CosnetError):
    pass


def configuration_score(track: ClipTrack, positions, reward: RewardConfig = RewardConfig(), key_counts=None) -> float:
    """Mean combined reward of a stationary round at ``positions``."""
    conf = AgentConfiguration(np.sort(np.asarray(positions, dtype=np.int64)))
    N = conf.N
    mode = reward.mode
    bundle = RewardBundle()
    if mode in ("US", "U", "LU"):
        bundle.r_lu = np.array([local_unsupervised(track, conf, k) for k in range(N)])
    if mode in ("US", "U", "GU"):
        bundle.r_gu = np.full(N, global_unsupervised(track, conf))
    if mode in ("US", "S", "LS", "GS"):
        keys = track.key_counts() if key_counts is None else key_counts
        held = keys[conf.positions] / track.f_clip
        if mode in ("US", "S", "LS"):
            bundle.r_ls = 0.25 * (1.0 + held) + 0.5 * reward.alpha2
        if mode in ("US", "S", "GS"):
            bundle.r_gs = np.full(N, 0.5 * (1.0 + held.mean()))
    return float(combine(bundle, reward).r_total.mean())


def brute_force_best_positions(track: ClipTrack, n_agents: int, reward: RewardConfig = RewardConfig()):
    """Best sorted position tuple and its score; ties go to the lexicographically smallest tuple."""
    count = math.comb(track.M, n_agents)
    if count > MAX_SUBSETS:
        raise InstanceTooLargeError(f"C({track.M}, {n_agents}) = {count} subsets exceeds {MAX_SUBSETS}")
    keys = track.key_counts() if reward.supervised else None
    best, best_score = None, -math.inf
    for combo in itertools.combinations(range(track.M), n_agents):
        score = configuration_score(track, combo, reward, key_counts=keys)
        if score > best_score:
            best, best_score = combo, score
    return best, best_score
