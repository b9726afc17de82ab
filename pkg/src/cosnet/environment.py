"""Circular clip world: neighborhoods, five-clip inputs and round execution."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import AgentConfiguration, ClipTrack, CosnetError

DEFAULT_MAX_ROUNDS = 20


class UnreachableStateError(CosnetError):
    pass


@dataclass
class StepOutcome:
    """Result of one round.

    ``moved``, ``skipped_clips``, ``wrapped`` and ``origins``/``destinations`` are
    indexed by the agent's slot at the start of the round. ``order[k]`` is the
    round-start slot of the agent that ends up in sorted slot ``k``.
    """

    new_positions: np.ndarray
    order: np.ndarray
    moved: np.ndarray
    skipped_clips: list[list[int]]
    wrapped: np.ndarray
    origins: np.ndarray
    destinations: np.ndarray


def neighbor_clips(config: AgentConfiguration, agent: int, M: int) -> list[int]:
    """Clips strictly between the left and right adjacent agents' foci, minus the own focus."""
    if config.N < 2:
        raise ValueError("neighborhoods need at least 2 agents")
    own = int(config.positions[agent])
    stop = config.right(agent)
    out = []
    j = (config.left(agent) + 1) % M
    while j != stop:
        if j != own:
            out.append(j)
        j = (j + 1) % M
    return out


def five_clip_indices(config: AgentConfiguration, agent: int, M: int) -> list[int]:
    own = int(config.positions[agent])
    return [config.left(agent), (own - 1) % M, own, (own + 1) % M, config.right(agent)]


def five_clip_input(config: AgentConfiguration, agent: int, track: ClipTrack) -> np.ndarray:
    """Mean feature of left agent focus, left clip, own focus, right clip, right agent focus."""
    idx = five_clip_indices(config, agent, track.M)
    return track.features[idx].mean(axis=0)


def five_clip_inputs(config: AgentConfiguration, track: ClipTrack) -> np.ndarray:
    """Vectorized ``five_clip_input`` for every slot, shape ``(N, D)``."""
    p = config.positions
    M = track.M
    idx = np.stack([np.roll(p, 1), (p - 1) % M, p, (p + 1) % M, np.roll(p, -1)], axis=1)
    return track.features[idx].mean(axis=1)


def execute_round(config: AgentConfiguration, actions, M: int) -> StepOutcome:
    """Move agents one by one in slot order, pushing through occupied clips.

    A mover lands on ``(pos + step) mod M``; while that clip is occupied it keeps
    advancing one clip in its direction. Every clip passed between origin and
    final destination is recorded as skipped, occupied or not.
    """
    origins = np.asarray(config.positions, dtype=np.int64)
    steps = np.asarray(actions, dtype=np.int64)
    N = len(origins)
    if steps.shape != (N,):
        raise ValueError(f"expected {N} actions, got shape {steps.shape}")
    if N >= M:
        raise UnreachableStateError(f"{N} agents on {M} clips leaves no free clip")

    pos = origins.copy()
    occupied = set(pos.tolist())
    moved = np.zeros(N, dtype=bool)
    wrapped = np.zeros(N, dtype=bool)
    skipped: list[list[int]] = [[] for _ in range(N)]
    for i in range(N):
        step = int(steps[i])
        if step == 0:
            continue
        direction = 1 if step > 0 else -1
        start = int(pos[i])
        occupied.discard(start)
        distance = abs(step)
        while (start + direction * distance) % M in occupied:
            distance += 1
        dest = (start + direction * distance) % M
        path = []
        seen = set()
        for d in range(1, distance):
            j = (start + direction * d) % M
            if j != start and j != dest and j not in seen:
                seen.add(j)
                path.append(j)
        raw = start + direction * distance
        wrapped[i] = raw >= M or raw < 0
        moved[i] = True
        skipped[i] = path
        pos[i] = dest
        occupied.add(dest)

    order = np.argsort(pos, kind="stable")
    return StepOutcome(
        new_positions=pos[order],
        order=order,
        moved=moved,
        skipped_clips=skipped,
        wrapped=wrapped,
        origins=origins,
        destinations=pos,
    )


def is_terminal(actions, round_index: int, max_rounds: int = DEFAULT_MAX_ROUNDS) -> bool:
    """True once every agent stays still or the round cap is reached."""
    return bool(np.all(np.asarray(actions) == 0)) or round_index + 1 >= max_rounds
