"""Episode rollout, REINFORCE updates with Adam, and the per-video training schedule."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import (
    DEFAULT_STEPS,
    ActionSpace,
    AgentConfiguration,
    ClipTrack,
    CosnetError,
    RewardBundle,
    random_configuration,
    training_agents,
    validate_track,
)
from .environment import DEFAULT_MAX_ROUNDS, UnreachableStateError, execute_round, five_clip_inputs, is_terminal
from .evaluation import extract_summary, f_score
from .policy import PolicyParameters, RecurrentState, backward, forward, init_parameters, sample_action
from .rewards import RewardConfig, discounted_returns, round_rewards

log = logging.getLogger(__name__)

STREAMS = {"init": 0, "episodes": 1, "sampling": 2, "eval": 3}


class ConfigurationError(CosnetError):
    pass


class NonFiniteGradientError(CosnetError):
    pass


def rng_stream(seed: int, name: str) -> np.random.SeedSequence:
    """Named child seed sequence; every random draw in a run descends from one of these."""
    return np.random.SeedSequence(entropy=seed, spawn_key=(STREAMS[name],))


@dataclass
class TrainConfig:
    K: int = 10
    episodes_per_dataset: int = 5
    max_rounds: int = DEFAULT_MAX_ROUNDS
    eta: float = 1e-4
    l2: float = 1.0
    hidden: int = 512
    dense: Optional[int] = None
    seed: int = 0
    n_agents: Optional[int] = None
    baseline: bool = False
    baseline_decay: float = 0.9
    eval_episodes: int = 10
    threads: int = 1
    steps: tuple[int, ...] = DEFAULT_STEPS
    reward: RewardConfig = field(default_factory=RewardConfig)

    def __post_init__(self):
        if self.K < 1:
            raise ConfigurationError("K must be >= 1")
        if self.eta <= 0:
            raise ConfigurationError("eta must be positive")
        if not 0 <= self.l2 <= 1:
            raise ConfigurationError("l2 factor must lie in [0, 1]")
        if self.max_rounds < 1:
            raise ConfigurationError("max_rounds must be >= 1")
        if self.episodes_per_dataset < 1:
            raise ConfigurationError("episodes_per_dataset must be >= 1")

    @property
    def action_space(self) -> ActionSpace:
        return ActionSpace(self.steps)

    @property
    def dense_dim(self) -> int:
        return self.dense or self.hidden

    def agents_for(self, track: ClipTrack) -> int:
        return self.n_agents if self.n_agents else training_agents(track.f_total, track.f_clip)


@dataclass
class EpisodeTrace:
    """Everything recorded during one episode.

    Per-agent arrays are indexed by agent identity (the agent's sorted slot at
    round 0), which stays fixed even when pushes reorder the foci.
    """

    video_id: str
    positions: list[np.ndarray]  # sorted foci, T + 1 entries
    identities: list[np.ndarray]  # identities[t][k]: agent in sorted slot k before round t
    inputs: np.ndarray  # (T, N, D)
    probs: np.ndarray  # (T, N, U)
    actions: np.ndarray  # (T, N) action indices
    steps: np.ndarray  # (T, N) clip offsets
    rewards: list[RewardBundle]
    returns: np.ndarray  # (T, N)

    @property
    def rounds(self) -> int:
        return len(self.actions)

    @property
    def n_agents(self) -> int:
        return self.actions.shape[1]

    @property
    def final_positions(self) -> np.ndarray:
        return self.positions[-1]

    @property
    def total_rewards(self) -> np.ndarray:
        return np.stack([b.r_total for b in self.rewards])

    @property
    def episode_return(self) -> float:
        """Mean over agents of the return from the first round."""
        return float(self.returns[0].mean())


def _by_identity(bundle: RewardBundle, identities: np.ndarray) -> RewardBundle:
    out = RewardBundle()
    for name, value in bundle.populated().items():
        arranged = np.empty_like(value)
        arranged[identities] = value
        setattr(out, name, arranged)
    return out


def run_episode(track: ClipTrack, params: PolicyParameters, config: TrainConfig, rng: np.random.Generator,
                sample_rng: Optional[np.random.Generator] = None, key_counts=None) -> EpisodeTrace:
    """Roll out one episode from random distinct starting foci until termination."""
    sample_rng = rng if sample_rng is None else sample_rng
    N = config.agents_for(track)
    if 2 * N > track.M:
        raise UnreachableStateError(f"{N} agents need at least {2 * N} clips, track has {track.M}")
    space = config.action_space
    if params.n_actions != len(space):
        raise ConfigurationError(f"policy has {params.n_actions} outputs, action space has {len(space)}")
    if config.reward.supervised and key_counts is None:
        key_counts = track.key_counts()

    conf = random_configuration(track.M, N, rng)
    ids = np.arange(N)
    state = RecurrentState.zeros(N, params.hidden_dim)
    positions, identities, inputs, probs, actions, steps, bundles = [conf.positions], [], [], [], [], [], []
    t = 0
    while True:
        x = np.empty((N, track.D))
        x[ids] = five_clip_inputs(conf, track)
        dist, state = forward(params, x, state)
        a, _ = sample_action(dist, sample_rng)
        offsets = space.offsets(a)
        outcome = execute_round(conf, offsets[ids], track.M)
        bundle = round_rewards(track, conf, outcome, config.reward, key_counts=key_counts)

        identities.append(ids)
        inputs.append(x)
        probs.append(dist.probs)
        actions.append(a)
        steps.append(offsets)
        bundles.append(_by_identity(bundle, ids))

        ids = ids[outcome.order]
        conf = AgentConfiguration(outcome.new_positions, round=t + 1)
        positions.append(conf.positions)
        if is_terminal(offsets, t, config.max_rounds):
            break
        t += 1

    rewards = np.stack([b.r_total for b in bundles])
    return EpisodeTrace(
        video_id=track.video_id,
        positions=positions,
        identities=identities,
        inputs=np.stack(inputs),
        probs=np.stack(probs),
        actions=np.stack(actions),
        steps=np.stack(steps),
        rewards=bundles,
        returns=discounted_returns(rewards, config.reward.gamma),
    )


class Adam:
    """Adam with bias correction; the L2 term is added to the gradient by the caller."""

    def __init__(self, params: PolicyParameters, lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = PolicyParameters.zeros_like(params)
        self.v = PolicyParameters.zeros_like(params)

    def step(self, params: PolicyParameters, grad: PolicyParameters) -> PolicyParameters:
        self.t += 1
        c1 = 1 - self.beta1 ** self.t
        c2 = 1 - self.beta2 ** self.t
        new = []
        for p, g, m, v in zip(params.arrays(), grad.arrays(), self.m.arrays(), self.v.arrays()):
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            new.append(p - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps))
        return PolicyParameters(*new)


@dataclass
class UpdateReport:
    grad_norm: float
    mean_return: float


def advantages(trace: EpisodeTrace, baseline=0.0) -> np.ndarray:
    """Returns minus the baseline; an array baseline is indexed by round."""
    b = np.asarray(baseline, dtype=np.float64)
    if b.ndim == 0:
        return trace.returns - b
    return trace.returns - b[:trace.rounds, None]


def policy_gradient(params: PolicyParameters, traces: Sequence[EpisodeTrace], baseline: float = 0.0) -> PolicyParameters:
    """Sampled REINFORCE gradient of the loss, averaged over the traces."""
    K = len(traces)
    total = PolicyParameters.zeros_like(params)
    for trace in traces:
        g = backward(params, trace.inputs, trace.actions, advantages(trace, baseline), scale=1.0 / K)
        for acc, part in zip(total.arrays(), g.arrays()):
            acc += part
    return total


def loss_value(params: PolicyParameters, traces: Sequence[EpisodeTrace], l2: float, baseline: float = 0.0) -> float:
    """The surrogate loss whose gradient ``update`` follows."""
    from .policy import surrogate_loss

    K = len(traces)
    pg = sum(surrogate_loss(params, t.inputs, t.actions, advantages(t, baseline), scale=1.0 / K) for t in traces)
    return pg + l2 * params.sum_squares()


def update(params: PolicyParameters, traces: Sequence[EpisodeTrace], config: TrainConfig, optimizer: Adam,
           baseline: float = 0.0) -> tuple[PolicyParameters, UpdateReport]:
    """One Adam step on the averaged REINFORCE loss plus ``l2 * sum(w ** 2)``.

    Raises ``NonFiniteGradientError`` without touching ``params`` or the
    optimizer state if any reward or gradient is non-finite.
    """
    if len(traces) != config.K:
        raise ConfigurationError(f"expected {config.K} traces, got {len(traces)}")
    for trace in traces:
        if not np.all(np.isfinite(trace.returns)):
            raise NonFiniteGradientError(f"non-finite returns in an episode of {trace.video_id!r}")
    grad = policy_gradient(params, traces, baseline)
    for g, p in zip(grad.arrays(), params.arrays()):
        g += 2.0 * config.l2 * p
    if not grad.all_finite():
        raise NonFiniteGradientError("non-finite policy gradient")
    new_params = optimizer.step(params, grad)
    report = UpdateReport(
        grad_norm=grad.norm(),
        mean_return=float(np.mean([t.episode_return for t in traces])),
    )
    return new_params, report


class ReturnBaseline:
    """Exponential moving average of the mean return at each round index.

    Off by default; when enabled, ``update`` subtracts it from the returns.
    """

    def __init__(self, max_rounds: int, decay: float = 0.9):
        self.decay = decay
        self.value = np.zeros(max_rounds)
        self.seen = np.zeros(max_rounds, dtype=bool)

    def current(self) -> np.ndarray:
        return self.value.copy()

    def observe(self, traces: Sequence[EpisodeTrace]):
        total = np.zeros_like(self.value)
        count = np.zeros_like(self.value)
        for trace in traces:
            T = trace.rounds
            total[:T] += trace.returns.mean(axis=1)
            count[:T] += 1
        hit = count > 0
        mean = np.divide(total, count, out=np.zeros_like(total), where=hit)
        fresh = hit & ~self.seen
        old = hit & self.seen
        self.value[fresh] = mean[fresh]
        self.value[old] = self.decay * self.value[old] + (1 - self.decay) * mean[old]
        self.seen |= hit


@dataclass
class CurveRow:
    update_index: int
    video_id: str
    mean_return: float
    grad_norm: float
    f_score: Optional[float]


@dataclass
class TrainResult:
    params: PolicyParameters
    curve: list[CurveRow]


def _rollouts(track, params, config, episode_seqs, sample_seqs, key_counts):
    def one(pair):
        ep, sm = pair
        return run_episode(track, params, config, np.random.default_rng(ep), np.random.default_rng(sm),
                           key_counts=key_counts)

    pairs = list(zip(episode_seqs, sample_seqs))
    if config.threads > 1 and len(pairs) > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            return list(pool.map(one, pairs))
    return [one(p) for p in pairs]


def initial_parameters(track: ClipTrack, config: TrainConfig) -> PolicyParameters:
    return init_parameters(track.D, config.hidden, config.dense_dim, len(config.action_space),
                           seed=np.random.default_rng(rng_stream(config.seed, "init")))


def train(dataset: Sequence[ClipTrack], config: TrainConfig, params: Optional[PolicyParameters] = None,
          progress=None) -> TrainResult:
    """Run ``episodes_per_dataset`` passes; each track gets ``K`` rollouts and one update."""
    if not dataset:
        raise ConfigurationError("training needs at least one track")
    for track in dataset:
        problems = validate_track(track)
        if problems:
            raise ConfigurationError(f"invalid track {track.video_id!r}: {'; '.join(problems)}")
        if config.reward.supervised and not track.annotated:
            raise ConfigurationError(f"mode {config.reward.mode} needs annotations for {track.video_id!r}")
        if track.D != dataset[0].D:
            raise ConfigurationError("all tracks must share the feature dimension")
    if params is None:
        params = initial_parameters(dataset[0], config)
    optimizer = Adam(params, config.eta)
    episode_seq = rng_stream(config.seed, "episodes")
    sample_seq = rng_stream(config.seed, "sampling")
    keys = {id(t): (t.key_counts() if t.annotated else None) for t in dataset}
    baseline = ReturnBaseline(config.max_rounds, config.baseline_decay) if config.baseline else None
    curve = []
    update_index = 0
    for _ in range(config.episodes_per_dataset):
        for track in dataset:
            traces = _rollouts(track, params, config, episode_seq.spawn(config.K), sample_seq.spawn(config.K),
                               keys[id(track)])
            b = baseline.current() if baseline is not None else 0.0
            params, report = update(params, traces, config, optimizer, baseline=b)
            if baseline is not None:
                baseline.observe(traces)
            fs = None
            if track.annotated and track.annotations.any():
                fs = float(np.mean([f_score(extract_summary(t, track).mask, track.annotations) for t in traces]))
            curve.append(CurveRow(update_index, track.video_id, report.mean_return, report.grad_norm, fs))
            if progress is not None:
                progress(curve[-1])
            log.debug("update %d %s return=%.4f grad=%.4g", update_index, track.video_id,
                      report.mean_return, report.grad_norm)
            update_index += 1
    return TrainResult(params, curve)


def rollout_summaries(track: ClipTrack, params: PolicyParameters, config: TrainConfig, episodes: int,
                      seed: Optional[int] = None) -> list[EpisodeTrace]:
    """Independent evaluation rollouts drawn from the ``eval`` stream."""
    seq = rng_stream(config.seed if seed is None else seed, "eval")
    keys = track.key_counts() if config.reward.supervised else None
    out = []
    for child in seq.spawn(episodes):
        a, b = child.spawn(2)
        out.append(run_episode(track, params, config, np.random.default_rng(a), np.random.default_rng(b),
                               key_counts=keys))
    return out


def evaluate_policy(track: ClipTrack, params: PolicyParameters, config: TrainConfig, episodes: Optional[int] = None,
                    seed: Optional[int] = None) -> float:
    """Mean F-score of the terminal summaries over evaluation rollouts."""
    traces = rollout_summaries(track, params, config, episodes or config.eval_episodes, seed)
    return float(np.mean([f_score(extract_summary(t, track).mask, track.annotations) for t in traces]))
