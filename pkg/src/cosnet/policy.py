"""Shared policy: one LSTM step per round, two dense layers, softmax over moves.

All agents run through the same parameters as rows of a batch; hidden states
never mix across rows. ``backward`` is exact backpropagation through time of
the REINFORCE surrogate ``-scale * sum_t sum_a R[t, a] * log pi(u[t, a])``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .core import CosnetError

PARAM_NAMES = ("Wx", "Wh", "b", "W1", "b1", "W2", "b2")


class NonFiniteError(CosnetError):
    pass


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass
class PolicyParameters:
    """LSTM gates are stacked in ``i, f, o, g`` order along the first axis."""

    Wx: np.ndarray  # (4H, D)
    Wh: np.ndarray  # (4H, H)
    b: np.ndarray  # (4H,)
    W1: np.ndarray  # (H2, H)
    b1: np.ndarray  # (H2,)
    W2: np.ndarray  # (U, H2)
    b2: np.ndarray  # (U,)

    @property
    def input_dim(self) -> int:
        return self.Wx.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.Wh.shape[1]

    @property
    def dense_dim(self) -> int:
        return self.W1.shape[0]

    @property
    def n_actions(self) -> int:
        return self.W2.shape[0]

    def items(self) -> Iterator[tuple[str, np.ndarray]]:
        for name in PARAM_NAMES:
            yield name, getattr(self, name)

    def arrays(self) -> list[np.ndarray]:
        return [getattr(self, name) for name in PARAM_NAMES]

    def copy(self) -> "PolicyParameters":
        return PolicyParameters(*(a.copy() for a in self.arrays()))

    @classmethod
    def zeros_like(cls, other: "PolicyParameters") -> "PolicyParameters":
        return cls(*(np.zeros_like(a) for a in other.arrays()))

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def norm(self) -> float:
        return float(np.sqrt(sum(float(np.sum(a * a)) for a in self.arrays())))

    def sum_squares(self) -> float:
        return float(sum(float(np.sum(a * a)) for a in self.arrays()))

    def equals(self, other: "PolicyParameters") -> bool:
        return all(np.array_equal(a, b) for a, b in zip(self.arrays(), other.arrays()))


def init_parameters(D: int, H: int, H2: int, n_actions: int, seed=0) -> PolicyParameters:
    """Uniform init in ``+-1/sqrt(fan_in)``, zero biases, forget-gate bias 1."""
    if min(D, H, H2, n_actions) < 1:
        raise ValueError("all dimensions must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    def uniform(shape, fan_in):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    b = np.zeros(4 * H)
    b[H:2 * H] = 1.0
    return PolicyParameters(
        Wx=uniform((4 * H, D), D),
        Wh=uniform((4 * H, H), H),
        b=b,
        W1=uniform((H2, H), H),
        b1=np.zeros(H2),
        W2=uniform((n_actions, H2), H2),
        b2=np.zeros(n_actions),
    )


@dataclass
class RecurrentState:
    h: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros(cls, n_agents: int, H: int) -> "RecurrentState":
        return cls(np.zeros((n_agents, H)), np.zeros((n_agents, H)))

    def take(self, index) -> "RecurrentState":
        return RecurrentState(self.h[index], self.c[index])


@dataclass
class ActionDistribution:
    probs: np.ndarray
    log_probs: np.ndarray


def log_softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def _step(params: PolicyParameters, x, h, c):
    H = params.hidden_dim
    z = x @ params.Wx.T + h @ params.Wh.T + params.b
    i = sigmoid(z[:, :H])
    f = sigmoid(z[:, H:2 * H])
    o = sigmoid(z[:, 2 * H:3 * H])
    g = np.tanh(z[:, 3 * H:])
    c_new = f * c + i * g
    tc = np.tanh(c_new)
    h_new = o * tc
    a1 = h_new @ params.W1.T + params.b1
    d1 = np.maximum(a1, 0.0)
    scores = d1 @ params.W2.T + params.b2
    cache = (x, h, c, i, f, o, g, tc, h_new, a1, d1)
    return scores, h_new, c_new, cache


def forward(params: PolicyParameters, inputs: np.ndarray, state: RecurrentState):
    """One decision step for a batch of agents.

    ``inputs`` has shape ``(N, D)`` (a single ``(D,)`` vector is accepted).
    Returns the action distribution and the next recurrent state.
    """
    x = np.asarray(inputs, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
        state = RecurrentState(np.atleast_2d(state.h), np.atleast_2d(state.c))
    scores, h_new, c_new, _ = _step(params, x, state.h, state.c)
    if not (np.all(np.isfinite(scores)) and np.all(np.isfinite(c_new))):
        raise NonFiniteError("non-finite activations in policy forward pass")
    logp = log_softmax(scores)
    dist = ActionDistribution(np.exp(logp), logp)
    new_state = RecurrentState(h_new, c_new)
    if single:
        dist = ActionDistribution(dist.probs[0], dist.log_probs[0])
        new_state = RecurrentState(h_new[0], c_new[0])
    return dist, new_state


def sample_action(dist: ActionDistribution, rng: np.random.Generator):
    """Draw one action per row; returns ``(indices, log_probs)`` (scalars for 1-D input)."""
    probs = np.atleast_2d(dist.probs)
    logp = np.atleast_2d(dist.log_probs)
    cdf = np.cumsum(probs, axis=1)
    u = rng.random(probs.shape[0])[:, None] * cdf[:, -1:]
    # first slot whose cdf exceeds u; never a zero-probability slot
    idx = (u >= cdf).sum(axis=1)
    chosen = logp[np.arange(len(idx)), idx]
    if np.ndim(dist.probs) == 1:
        return int(idx[0]), float(chosen[0])
    return idx, chosen


def surrogate_loss(params: PolicyParameters, inputs, actions, returns, scale: float = 1.0) -> float:
    """``-scale * sum R * log pi(u)`` over a recorded episode of shape ``(T, N, ...)``."""
    inputs = np.asarray(inputs, dtype=np.float64)
    T, N, _ = inputs.shape
    H = params.hidden_dim
    h = np.zeros((N, H))
    c = np.zeros((N, H))
    total = 0.0
    rows = np.arange(N)
    for t in range(T):
        scores, h, c, _ = _step(params, inputs[t], h, c)
        logp = log_softmax(scores)
        total += float(np.sum(returns[t] * logp[rows, actions[t]]))
    return -scale * total


def backward(params: PolicyParameters, inputs, actions, returns, scale: float = 1.0) -> PolicyParameters:
    """Gradient of ``surrogate_loss`` with respect to every parameter.

    ``inputs`` is ``(T, N, D)``, ``actions`` ``(T, N)`` action indices and
    ``returns`` ``(T, N)``; row ``a`` must follow the same agent in every round.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    actions = np.asarray(actions, dtype=np.int64)
    returns = np.asarray(returns, dtype=np.float64)
    T, N, _ = inputs.shape
    H = params.hidden_dim
    rows = np.arange(N)

    h = np.zeros((N, H))
    c = np.zeros((N, H))
    caches = []
    dscores = []
    for t in range(T):
        scores, h, c, cache = _step(params, inputs[t], h, c)
        probs = np.exp(log_softmax(scores))
        d = probs.copy()
        d[rows, actions[t]] -= 1.0
        # d(-R log p_u)/d scores = R (p - onehot)
        dscores.append(scale * returns[t][:, None] * d)
        caches.append(cache)

    grad = PolicyParameters.zeros_like(params)
    dh_next = np.zeros((N, H))
    dc_next = np.zeros((N, H))
    for t in range(T - 1, -1, -1):
        x, h_prev, c_prev, i, f, o, g, tc, h_new, a1, d1 = caches[t]
        ds = dscores[t]
        grad.W2 += ds.T @ d1
        grad.b2 += ds.sum(axis=0)
        dd1 = ds @ params.W2
        da1 = dd1 * (a1 > 0)
        grad.W1 += da1.T @ h_new
        grad.b1 += da1.sum(axis=0)
        dh = da1 @ params.W1 + dh_next
        do = dh * tc
        dc = dh * o * (1.0 - tc * tc) + dc_next
        di = dc * g
        df = dc * c_prev
        dg = dc * i
        dz = np.concatenate([
            di * i * (1.0 - i),
            df * f * (1.0 - f),
            do * o * (1.0 - o),
            dg * (1.0 - g * g),
        ], axis=1)
        grad.Wx += dz.T @ x
        grad.Wh += dz.T @ h_prev
        grad.b += dz.sum(axis=0)
        dh_next = dz @ params.Wh
        dc_next = dc * f
    return grad
