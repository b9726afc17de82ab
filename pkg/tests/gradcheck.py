"""Central finite-difference check of the analytic REINFORCE gradient."""

import numpy as np

from cosnet.policy import backward, init_parameters, surrogate_loss

EPS = 1e-5
FLOOR = 1e-6


def random_tape(rng, D, H, n_actions, T, N):
    params = init_parameters(D, H, H, n_actions, seed=rng)
    # push weights beyond the init scale so every gate is exercised
    for arr in params.arrays():
        arr += rng.normal(0, 0.3, arr.shape)
    inputs = rng.standard_normal((T, N, D))
    actions = rng.integers(0, n_actions, (T, N))
    returns = rng.uniform(0, 3, (T, N))
    return params, inputs, actions, returns


def max_relative_error(params, inputs, actions, returns, scale=1.0):
    analytic = backward(params, inputs, actions, returns, scale)
    worst = 0.0
    for (name, p), (_, g) in zip(params.items(), analytic.items()):
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            old = p[idx]
            p[idx] = old + EPS
            up = surrogate_loss(params, inputs, actions, returns, scale)
            p[idx] = old - EPS
            down = surrogate_loss(params, inputs, actions, returns, scale)
            p[idx] = old
            numeric = (up - down) / (2 * EPS)
            err = abs(numeric - g[idx]) / max(abs(numeric), abs(g[idx]), FLOOR)
            worst = max(worst, err)
    return worst
