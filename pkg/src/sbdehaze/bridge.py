"""Gaussian bridge posteriors and Markov-chain sampling on a uniform time grid.

Arrays passed to these functions may be numpy arrays or Tensors; results are
numpy arrays because sampling never joins the differentiation graph.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DomainError
from .tensor import Tensor, no_grad


def _arr(x):
    return x.data if isinstance(x, Tensor) else np.asarray(x)


def substream(seed, *keys):
    """Independent generator for the stream identified by ``(seed, *keys)``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *[int(k) for k in keys]]))


@dataclass(frozen=True)
class BridgeSchedule:
    """Uniform discretization of [0, 1] into ``n_intervals`` steps."""

    n_intervals: int = 5
    tau: float = 0.01
    grid: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.n_intervals) < 1:
            raise ContractError(f"n_intervals must be positive, got {self.n_intervals}")
        if self.tau < 0:
            raise ContractError(f"tau must be nonnegative, got {self.tau}")
        object.__setattr__(self, "grid", np.arange(self.n_intervals + 1) / self.n_intervals)

    def t(self, i):
        return float(self.grid[i])

    def on_grid(self, t):
        return bool(np.any(np.isclose(self.grid, t, rtol=0, atol=1e-12)))


@dataclass
class GaussianParams:
    mean: np.ndarray
    variance: float

    def sample(self, rng):
        if self.variance == 0:
            return np.array(self.mean, copy=True)
        noise = rng.standard_normal(self.mean.shape).astype(self.mean.dtype, copy=False)
        return self.mean + np.sqrt(self.variance) * noise


def bridge_posterior(x0, x1, t, tau):
    """Law of x(t) given both endpoints: N(t x1 + (1-t) x0, t(1-t) tau I)."""
    if not 0.0 <= t <= 1.0:
        raise DomainError(f"t must lie in [0, 1], got {t}")
    x0, x1 = _arr(x0), _arr(x1)
    return GaussianParams(t * x1 + (1.0 - t) * x0, t * (1.0 - t) * tau)


def sub_bridge_posterior(x_a, x_b, t, t_a, t_b, tau):
    """Law of x(t) given x(t_a) and x(t_b) on a sub-interval of the bridge."""
    if not t_a < t_b:
        raise DomainError(f"degenerate interval [{t_a}, {t_b}]")
    if not t_a <= t <= t_b:
        raise DomainError(f"t={t} outside [{t_a}, {t_b}]")
    s = (t - t_a) / (t_b - t_a)
    x_a, x_b = _arr(x_a), _arr(x_b)
    return GaussianParams(s * x_b + (1.0 - s) * x_a, s * (1.0 - s) * tau * (t_b - t_a))


def step_posterior(x_tj, x1_pred, t_j, t_j1, tau):
    """Transition law x(t_j) -> x(t_{j+1}) given a prediction of the endpoint."""
    if not t_j < t_j1 <= 1.0:
        raise DomainError(f"need t_j < t_j1 <= 1, got {t_j}, {t_j1}")
    s = (t_j1 - t_j) / (1.0 - t_j)
    x_tj, x1_pred = _arr(x_tj), _arr(x1_pred)
    return GaussianParams(s * x1_pred + (1.0 - s) * x_tj, s * (1.0 - s) * tau * (1.0 - t_j))


def markov_step(x_tj, x1_pred, t_j, t_j1, tau, rng):
    """Sample x(t_{j+1}); at t_j1 == 1 this returns ``x1_pred`` exactly."""
    return step_posterior(x_tj, x1_pred, t_j, t_j1, tau).sample(rng)


def roll_chain(x0, generator, i, schedule, rng):
    """Run ``i`` Markov steps from ``x0`` and return x(t_i).

    ``generator(x, t)`` returns the endpoint prediction for state ``x`` at time
    ``t``. No gradients are recorded.
    """
    if not 0 <= i <= schedule.n_intervals:
        raise ContractError(f"chain length {i} outside [0, {schedule.n_intervals}]")
    x = np.array(_arr(x0), copy=True)
    with no_grad():
        for j in range(i):
            t_j, t_j1 = schedule.t(j), schedule.t(j + 1)
            x1_pred = _arr(generator(x, t_j))
            x = markov_step(x, x1_pred, t_j, t_j1, schedule.tau, rng)
    return x
