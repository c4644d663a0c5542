"""Discrete entropic optimal transport: log-domain Sinkhorn and exhaustive search.

These solvers provide ground truth for the static bridge on small point sets.
The entropy weight of the static problem, ``2 * tau``, is the Sinkhorn
regularizer ``epsilon``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import ContractError, ConvergenceError


@dataclass
class DiscreteCoupling:
    matrix: np.ndarray
    source_marginal: np.ndarray
    target_marginal: np.ndarray
    iterations: int = 0

    @property
    def violation(self):
        """Largest L1 error of the row and column sums."""
        rows = np.abs(self.matrix.sum(axis=1) - self.source_marginal).sum()
        cols = np.abs(self.matrix.sum(axis=0) - self.target_marginal).sum()
        return float(max(rows, cols))

    def transport_cost(self, cost):
        return float(np.sum(self.matrix * cost))


def squared_euclidean_cost(x, y):
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    return ((x[:, None, :] - y[None, :, :]) ** 2).sum(axis=-1)


def _check_marginal(p, name):
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or np.any(p <= 0) or not np.isclose(p.sum(), 1.0, atol=1e-12):
        raise ContractError(f"{name} must be a strictly positive probability vector")
    return p


def sinkhorn(cost, a, b, epsilon, max_iter=100_000, tol=1e-9, eps_scaling=True, history=None,
             newton_every=200):
    """Entropic OT coupling ``diag(u) exp(-cost/epsilon) diag(v)``.

    Iterates on the dual potentials in the log domain until the row-marginal
    violation (columns are exact after each sweep) drops below ``tol``.

    With ``eps_scaling`` the regularizer is first annealed geometrically from the
    cost range down to ``epsilon``, warm-starting each level from the last;
    plain iterations at small ``epsilon`` converge only like 1/k. If
    ``history`` is a list, the violation after every iteration at the target
    ``epsilon`` is appended to it.
    """
    cost = np.asarray(cost, dtype=float)
    a, b = _check_marginal(a, "a"), _check_marginal(b, "b")
    if cost.shape != (a.size, b.size):
        raise ContractError(f"cost shape {cost.shape} does not match marginals {a.size}x{b.size}")
    if not np.all(np.isfinite(cost)):
        raise ContractError("cost must be finite")
    if epsilon <= 0:
        raise ContractError("epsilon must be positive")
    log_a, log_b = np.log(a), np.log(b)
    f = np.zeros(a.size)
    g = np.zeros(b.size)

    levels = []
    if eps_scaling:
        level = float(np.max(cost) - np.min(cost))
        while level > 2 * epsilon:
            levels.append(level)
            level *= 0.5
    levels.append(epsilon)

    total = 0
    violation = np.inf
    for eps in levels:
        final = eps == epsilon
        level_tol = tol if final else max(tol, 1e-3)
        for _ in range(max_iter):
            f = eps * (log_a - logsumexp((g[None, :] - cost) / eps, axis=1))
            g = eps * (log_b - logsumexp((f[:, None] - cost) / eps, axis=0))
            plan = np.exp((f[:, None] + g[None, :] - cost) / eps)
            violation = np.abs(plan.sum(axis=1) - a).sum()
            total += 1
            if final and history is not None:
                history.append(float(violation))
            if violation < level_tol:
                break
            if final and newton_every and total % newton_every == 0:
                f, g, violation = _newton_polish(cost, log_a, log_b, g, eps, tol)
                if violation < tol:
                    plan = np.exp((f[:, None] + g[None, :] - cost) / eps)
                    break
        else:
            if final:
                raise ConvergenceError(
                    f"sinkhorn did not converge in {max_iter} iterations (violation {violation:.3e})",
                    violation=float(violation))
    return DiscreteCoupling(plan, a, b, iterations=total)


def _newton_polish(cost, log_a, log_b, g, eps, tol, steps=30):
    """Damped Newton ascent on the semi-dual in ``g`` (rows kept exact through ``f``).

    Returns the potentials and the column violation reached; the input ``g``
    comes back unchanged if no step improves the dual.
    """
    a, b = np.exp(log_a), np.exp(log_b)

    def row_potential(g):
        return eps * (log_a - logsumexp((g[None, :] - cost) / eps, axis=1))

    def dual(f, g):
        return float(a @ f + b @ g)

    f = row_potential(g)
    plan = np.exp((f[:, None] + g[None, :] - cost) / eps)
    col = plan.sum(axis=0)
    violation = np.abs(col - b).sum()
    for _ in range(steps):
        if violation < tol:
            break
        grad = b - col
        hess = (np.diag(col) - plan.T @ (plan / a[:, None])) / eps
        # potentials are defined up to a constant: pin the last coordinate
        step = np.zeros_like(g)
        try:
            step[:-1] = np.linalg.solve(hess[:-1, :-1], grad[:-1])
        except np.linalg.LinAlgError:
            break
        base, slope = dual(f, g), float(grad @ step)
        alpha = 1.0
        while alpha > 1e-10:
            g_new = g + alpha * step
            f_new = row_potential(g_new)
            if dual(f_new, g_new) >= base + 1e-4 * alpha * slope:
                break
            alpha *= 0.5
        else:
            break
        g, f = g_new, f_new
        plan = np.exp((f[:, None] + g[None, :] - cost) / eps)
        col = plan.sum(axis=0)
        violation = np.abs(col - b).sum()
    return f, g, float(violation)


def brute_force_ot(cost, a=None, b=None):
    """Optimal permutation coupling by exhaustive enumeration (n <= 8, uniform marginals)."""
    cost = np.asarray(cost, dtype=float)
    m, n = cost.shape
    if m != n:
        raise ContractError("brute_force_ot needs a square cost matrix")
    if n > 8:
        raise ContractError(f"brute_force_ot limited to n <= 8, got {n}")
    uniform = np.full(n, 1.0 / n)
    for p in (a, b):
        if p is not None and not np.allclose(p, uniform):
            raise ContractError("brute_force_ot needs uniform marginals")
    rows = np.arange(n)
    best_perm, best = None, np.inf
    for perm in itertools.permutations(range(n)):
        total = cost[rows, perm].sum()
        if total < best:
            best_perm, best = perm, total
    plan = np.zeros((n, n))
    plan[rows, best_perm] = 1.0 / n
    return DiscreteCoupling(plan, uniform, uniform.copy())


def entropy(matrix):
    p = np.asarray(matrix, dtype=float)
    nz = p[p > 0]
    return float(-np.sum(nz * np.log(nz)))


def entropic_objective(gamma, cost, tau):
    """Expected cost minus ``2 tau`` times the coupling entropy."""
    matrix = gamma.matrix if isinstance(gamma, DiscreteCoupling) else np.asarray(gamma, dtype=float)
    return float(np.sum(matrix * np.asarray(cost, dtype=float)) - 2.0 * tau * entropy(matrix))
