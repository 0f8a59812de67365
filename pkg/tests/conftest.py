"""Shared brute-force oracles and generators for the test suite.

Everything here is deliberately independent of the library internals: the
oracles enumerate permutations and scan prefixes directly, so library results
can be checked against them without circularity.
"""

from __future__ import annotations

import itertools

import numpy as np


def naive_select(order, utilities, w):
    """Reference user model: highest-utility item among the first w displayed."""
    return max(order[:w], key=lambda i: utilities[i])


def best_mean_by_window(utilities, means, w):
    """Best expected payoff any single ranking achieves at window ``w``."""
    n = len(utilities)
    return max(means[naive_select(order, utilities, w)]
               for order in itertools.permutations(range(n)))


def optimal_orders(utilities, means):
    """All rankings simultaneously optimal at every window length (by enumeration)."""
    n = len(utilities)
    targets = [best_mean_by_window(utilities, means, w) for w in range(1, n + 1)]
    out = set()
    for order in itertools.permutations(range(n)):
        if all(means[naive_select(order, utilities, w)] == targets[w - 1]
               for w in range(1, n + 1)):
            out.add(order)
    return out


def brute_force_best_fixed(tape_values, q, utilities):
    """Best total tape payoff over single rankings.

    The polytope optimum must coincide: a linear objective over the convex
    hull of ranking matrices is attained at a vertex.  In rank space the pick
    of a ranking at window w is simply the largest rank label shown in the
    first w slots.
    """
    tape_values = np.asarray(tape_values, dtype=float)
    q = np.asarray(q, dtype=float)
    n = q.size
    totals = tape_values.sum(axis=1)
    rank_totals = totals[np.argsort(np.asarray(utilities, dtype=float))]
    best = -np.inf
    for order in itertools.permutations(range(n)):
        value = 0.0
        top = -1
        for w0, label in enumerate(order):
            top = max(top, label)
            value += q[w0] * rank_totals[top]
        best = max(best, value)
    return float(best)


def selection_matrix_oracle(order):
    """Selection matrix of a rank-space ranking, built by prefix maxima."""
    n = len(order)
    P = np.zeros((n, n))
    top = -1
    for w0, label in enumerate(order):
        top = max(top, label)
        P[top, w0] = 1.0
    return P


def random_mixture(rng, n, k):
    """Random convex combination of ranking matrices: (matrix, weights, orders)."""
    weights = rng.dirichlet(np.ones(k))
    orders = [tuple(int(x) for x in rng.permutation(n)) for _ in range(k)]
    M = np.zeros((n, n))
    for w, order in zip(weights, orders):
        M += w * selection_matrix_oracle(order)
    return M, weights, orders


def random_instance(rng, n, *, mean_scale=1.0):
    """Distinct utilities and means in random association, as (utilities, means)."""
    utilities = rng.permutation(n).astype(float) + 1.0
    means = np.sort(rng.uniform(0.0, mean_scale, size=n))
    means = means + np.arange(n) * 1e-3  # keep them distinct even after ties
    return utilities, means[rng.permutation(n)]


def random_lazy_q(rng, n):
    """Non-increasing window distribution with every entry positive."""
    q = np.sort(rng.dirichlet(np.ones(n) * 2.0))[::-1]
    q = q + 1e-6
    return q / q.sum()
