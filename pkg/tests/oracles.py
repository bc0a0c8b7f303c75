"""Brute-force references for small chains"""

import itertools

import numpy as np
import scipy.sparse as sparse

import driftmc_grid
import driftmc_ulam


def random_substochastic(rng, n, density=0.6, min_sum=0.5):
    """Dense n x n matrix, rows summing to U(min_sum, 1), some rows full"""
    A = rng.random((n, n)) * (rng.random((n, n)) < density)
    for i in range(n):
        if not A[i].any():
            A[i, rng.integers(n)] = 1.0
    sums = rng.uniform(min_sum, 1.0, n)
    sums[rng.random(n) < 0.3] = 1.0
    return A / A.sum(axis=1, keepdims=True) * sums[:, None]

def random_roles(rng, n, n_sticky, n_debris, leak_all=True):
    states = rng.permutation(n)
    sticky = {int(s): float(rng.uniform(0.1, 0.9))
            for s in states[:n_sticky]}
    debris = [(int(s), m + 1) for m, s in enumerate(states[:n_debris])]
    leaky = list(range(n)) if leak_all else []
    return driftmc_grid.StateRoles(n, leaky, sticky, debris, list(range(n)))

def random_matrix(rng, n, T=5.0, label='pooled'):
    return driftmc_ulam.TransitionMatrix(random_substochastic(rng, n), T,
            label)

def dense(chain):
    if hasattr(chain, 'matrix'):
        return chain.matrix.toarray()
    if sparse.issparse(chain):
        return chain.toarray()
    return np.asarray(chain)

def path_sum_cdfs(mats, c, columns, K):
    """Probability of sitting in each of `columns` after k steps, k = 0..K,
    summed over every state sequence; (K+1) x len(columns)"""
    mats = [dense(m) for m in mats]
    n = mats[0].shape[0]
    where = {col: i for i, col in enumerate(columns)}
    out = np.zeros((K + 1, len(columns)))

    def walk(state, k, prob):
        if k and state in where:
            out[k, where[state]] += prob
        if k == K:
            return
        for nxt in range(n):
            p = mats[k][state, nxt]
            if p > 0:
                walk(nxt, k + 1, prob * p)

    walk(c, 0, 1.0)
    return out

def path_sum_cdf(mats, c, column, K):
    return path_sum_cdfs(mats, c, [column], K)[:, 0]

def best_fixed_path(mats, sources, target_col, n_transient, K):
    """Max over source -> transient^(K-1) -> target of the log-probability"""
    mats = [dense(m) for m in mats]
    best, best_path = -np.inf, None
    for source in sources:
        for middle in itertools.product(range(n_transient), repeat=K - 1):
            path = (source,) + middle + (target_col,)
            total = 0.0
            for k in range(K):
                p = mats[k][path[k], path[k + 1]]
                if p <= 0:
                    total = -np.inf
                    break
                total += np.log(p)
            if total > best:
                best, best_path = total, path
    return best, best_path

def best_simple_path(P, source, target):
    """Largest product over simple paths source -> target"""
    P = dense(P)
    n = P.shape[0]
    best = [0.0]

    def walk(state, seen, prob):
        if state == target:
            best[0] = max(best[0], prob)
            return
        for nxt in range(n):
            if nxt not in seen and P[state, nxt] > 0:
                walk(nxt, seen | {nxt}, prob * P[state, nxt])

    walk(source, {source}, 1.0)
    return best[0]
