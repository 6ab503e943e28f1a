"""Compiled inner loops of the ALS solver and the Random Subjects sampler."""

import numpy as np
from numba import njit


@njit(cache=True)
def nnls_gram(gram, rhs, support, tol, max_iter):
    """Lawson-Hanson active set for ``min x'Ax/2 - b'x, x >= 0`` on the normal equations.

    ``support`` seeds the passive (positive) set; the optimum does not depend on it.
    """
    n = rhs.shape[0]
    x = np.zeros(n)
    passive = support.copy()
    # warm start: shrink the guessed support until its solution is strictly positive
    while passive.any():
        idx = np.flatnonzero(passive)
        z = np.linalg.solve(gram[idx][:, idx], rhs[idx])
        if np.all(z > tol):
            x[idx] = z
            break
        for t in range(idx.shape[0]):
            if z[t] <= tol:
                passive[idx[t]] = False

    scale = max(1.0, np.abs(rhs).max())
    w = rhs - gram @ x
    for _ in range(max_iter):
        best = -1
        best_w = tol * scale
        for j in range(n):
            if not passive[j] and w[j] > best_w:
                best_w = w[j]
                best = j
        if best < 0:
            break
        passive[best] = True
        while True:
            idx = np.flatnonzero(passive)
            z = np.zeros(n)
            z[idx] = np.linalg.solve(gram[idx][:, idx], rhs[idx])
            feasible = True
            for j in idx:
                if z[j] <= 0:
                    feasible = False
            if feasible:
                x = z
                break
            step = np.inf
            for j in idx:
                if z[j] <= 0:
                    d = x[j] - z[j]
                    s = x[j] / d if d > 0 else 0.0
                    if s < step:
                        step = s
            x = x + step * (z - x)
            for j in range(n):
                if x[j] <= tol:
                    passive[j] = False
                    x[j] = 0.0
        w = rhs - gram @ x
    return x


@njit(cache=True)
def solve_block(gram, rhs, nonnegative, support):
    if nonnegative:
        return nnls_gram(gram, rhs, support, 1e-10, 3 * rhs.shape[0] + 10)
    return np.linalg.solve(gram, rhs)


@njit(cache=True)
def solve_side(target, observed, other, current, lam, nonnegative, weighted, warm):
    """Re-solve each row of ``current`` against the fixed ``other`` factors.

    Row ``k`` of ``target``/``observed`` holds entity ``k``'s ratings and
    training-cell flags. Entities without training cells keep their row.
    """
    out = current.copy()
    f = other.shape[1]
    eye = np.eye(f)
    for k in range(current.shape[0]):
        cols = np.flatnonzero(observed[k])
        if cols.shape[0] == 0:
            continue
        g = other[cols]
        reg = lam * cols.shape[0] if weighted else lam
        gram = g.T @ g + reg * eye
        rhs = g.T @ target[k][cols]
        if warm:
            support = current[k] > 0
        else:
            support = np.zeros(f, dtype=np.bool_)
        out[k] = solve_block(gram, rhs, nonnegative, support)
    return out


@njit(cache=True)
def random_subject_counts(uniforms, n_files, n_subjects):
    """Step k adds one file to open subject ``floor(uniforms[k] * n_open)``."""
    counts = np.zeros(n_subjects, dtype=np.int64)
    open_subjects = np.arange(n_subjects)
    n_open = n_subjects
    for k in range(uniforms.shape[0]):
        slot = min(int(uniforms[k] * n_open), n_open - 1)
        j = open_subjects[slot]
        counts[j] += 1
        if counts[j] == n_files:
            n_open -= 1
            open_subjects[slot] = open_subjects[n_open]
    return counts
