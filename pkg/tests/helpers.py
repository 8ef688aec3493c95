"""Independent oracles used across the test suite.

Everything here is written from the domain definitions alone, with plain
Python loops and none of the package's vectorized shortcuts, so the
implementations under test can be checked against a second opinion.
"""
from __future__ import annotations

import numpy as np


def naive_kernel_matrix(samples, structure):
    """Triple-loop kernel matrix in canonical column order.

    Builds every column straight from the definition: the carrier sample
    is s(n-l) and the envelope is taken at n-l (aligned), n-l-m (lagging)
    or n-l+m (leading), with s treated as zero outside its support.
    """
    s = np.asarray(samples, dtype=np.complex128)
    n_samples = s.shape[0]

    def sample(i):
        if 0 <= i < n_samples:
            return s[i]
        return 0.0 + 0.0j

    columns = []
    for k in structure.aligned_orders:
        for l in structure.aligned_lags:
            columns.append(("aligned", k, l, None))
    for k in structure.lagging_orders:
        for l in structure.lagging_lags:
            for m in structure.lagging_cross:
                columns.append(("lagging", k, l, m))
    for k in structure.leading_orders:
        for l in structure.leading_lags:
            for m in structure.leading_cross:
                columns.append(("leading", k, l, m))

    matrix = np.zeros((n_samples, len(columns)), dtype=np.complex128)
    for j, (branch, k, l, m) in enumerate(columns):
        for n in range(n_samples):
            carrier = sample(n - l)
            if branch == "aligned":
                envelope = abs(sample(n - l))
            elif branch == "lagging":
                envelope = abs(sample(n - l - m))
            else:
                envelope = abs(sample(n - l + m))
            matrix[n, j] = carrier * envelope**k
    return matrix, columns


def lasso_objective(matrix, target, coefficients, lam):
    """The uniform-penalty objective: squared residual plus lam * l1."""
    w = np.asarray(coefficients, dtype=np.complex128)
    residual = np.asarray(target, dtype=np.complex128) - np.asarray(matrix) @ w
    return float(np.sum(np.abs(residual) ** 2) + lam * np.sum(np.abs(w)))


def block_objective(matrix, target, coefficients, lambda_by_column):
    """Blockwise-weighted objective: squared residual plus per-column l1."""
    w = np.asarray(coefficients, dtype=np.complex128)
    lams = np.asarray(lambda_by_column, dtype=float)
    residual = np.asarray(target, dtype=np.complex128) - np.asarray(matrix) @ w
    return float(np.sum(np.abs(residual) ** 2) + np.sum(lams * np.abs(w)))


def soft_threshold_solution(matrix, target, lam):
    """Closed-form minimizer for an orthonormal design.

    With S^H S = I the problem separates per coordinate and the answer is
    the complex soft threshold of c = S^H x at lam / 2.
    """
    c = np.conj(np.asarray(matrix)).T @ np.asarray(target, dtype=np.complex128)
    mags = np.abs(c)
    shrink = np.maximum(0.0, 1.0 - lam / (2.0 * np.maximum(mags, 1e-300)))
    return shrink * c


def grid_search_lasso(matrix, target, lam, stages=6, points=11):
    """Dense real-axis grid search for the uniform-penalty objective.

    Starts from a box around the origin wide enough to contain the
    unregularized solution, then repeatedly zooms into the best grid
    point. Only sensible for P <= 4 real-valued problems.
    """
    S = np.asarray(matrix, dtype=float)
    x = np.asarray(target, dtype=float)
    n_coef = S.shape[1]
    ls, *_ = np.linalg.lstsq(S, x, rcond=None)
    radius = float(np.max(np.abs(ls))) + 1.0
    centers = np.zeros(n_coef)

    best_value = None
    best_point = None
    for _ in range(stages):
        axes = [np.linspace(c - radius, c + radius, points) for c in centers]
        mesh = np.meshgrid(*axes, indexing="ij")
        grid = np.stack([m.ravel() for m in mesh], axis=1)
        residual = x[None, :] - grid @ S.T
        values = np.sum(residual**2, axis=1) + lam * np.sum(np.abs(grid), axis=1)
        at = int(np.argmin(values))
        best_value = float(values[at])
        best_point = grid[at]
        centers = best_point
        radius = radius * 2.0 / (points - 1) * 1.5
    return best_value, best_point


def ladder_tables(max_order=14):
    """The tabulated penalty ladder, rebuilt by its own recurrence."""
    lam = {0: 1e-4}
    tau = {0: 0.17}
    for k in range(2, max_order + 2, 2):
        ratio = 2.0 if k >= 10 else 1.35
        lam[k] = lam[k - 2] * ratio
        tau[k] = tau[k - 2] * ratio
    return lam, tau
