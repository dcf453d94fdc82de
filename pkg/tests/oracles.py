"""Independent reference routines used as test oracles.

Each function re-derives a quantity from first principles along a different
code path than the library (explicit loops, vector-form rotation, two-pass
statistics, exhaustive scans). Tests compare library output against these;
the routines here must never import computation helpers from facemotion.
"""

from __future__ import annotations

import math
from typing import List, Sequence, Tuple

import numpy as np


def rotate_points(points: np.ndarray, axis_angle: np.ndarray, origin: np.ndarray) -> np.ndarray:
    """Axis-angle rotation about an origin via the vector Rodrigues form:
    v' = v cos(t) + (k x v) sin(t) + k (k . v)(1 - cos(t))."""
    points = np.asarray(points, dtype=np.float64)
    axis_angle = np.asarray(axis_angle, dtype=np.float64)
    origin = np.asarray(origin, dtype=np.float64)
    theta = math.sqrt(float(np.dot(axis_angle, axis_angle)))
    if theta == 0.0:
        return points.copy()
    k = axis_angle / theta
    out = np.empty_like(points)
    c, s = math.cos(theta), math.sin(theta)
    for i, p in enumerate(points):
        v = p - origin
        out[i] = v * c + np.cross(k, v) * s + k * np.dot(k, v) * (1.0 - c) + origin
    return out


def landmark_distance(vertices: np.ndarray, i: int, j: int) -> float:
    """Direct vertex-table lookup and coordinate-wise distance."""
    a, b = vertices[i], vertices[j]
    return math.sqrt((a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2 + (a[2] - b[2]) ** 2)


def affine_map(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Dense matrix product with explicit loops (rows of x against rows of w)."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    out = np.empty((x.shape[0], w.shape[0]))
    for n in range(x.shape[0]):
        for r in range(w.shape[0]):
            acc = 0.0
            for c in range(x.shape[1]):
                acc += x[n, c] * w[r, c]
            out[n, r] = acc + b[r]
    return out


def nearest_codeword_scan(residuals: np.ndarray, codebooks: np.ndarray) -> np.ndarray:
    """Exhaustive per-level nearest-neighbor scan (lowest index on ties)."""
    residual = np.asarray(residuals, dtype=np.float64).copy()
    n_levels = codebooks.shape[0]
    indices = np.empty((residual.shape[0], n_levels), dtype=np.int64)
    for j in range(n_levels):
        for n in range(residual.shape[0]):
            best_k, best_d = 0, np.sum((residual[n] - codebooks[j][0]) ** 2)
            for k in range(1, codebooks.shape[1]):
                d = np.sum((residual[n] - codebooks[j][k]) ** 2)
                if d < best_d:
                    best_k, best_d = k, d
            indices[n, j] = best_k
            residual[n] = residual[n] - codebooks[j][best_k]
    return indices


def gather_sum(indices: np.ndarray, codebooks: np.ndarray) -> np.ndarray:
    """Per-vector sum of selected codewords, one level at a time."""
    n, n_levels = indices.shape
    out = np.zeros((n, codebooks.shape[2]))
    for i in range(n):
        for j in range(n_levels):
            out[i] = out[i] + codebooks[j][indices[i, j]]
    return out


def lloyd_best_of(points: np.ndarray, k: int, restarts: int, seed: int, iters: int = 300) -> float:
    """Best final distortion over plain-Lloyd restarts with random init."""
    points = np.asarray(points, dtype=np.float64)
    rng = np.random.Generator(np.random.PCG64(seed))
    best = math.inf
    for _ in range(restarts):
        centers = points[rng.choice(points.shape[0], size=k, replace=False)].copy()
        for _ in range(iters):
            d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
            assign = np.argmin(d2, axis=1)
            new_centers = centers.copy()
            for c in range(k):
                members = points[assign == c]
                if members.shape[0]:
                    new_centers[c] = members.mean(axis=0)
            if np.array_equal(new_centers, centers):
                break
            centers = new_centers
        d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        best = min(best, float(d2.min(axis=1).mean()))
    return best


def pca_directions(data: np.ndarray, n_components: int) -> Tuple[np.ndarray, np.ndarray]:
    """Top principal directions via eigendecomposition of the covariance."""
    data = np.asarray(data, dtype=np.float64)
    mean = data.mean(axis=0)
    centered = data - mean
    cov = centered.T @ centered / data.shape[0]
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1][:n_components]
    return eigvecs[:, order].T, mean


def pca_reconstruction_error(data: np.ndarray, n_components: int) -> float:
    """Max abs reconstruction error projecting onto the top directions."""
    basis, mean = pca_directions(data, n_components)
    centered = data - mean
    recon = centered @ basis.T @ basis + mean
    return float(np.max(np.abs(recon - data)))


def two_pass_pcc(x: Sequence[float], y: Sequence[float]) -> float:
    """Pearson correlation with explicit mean and moment passes."""
    n = len(x)
    mx = sum(x) / n
    my = sum(y) / n
    cov = sxx = syy = 0.0
    for a, b in zip(x, y):
        cov += (a - mx) * (b - my)
        sxx += (a - mx) ** 2
        syy += (b - my) ** 2
    return cov / math.sqrt(sxx * syy)


def population_std(x: Sequence[float]) -> float:
    n = len(x)
    m = sum(x) / n
    return math.sqrt(sum((a - m) ** 2 for a in x) / n)


def local_maxima(x: Sequence[float]) -> List[int]:
    """All strict local maxima, no prominence or spacing filtering."""
    return [i for i in range(1, len(x) - 1) if x[i] > x[i - 1] and x[i] > x[i + 1]]


def median(values: Sequence[float]) -> float:
    ordered = sorted(values)
    n = len(ordered)
    mid = n // 2
    if n % 2:
        return float(ordered[mid])
    return (ordered[mid - 1] + ordered[mid]) / 2.0


def group_means(rows: np.ndarray, group: int) -> np.ndarray:
    """Mean-pool rows in groups, repeating the final row to fill the tail."""
    rows = np.asarray(rows, dtype=np.float64)
    t = rows.shape[0]
    n_groups = math.ceil(t / group)
    out = np.zeros((n_groups, rows.shape[1]))
    for g in range(n_groups):
        acc = np.zeros(rows.shape[1])
        for i in range(group):
            src = min(g * group + i, t - 1)
            acc += rows[src]
        out[g] = acc / group
    return out


def mean_squared(diff: np.ndarray) -> float:
    """Mean of elementwise squares via a flat accumulation loop."""
    flat = np.asarray(diff, dtype=np.float64).ravel()
    acc = 0.0
    for v in flat:
        acc += float(v) * float(v)
    return acc / flat.size


def sum_log_gather(dists: np.ndarray, targets: np.ndarray) -> float:
    """Level-summed mean negative log-likelihood by direct iteration."""
    n, n_q = targets.shape
    total = 0.0
    for j in range(n_q):
        acc = 0.0
        for i in range(n):
            acc += -math.log(dists[i, j, targets[i, j]])
        total += acc / n
    return total


def nearest_key_scan(keys: Sequence[np.ndarray], query: np.ndarray) -> int:
    """Exhaustive L2 scan over corpus keys, lowest index on ties."""
    best_i, best_d = 0, float(np.sum((np.asarray(keys[0]) - query) ** 2))
    for i in range(1, len(keys)):
        d = float(np.sum((np.asarray(keys[i]) - query) ** 2))
        if d < best_d:
            best_i, best_d = i, d
    return best_i
