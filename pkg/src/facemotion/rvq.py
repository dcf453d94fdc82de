"""Temporal window codec with hierarchical residual vector quantization.

Motion frames are grouped G at a time, each window flattened frame-major and
mapped through an affine encode map into a latent space, where N_q stacked
codebooks quantize successive residuals. Codebooks are trained with
EMA-updated Lloyd iterations after a seeded k-means++ initialization; the
encode/decode maps are fit by PCA over the flattened windows. The quantizer
commitment objective is computed as a diagnostic only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple, Union

import numpy as np

from .errors import IncompatibleShapeError
from .motion_core import FRAME_DIM, MotionSequence


@dataclass
class QuantizerConfig:
    group_size: int = 5
    num_levels: int = 6
    codebook_size: int = 256
    latent_dim: int = 256
    gamma: float = 0.25
    ema_decay: float = 0.99
    dead_code_threshold: float = 1.0
    seed: int = 0

    def __post_init__(self):
        for name in ("group_size", "num_levels", "codebook_size", "latent_dim"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if not 0.0 < self.ema_decay < 1.0:
            raise ValueError(f"ema_decay must be in (0, 1), got {self.ema_decay}")
        if self.dead_code_threshold < 0:
            raise ValueError(f"dead_code_threshold must be >= 0, got {self.dead_code_threshold}")

    @property
    def window_dim(self) -> int:
        return self.group_size * FRAME_DIM


@dataclass
class WindowProjection:
    """Affine encode/decode maps between flattened windows and latents."""

    encode_w: np.ndarray  # (d_z, G*58)
    encode_b: np.ndarray  # (d_z,)
    decode_w: np.ndarray  # (G*58, d_z)
    decode_b: np.ndarray  # (G*58,)

    def __post_init__(self):
        self.encode_w = np.asarray(self.encode_w, dtype=np.float64)
        self.encode_b = np.asarray(self.encode_b, dtype=np.float64)
        self.decode_w = np.asarray(self.decode_w, dtype=np.float64)
        self.decode_b = np.asarray(self.decode_b, dtype=np.float64)
        d_z, wd = self.encode_w.shape
        if self.encode_b.shape != (d_z,) or self.decode_w.shape != (wd, d_z) or self.decode_b.shape != (wd,):
            raise IncompatibleShapeError("projection map shapes are inconsistent")
        for arr in (self.encode_w, self.encode_b, self.decode_w, self.decode_b):
            if not np.all(np.isfinite(arr)):
                raise ValueError("projection contains non-finite values")

    @property
    def latent_dim(self) -> int:
        return self.encode_w.shape[0]

    @property
    def window_dim(self) -> int:
        return self.encode_w.shape[1]

    @classmethod
    def identity(cls, window_dim: int) -> "WindowProjection":
        eye = np.eye(window_dim)
        zero = np.zeros(window_dim)
        return cls(eye, zero, eye, zero)


@dataclass
class LatentSequence:
    vectors: np.ndarray  # (L, d_z)
    fps_latent: float = 5.0

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2:
            raise IncompatibleShapeError(f"latents must be 2-D, got shape {self.vectors.shape}")
        if not np.all(np.isfinite(self.vectors)):
            raise ValueError("latents contain non-finite values")
        self.fps_latent = float(self.fps_latent)
        if not self.fps_latent > 0:
            raise ValueError(f"fps_latent must be positive, got {self.fps_latent}")

    def __len__(self) -> int:
        return self.vectors.shape[0]


@dataclass
class TokenSequence:
    """(L, N_q) grid of codebook indices plus the (G, N_q, K) config echo."""

    indices: np.ndarray
    group_size: int
    num_levels: int
    codebook_size: int

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        if self.group_size < 1 or self.num_levels < 1 or self.codebook_size < 1:
            raise ValueError("token config echo values must be positive")
        if self.indices.ndim != 2 or self.indices.shape[1] != self.num_levels:
            raise IncompatibleShapeError(
                f"token grid must have shape (L, {self.num_levels}), got {self.indices.shape}"
            )
        if self.indices.size and (self.indices.min() < 0 or self.indices.max() >= self.codebook_size):
            raise ValueError(f"token indices must lie in [0, {self.codebook_size})")

    def __len__(self) -> int:
        return self.indices.shape[0]


@dataclass
class Codebook:
    """Stacked per-level codebooks with EMA usage counts."""

    entries: np.ndarray  # (N_q, K, d_z)
    usage: np.ndarray = None

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=np.float64)
        if self.entries.ndim != 3:
            raise IncompatibleShapeError(f"entries must have shape (N_q, K, d_z), got {self.entries.shape}")
        if not np.all(np.isfinite(self.entries)):
            raise ValueError("codebook entries contain non-finite values")
        if self.usage is None:
            self.usage = np.zeros(self.entries.shape[:2])
        self.usage = np.asarray(self.usage, dtype=np.float64)
        if self.usage.shape != self.entries.shape[:2]:
            raise IncompatibleShapeError("usage shape must match (N_q, K)")

    @property
    def num_levels(self) -> int:
        return self.entries.shape[0]

    @property
    def codebook_size(self) -> int:
        return self.entries.shape[1]

    @property
    def latent_dim(self) -> int:
        return self.entries.shape[2]


def pad_to_group(params: np.ndarray, group_size: int) -> np.ndarray:
    """Pad frames to a multiple of group_size by repeating the final frame."""
    t = params.shape[0]
    if t == 0:
        raise ValueError("cannot window an empty sequence")
    n_windows = math.ceil(t / group_size)
    pad = n_windows * group_size - t
    if pad == 0:
        return params
    return np.concatenate([params, np.repeat(params[-1:], pad, axis=0)])


def flatten_windows(params: np.ndarray, group_size: int) -> np.ndarray:
    """(T, 58) frames -> (ceil(T/G), G*58) frame-major window matrix."""
    padded = pad_to_group(params, group_size)
    return padded.reshape(-1, group_size * params.shape[1])


def window_encode(m: MotionSequence, proj: WindowProjection, cfg: QuantizerConfig) -> LatentSequence:
    """Flatten G-frame windows and apply the affine encode map."""
    if proj.window_dim != cfg.window_dim:
        raise IncompatibleShapeError(
            f"projection expects window dim {proj.window_dim}, config gives {cfg.window_dim}"
        )
    windows = flatten_windows(m.params, cfg.group_size)
    latents = windows @ proj.encode_w.T + proj.encode_b
    return LatentSequence(latents, fps_latent=m.fps / cfg.group_size)


def window_decode(
    z: LatentSequence, proj: WindowProjection, cfg: QuantizerConfig, original_t: int
) -> MotionSequence:
    """Apply the decode map per latent, unflatten, truncate to original_t frames."""
    if proj.latent_dim != z.vectors.shape[1]:
        raise IncompatibleShapeError(
            f"projection expects latent dim {proj.latent_dim}, got {z.vectors.shape[1]}"
        )
    if proj.window_dim != cfg.window_dim:
        raise IncompatibleShapeError(
            f"projection window dim {proj.window_dim} does not match config {cfg.window_dim}"
        )
    capacity = len(z) * cfg.group_size
    if original_t < 0 or original_t > capacity:
        raise ValueError(f"original_t={original_t} exceeds decoded capacity {capacity}")
    out = np.empty((len(z), proj.window_dim))
    # Row-wise products keep segment-wise and whole-sequence decoding
    # bit-identical regardless of BLAS batching.
    for i in range(len(z)):
        out[i] = proj.decode_w @ z.vectors[i] + proj.decode_b
    frames = out.reshape(-1, FRAME_DIM)[:original_t]
    return MotionSequence(frames, fps=z.fps_latent * cfg.group_size)


def _nearest_indices(points: np.ndarray, codewords: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Exact squared-distance argmin per point; ties resolve to the lowest index.

    Distances are computed from explicit differences (not the expanded
    quadratic form) so results match a brute-force scan bit for bit.
    """
    n, d = points.shape
    k = codewords.shape[0]
    idx = np.empty(n, dtype=np.int64)
    best = np.empty(n)
    chunk = max(1, (1 << 22) // max(1, k * d))
    for lo in range(0, n, chunk):
        hi = min(n, lo + chunk)
        diff = points[lo:hi, None, :] - codewords[None, :, :]
        d2 = np.einsum("nkd,nkd->nk", diff, diff)
        idx[lo:hi] = np.argmin(d2, axis=1)
        best[lo:hi] = d2[np.arange(hi - lo), idx[lo:hi]]
    return idx, best


def _assign_fast(points: np.ndarray, codewords: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Expanded-form assignment (|r|^2 - 2 r.c + |c|^2) for training loops.

    One GEMM instead of a broadcast difference tensor; a few ulp noisier than
    _nearest_indices, which encode paths keep for oracle parity.
    """
    d2 = points @ codewords.T
    d2 *= -2.0
    d2 += np.einsum("nd,nd->n", points, points)[:, None]
    d2 += np.einsum("kd,kd->k", codewords, codewords)[None, :]
    idx = np.argmin(d2, axis=1)
    best = np.maximum(d2[np.arange(points.shape[0]), idx], 0.0)
    return idx, best


def rvq_encode(
    z: LatentSequence, cb: Codebook, group_size: int = 5
) -> Tuple[TokenSequence, np.ndarray]:
    """Greedy residual quantization; returns tokens and mean residual norm per level.

    group_size is recorded in the token grid's config echo only; it does not
    affect quantization.
    """
    if cb.latent_dim != z.vectors.shape[1]:
        raise IncompatibleShapeError(
            f"codebook latent dim {cb.latent_dim} does not match latents {z.vectors.shape[1]}"
        )
    if cb.codebook_size == 0:
        raise ValueError("codebook level is empty")
    residual = z.vectors.copy()
    indices = np.empty((len(z), cb.num_levels), dtype=np.int64)
    level_norms = np.empty(cb.num_levels)
    for j in range(cb.num_levels):
        idx, _ = _nearest_indices(residual, cb.entries[j])
        indices[:, j] = idx
        residual -= cb.entries[j][idx]
        level_norms[j] = float(np.mean(np.linalg.norm(residual, axis=1))) if len(z) else 0.0
    tokens = TokenSequence(
        indices, group_size=group_size, num_levels=cb.num_levels, codebook_size=cb.codebook_size
    )
    return tokens, level_norms


def rvq_decode(t: TokenSequence, cb: Codebook, fps_latent: float = None) -> LatentSequence:
    """Sum the selected codewords per level."""
    if t.num_levels != cb.num_levels or t.codebook_size != cb.codebook_size:
        raise IncompatibleShapeError("token grid does not match codebook configuration")
    if t.indices.size and t.indices.max() >= cb.codebook_size:
        raise ValueError("token index out of codebook range")
    vectors = np.zeros((len(t), cb.latent_dim))
    for j in range(cb.num_levels):
        vectors += cb.entries[j][t.indices[:, j]]
    if fps_latent is None:
        fps_latent = 25.0 / t.group_size
    return LatentSequence(vectors, fps_latent=fps_latent)


def fit_projections(corpus: Sequence[MotionSequence], cfg: QuantizerConfig) -> WindowProjection:
    """Fit PCA encode/decode maps over the corpus' flattened windows.

    With latent_dim >= G*58 the maps are the identity extended with zero
    rows/columns and reconstruction is exact. Otherwise encode is the
    centered projection onto the top principal directions (sign fixed so the
    first non-negligible component of each direction is positive) and decode
    is its transpose with the mean re-added.
    """
    if len(corpus) == 0:
        raise ValueError("corpus is empty")
    windows = np.vstack([flatten_windows(m.params, cfg.group_size) for m in corpus])
    wd = cfg.window_dim
    if windows.shape[1] != wd:
        raise IncompatibleShapeError("corpus window dim does not match config")
    d_z = cfg.latent_dim

    if d_z >= wd:
        enc = np.zeros((d_z, wd))
        enc[:wd, :wd] = np.eye(wd)
        return WindowProjection(enc, np.zeros(d_z), enc.T, np.zeros(wd))

    mean = windows.mean(axis=0)
    centered = windows - mean
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    available = min(d_z, vt.shape[0])
    basis = np.zeros((d_z, wd))
    basis[:available] = vt[:available]
    for row in basis:
        nz = np.flatnonzero(np.abs(row) > 1e-12)
        if nz.size and row[nz[0]] < 0:
            row *= -1.0
    return WindowProjection(basis, -(basis @ mean), basis.T, mean)


def shifted_windows(corpus: Sequence[MotionSequence], cfg: QuantizerConfig) -> np.ndarray:
    """Flattened windows of every temporal shift 0..G-1 of every sequence.

    Codebook training uses these for G-fold data augmentation; the codec
    itself always windows from frame 0.
    """
    chunks = []
    for m in corpus:
        for shift in range(cfg.group_size):
            if m.params.shape[0] > shift:
                chunks.append(flatten_windows(m.params[shift:], cfg.group_size))
    if not chunks:
        raise ValueError("corpus is empty")
    return np.vstack(chunks)


def fit_codec(
    corpus: Sequence[MotionSequence], cfg: QuantizerConfig, augment_shifts: bool = True
) -> Tuple[WindowProjection, Codebook]:
    """Fit projections, then train codebooks on the encoded corpus windows.

    With augment_shifts the codebooks see every temporal shift of the
    training windows, which keeps deeper quantizer levels informative when
    the corpus is small relative to the codebook size.
    """
    proj = fit_projections(corpus, cfg)
    if augment_shifts:
        windows = shifted_windows(corpus, cfg)
    else:
        windows = np.vstack([flatten_windows(m.params, cfg.group_size) for m in corpus])
    latents = windows @ proj.encode_w.T + proj.encode_b
    cb = train_codebooks(latents, cfg)
    return proj, cb


def _kmeans_pp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    p2 = np.einsum("nd,nd->n", points, points)

    def dist_to(i: int) -> np.ndarray:
        return np.maximum(p2 - 2.0 * (points @ points[i]) + p2[i], 0.0)

    first = int(rng.integers(n))
    centers[0] = points[first]
    closest = dist_to(first)
    for j in range(1, k):
        total = float(closest.sum())
        if total <= 0.0:
            pick = int(rng.integers(n))
        else:
            pick = int(rng.choice(n, p=closest / total))
        centers[j] = points[pick]
        np.minimum(closest, dist_to(pick), out=closest)
    return centers


_MAX_ITERS = 200
_REL_TOL = 1e-6
_INIT_CANDIDATES = 8
_PILOT_ITERS = 15


def _cluster_sums(points: np.ndarray, idx: np.ndarray, k: int) -> Tuple[np.ndarray, np.ndarray]:
    """Per-cluster sums and counts, accumulated in original point order."""
    counts = np.bincount(idx, minlength=k).astype(np.float64)
    sums = np.zeros((k, points.shape[1]))
    order = np.argsort(idx, kind="stable")
    sorted_idx = idx[order]
    starts = np.concatenate([[0], np.flatnonzero(np.diff(sorted_idx)) + 1])
    sums[sorted_idx[starts]] = np.add.reduceat(points[order], starts, axis=0)
    return sums, counts


class _EmaState:
    """Zero-initialized EMA accumulators over batch sums and counts.

    Centers are the ratio of the two accumulators, so the decay bias cancels
    (both carry the same 1 - decay^t factor) and, with stable assignments,
    centers equal the batch means from the first update on. The bias-corrected
    counts estimate the running per-cluster population for the dead-code rule.
    """

    def __init__(self, centers: np.ndarray):
        self.centers = centers
        self.ema_sum = np.zeros_like(centers)
        self.ema_cnt = np.zeros(centers.shape[0])
        self.updates = 0


def _ema_iterate(points, state: _EmaState, cfg, max_iters, history):
    """Run EMA Lloyd iterations until convergence or max_iters; returns done."""
    d = cfg.ema_decay
    prev = history[-1] if history else None
    for _ in range(max_iters):
        idx, best = _assign_fast(points, state.centers)
        distortion = float(best.mean())
        history.append(distortion)
        if prev is not None and prev - distortion < _REL_TOL * max(prev, 1e-30):
            return True
        prev = distortion

        sums, counts = _cluster_sums(points, idx, state.centers.shape[0])
        state.ema_cnt = d * state.ema_cnt + (1.0 - d) * counts
        state.ema_sum = d * state.ema_sum + (1.0 - d) * sums
        state.updates += 1
        state.centers = state.ema_sum / np.maximum(state.ema_cnt, 1e-30)[:, None]

        scale = 1.0 - d**state.updates
        dead = np.flatnonzero(state.ema_cnt < cfg.dead_code_threshold * scale)
        if dead.size:
            # Re-seed dead codes to the points farthest from their assignment.
            order = np.argsort(-best, kind="stable")
            for rank, code in enumerate(dead):
                src = points[order[rank % points.shape[0]]]
                state.centers[code] = src
                state.ema_sum[code] = src * scale
                state.ema_cnt[code] = scale
    return False


def _ema_kmeans(
    points: np.ndarray, k: int, cfg: QuantizerConfig, seed_key: Sequence[int]
) -> Tuple[np.ndarray, np.ndarray, List[float]]:
    """Seeded k-means++ with EMA Lloyd refinement.

    Several independently seeded k-means++ candidates run a short pilot; the
    one with the lowest pilot distortion continues to convergence (or the
    iteration cap). Ties go to the lowest candidate index, so the result is
    deterministic for a given seed.
    """
    best = None
    for r in range(_INIT_CANDIDATES):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([*seed_key, r])))
        state = _EmaState(_kmeans_pp_init(points, k, rng))
        history: List[float] = []
        done = _ema_iterate(points, state, cfg, _PILOT_ITERS, history)
        if best is None or (history[-1], r) < best[0]:
            best = ((history[-1], r), state, done, history)
    _, state, done, history = best
    if not done:
        _ema_iterate(points, state, cfg, _MAX_ITERS - _PILOT_ITERS, history)
    usage = state.ema_cnt / max(1.0 - cfg.ema_decay**state.updates, 1e-30)
    return state.centers, usage, history


def train_codebooks(
    latents: Union[LatentSequence, np.ndarray],
    cfg: QuantizerConfig,
    return_history: bool = False,
):
    """Train N_q residual codebooks; deterministic for a given cfg.seed."""
    vectors = latents.vectors if isinstance(latents, LatentSequence) else np.asarray(latents, dtype=np.float64)
    if vectors.ndim != 2 or vectors.shape[0] == 0:
        raise ValueError("training batch must be a nonempty (M, d_z) array")
    residual = vectors.copy()
    entries = np.empty((cfg.num_levels, cfg.codebook_size, vectors.shape[1]))
    usage = np.empty((cfg.num_levels, cfg.codebook_size))
    histories: List[List[float]] = []
    for j in range(cfg.num_levels):
        centers, ema_cnt, history = _ema_kmeans(residual, cfg.codebook_size, cfg, (cfg.seed, j))
        entries[j] = centers
        usage[j] = ema_cnt
        histories.append(history)
        idx, _ = _assign_fast(residual, centers)
        residual -= centers[idx]
    cb = Codebook(entries, usage)
    if return_history:
        return cb, histories
    return cb


def commitment_loss(
    z: Union[LatentSequence, np.ndarray],
    q: Union[LatentSequence, np.ndarray],
    gamma: float,
) -> Tuple[float, float, float]:
    """Quantizer objective diagnostic: (codebook term, gamma-scaled commit term, sum).

    Both terms share the value mean-over-vectors of ||z - q||^2; the
    stop-gradient operators in the definition only affect differentiation,
    which this artifact does not perform.
    """
    zv = z.vectors if isinstance(z, LatentSequence) else np.asarray(z, dtype=np.float64)
    qv = q.vectors if isinstance(q, LatentSequence) else np.asarray(q, dtype=np.float64)
    if zv.shape != qv.shape:
        raise IncompatibleShapeError(f"z shape {zv.shape} does not match q shape {qv.shape}")
    mse = float(np.mean(np.einsum("nd,nd->n", zv - qv, zv - qv))) if zv.size else 0.0
    return mse, gamma * mse, mse + gamma * mse
