"""Segment-wise autoregressive decode protocol and latency accounting.

A stream consumes audio-rate features segment by segment. For every segment
a predictor sees only the downsampled features of that segment and the
tokens of the immediately preceding segment (Markov history of exactly one
segment), emits one segment of hierarchical tokens, and the codec decodes
them to motion. Latency metrics are derived from a timestamped event log,
never from wall clocks, so they are deterministic under test; a wall-clock
adapter exists for live runs.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import IncompatibleShapeError, StreamProtocolError
from .motion_core import MotionSequence
from .rvq import Codebook, LatentSequence, QuantizerConfig, TokenSequence, WindowProjection, rvq_decode, window_decode

EVENT_KINDS = (
    "input_end",
    "first_text_token",
    "first_audio_token",
    "first_motion_frame",
    "segment_done",
    "stream_done",
)

PREDICTOR_KINDS = ("hold_last", "retrieval", "oracle", "uniform")


@dataclass
class AudioFeatureSequence:
    """Audio-aligned feature rows at the motion frame rate."""

    features: np.ndarray  # (T, d_h)
    fps: float = 25.0

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise IncompatibleShapeError(f"features must be 2-D, got shape {self.features.shape}")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features contain non-finite values")
        self.fps = float(self.fps)
        if not self.fps > 0:
            raise ValueError(f"fps must be positive, got {self.fps}")

    def __len__(self) -> int:
        return self.features.shape[0]


def downsample_features(
    h: AudioFeatureSequence,
    group_size: int,
    affine: Optional[Tuple[np.ndarray, np.ndarray]] = None,
) -> AudioFeatureSequence:
    """Mean-pool feature rows in groups of group_size, then apply an optional
    affine map; the final group is padded by repeating the last row."""
    if len(h) < 1:
        raise ValueError("cannot downsample an empty feature sequence")
    t = len(h)
    n_groups = math.ceil(t / group_size)
    pad = n_groups * group_size - t
    feats = h.features
    if pad:
        feats = np.concatenate([feats, np.repeat(feats[-1:], pad, axis=0)])
    pooled = feats.reshape(n_groups, group_size, -1).mean(axis=1)
    if affine is not None:
        w, b = affine
        pooled = pooled @ np.asarray(w, dtype=np.float64).T + np.asarray(b, dtype=np.float64)
    return AudioFeatureSequence(pooled, fps=h.fps / group_size)


@dataclass
class PredictorSpec:
    """Pluggable segment predictor.

    kind 'oracle' replays gt_tokens, 'retrieval' returns the token segment
    of the corpus entry whose key is nearest (L2) to the pooled feature mean,
    'hold_last' repeats the previous segment (zero indices at stream start),
    and 'uniform' samples indices uniformly from a seeded generator.
    """

    kind: str
    corpus: Optional[Sequence[Tuple[np.ndarray, np.ndarray]]] = None
    gt_tokens: Optional[TokenSequence] = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in PREDICTOR_KINDS:
            raise ValueError(f"unknown predictor kind '{self.kind}'")
        if self.kind == "oracle" and self.gt_tokens is None:
            raise StreamProtocolError("oracle predictor requires gt_tokens")
        if self.kind == "retrieval" and not self.corpus:
            raise StreamProtocolError("retrieval predictor requires a nonempty corpus")


@dataclass
class SegmentState:
    """Decode-loop state: exactly one segment of token history."""

    history_tokens: Optional[np.ndarray]  # (n, N_q) or None at stream start
    segment_index: int
    group_size: int
    num_levels: int
    codebook_size: int
    segment_tokens: int

    def __post_init__(self):
        if self.history_tokens is not None:
            self.history_tokens = np.asarray(self.history_tokens, dtype=np.int64)
            if self.history_tokens.ndim != 2 or self.history_tokens.shape[1] != self.num_levels:
                raise IncompatibleShapeError("history token grid does not match num_levels")
            if self.history_tokens.size and (
                self.history_tokens.min() < 0 or self.history_tokens.max() >= self.codebook_size
            ):
                raise ValueError("history token indices out of range")


def initial_state(cfg: QuantizerConfig, segment_tokens: int = 5) -> SegmentState:
    return SegmentState(
        history_tokens=None,
        segment_index=0,
        group_size=cfg.group_size,
        num_levels=cfg.num_levels,
        codebook_size=cfg.codebook_size,
        segment_tokens=segment_tokens,
    )


def _tile_rows(rows: np.ndarray, n: int) -> np.ndarray:
    return rows[np.arange(n) % rows.shape[0]]


def _predict_segment(
    state: SegmentState, pooled: AudioFeatureSequence, predictor: PredictorSpec, n_tokens: int
) -> np.ndarray:
    n_q = state.num_levels
    if predictor.kind == "hold_last":
        if state.history_tokens is None or state.history_tokens.shape[0] == 0:
            return np.zeros((n_tokens, n_q), dtype=np.int64)
        return _tile_rows(state.history_tokens, n_tokens)
    if predictor.kind == "oracle":
        if predictor.gt_tokens is None:
            raise StreamProtocolError("oracle predictor requires gt_tokens")
        start = state.segment_index * state.segment_tokens
        rows = predictor.gt_tokens.indices[start : start + n_tokens]
        if rows.shape[0] < n_tokens:
            raise StreamProtocolError(
                f"gt token stream exhausted at segment {state.segment_index}"
            )
        return rows
    if predictor.kind == "retrieval":
        if not predictor.corpus:
            raise StreamProtocolError("retrieval predictor requires a nonempty corpus")
        key = pooled.features.mean(axis=0)
        dists = [float(np.sum((np.asarray(k, dtype=np.float64) - key) ** 2)) for k, _ in predictor.corpus]
        best = int(np.argmin(dists))  # ties resolve to the lowest corpus index
        return _tile_rows(np.asarray(predictor.corpus[best][1], dtype=np.int64), n_tokens)
    # uniform
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([predictor.seed, state.segment_index])))
    return rng.integers(0, state.codebook_size, size=(n_tokens, n_q), dtype=np.int64)


def step(
    state: SegmentState,
    segment_features: AudioFeatureSequence,
    predictor: PredictorSpec,
    cb: Codebook,
    proj: WindowProjection,
) -> Tuple[TokenSequence, MotionSequence, SegmentState]:
    """Run one segment: predict tokens from (features, history), decode motion."""
    if cb.num_levels != state.num_levels or cb.codebook_size != state.codebook_size:
        raise IncompatibleShapeError("segment state does not match codebook configuration")
    if len(segment_features) == 0:
        raise ValueError("segment has no feature frames")
    g = state.group_size
    n_tokens = math.ceil(len(segment_features) / g)
    pooled = downsample_features(segment_features, g)
    indices = _predict_segment(state, pooled, predictor, n_tokens)
    tokens = TokenSequence(
        indices, group_size=g, num_levels=state.num_levels, codebook_size=state.codebook_size
    )
    cfg = QuantizerConfig(
        group_size=g,
        num_levels=state.num_levels,
        codebook_size=state.codebook_size,
        latent_dim=cb.latent_dim,
    )
    latents = rvq_decode(tokens, cb, fps_latent=segment_features.fps / g)
    motion = window_decode(latents, proj, cfg, original_t=n_tokens * g)
    new_state = SegmentState(
        history_tokens=indices,
        segment_index=state.segment_index + 1,
        group_size=g,
        num_levels=state.num_levels,
        codebook_size=state.codebook_size,
        segment_tokens=state.segment_tokens,
    )
    return tokens, motion, new_state


@dataclass
class StreamEvent:
    timestamp_ms: float
    kind: str
    payload: str = ""

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind '{self.kind}'")
        self.timestamp_ms = float(self.timestamp_ms)


@dataclass
class StreamEventLog:
    events: List[StreamEvent] = field(default_factory=list)

    def append(self, timestamp_ms: float, kind: str, payload: str = "") -> None:
        event = StreamEvent(timestamp_ms, kind, payload)
        if self.events and event.timestamp_ms < self.events[-1].timestamp_ms:
            raise StreamProtocolError("event timestamps must be nondecreasing")
        if kind != "input_end" and not any(e.kind == "input_end" for e in self.events):
            raise StreamProtocolError("input_end must precede all generation events")
        self.events.append(event)

    def first(self, kind: str) -> Optional[StreamEvent]:
        for e in self.events:
            if e.kind == kind:
                return e
        return None


@dataclass
class LatencyReport:
    ttft_ms: Optional[float]
    ttfa_ms: Optional[float]
    rtf: float
    content_duration_ms: float
    generation_time_ms: float

    def to_dict(self) -> dict:
        return {
            "ttft_ms": self.ttft_ms,
            "ttfa_ms": self.ttfa_ms,
            "rtf": self.rtf,
            "content_duration_ms": self.content_duration_ms,
            "generation_time_ms": self.generation_time_ms,
        }


def latency_report(log: StreamEventLog) -> LatencyReport:
    """TTFT, TTFA and real-time factor from a stream event log.

    The content duration is read from the stream_done payload
    (``content_ms=<value>``), keeping the report a pure function of the log.
    """
    start = log.first("input_end")
    done = log.first("stream_done")
    if start is None or done is None:
        raise StreamProtocolError("log must contain input_end and stream_done events")
    audio = log.first("first_audio_token")
    motion = log.first("first_motion_frame")
    ttft = audio.timestamp_ms - start.timestamp_ms if audio else None
    ttfa = motion.timestamp_ms - start.timestamp_ms if motion else None
    content_ms = None
    for item in done.payload.split():
        if item.startswith("content_ms="):
            content_ms = float(item.split("=", 1)[1])
    if content_ms is None or content_ms <= 0:
        raise StreamProtocolError("stream_done payload must carry content_ms=<positive value>")
    generation_ms = done.timestamp_ms - start.timestamp_ms
    if generation_ms <= 0:
        raise StreamProtocolError("stream_done must come strictly after input_end")
    if ttft is not None and ttfa is not None and ttfa < ttft:
        raise StreamProtocolError("first motion precedes first audio in the log")
    return LatencyReport(
        ttft_ms=ttft,
        ttfa_ms=ttfa,
        rtf=generation_ms / content_ms,
        content_duration_ms=content_ms,
        generation_time_ms=generation_ms,
    )


@dataclass
class TimingModel:
    """Deterministic per-event delays for simulated streams (milliseconds)."""

    text_token_ms: float = 10.0
    audio_token_ms: float = 40.0
    segment_ms: float = 100.0


class ManualClock:
    """Simulated clock advanced explicitly by the stream loop."""

    def __init__(self, start_ms: float = 0.0):
        self.now_ms = float(start_ms)

    def advance(self, delta_ms: float) -> None:
        self.now_ms += float(delta_ms)


class WallClock:
    """Live clock for benchmarking; advance() is a no-op, time simply passes."""

    def __init__(self):
        self._origin = time.perf_counter()

    @property
    def now_ms(self) -> float:
        return (time.perf_counter() - self._origin) * 1000.0

    def advance(self, delta_ms: float) -> None:
        pass


def run_stream(
    features: AudioFeatureSequence,
    predictor: PredictorSpec,
    cb: Codebook,
    proj: WindowProjection,
    cfg: QuantizerConfig,
    segment_tokens: int = 5,
    timing: Optional[TimingModel] = None,
    clock=None,
) -> Tuple[TokenSequence, MotionSequence, StreamEventLog]:
    """Drive the full segment loop over a feature sequence.

    Emits input_end, first_text_token, first_audio_token, per-segment
    first_motion_frame/segment_done events and a final stream_done whose
    payload records the synthesized content duration.
    """
    if segment_tokens < 1:
        raise ValueError(f"segment_tokens must be >= 1, got {segment_tokens}")
    timing = timing or TimingModel()
    clock = clock if clock is not None else ManualClock()
    log = StreamEventLog()
    log.append(clock.now_ms, "input_end")
    clock.advance(timing.text_token_ms)
    log.append(clock.now_ms, "first_text_token")
    clock.advance(timing.audio_token_ms)
    log.append(clock.now_ms, "first_audio_token")

    seg_frames = cfg.group_size * segment_tokens
    state = initial_state(cfg, segment_tokens)
    token_chunks: List[np.ndarray] = []
    motion_chunks: List[np.ndarray] = []
    n_segments = math.ceil(len(features) / seg_frames)
    for s in range(n_segments):
        chunk = AudioFeatureSequence(
            features.features[s * seg_frames : (s + 1) * seg_frames], fps=features.fps
        )
        tokens, motion, state = step(state, chunk, predictor, cb, proj)
        clock.advance(timing.segment_ms)
        if s == 0:
            log.append(clock.now_ms, "first_motion_frame")
        log.append(clock.now_ms, "segment_done", f"segment={s}")
        token_chunks.append(tokens.indices)
        motion_chunks.append(motion.params)

    all_indices = np.vstack(token_chunks)
    all_params = np.vstack(motion_chunks)[: len(features)]
    content_ms = len(features) / features.fps * 1000.0
    log.append(clock.now_ms, "stream_done", f"content_ms={content_ms!r}")
    all_tokens = TokenSequence(
        all_indices, group_size=cfg.group_size, num_levels=cfg.num_levels, codebook_size=cfg.codebook_size
    )
    return all_tokens, MotionSequence(all_params, fps=features.fps), log


def make_retrieval_corpus(
    features: AudioFeatureSequence,
    tokens: TokenSequence,
    cfg: QuantizerConfig,
    segment_tokens: int = 5,
) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Build (pooled feature key, token segment) pairs from an aligned stream."""
    seg_frames = cfg.group_size * segment_tokens
    out: List[Tuple[np.ndarray, np.ndarray]] = []
    n_segments = math.ceil(len(features) / seg_frames)
    for s in range(n_segments):
        chunk = AudioFeatureSequence(
            features.features[s * seg_frames : (s + 1) * seg_frames], fps=features.fps
        )
        pooled = downsample_features(chunk, cfg.group_size)
        rows = tokens.indices[s * segment_tokens : s * segment_tokens + len(pooled)]
        if rows.shape[0] == 0:
            break
        out.append((pooled.features.mean(axis=0), rows))
    return out


def hierarchical_ce(pred_dists: np.ndarray, targets: TokenSequence) -> float:
    """Sum over levels of the mean cross-entropy -log p(target), natural log.

    pred_dists has shape (L, N_q, K) with each (position, level) row a
    probability distribution (sum within 1e-6 of 1). A zero probability at
    any target makes the result +inf.
    """
    dists = np.asarray(pred_dists, dtype=np.float64)
    if dists.ndim != 3:
        raise IncompatibleShapeError(f"pred_dists must be (L, N_q, K), got {dists.shape}")
    n, n_q, k = dists.shape
    if targets.indices.shape != (n, n_q) or k != targets.codebook_size:
        raise IncompatibleShapeError("pred_dists shape does not match target token grid")
    if n == 0:
        raise ValueError("cannot score an empty token grid")
    sums = dists.sum(axis=2)
    if np.any(np.abs(sums - 1.0) > 1e-6):
        raise ValueError("pred_dists rows must each sum to 1 within 1e-6")
    p = dists[np.arange(n)[:, None], np.arange(n_q)[None, :], targets.indices]
    if np.any(p == 0.0):
        return float("inf")
    return float(np.sum(np.mean(-np.log(p), axis=0)))


def weighted_total(l_motion: float, lam: float) -> float:
    """The motion term's contribution to the joint objective."""
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    return lam * l_motion
