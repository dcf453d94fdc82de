"""File formats: motion (A2MO/CSV), codebooks (A2CB), tokens (A2TK),
blendshape models (JSON), feature sequences (A2FE), event logs and reports.

Binary containers are little-endian with u32 header fields. Motion frames,
codebook entries and projections are stored as f32; loading promotes to
f64. CSV motion files quantize to f32 and print each value with numpy's
shortest round-trip repr, so CSV -> binary round-trips bit-exactly for any
value representable in f32. All JSON reports are written with sorted keys
and a trailing newline so identical inputs produce identical bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from . import losses, metrics, motion_core, rvq, streamsim
from .errors import FormatError

MOTION_MAGIC = b"A2MO"
CODEBOOK_MAGIC = b"A2CB"
TOKEN_MAGIC = b"A2TK"
FEATURE_MAGIC = b"A2FE"

_PathLike = Union[str, Path]


def _read_exact(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise FormatError(f"truncated file while reading {what}")
    return data


def _read_u32(fh, what: str) -> int:
    return struct.unpack("<I", _read_exact(fh, 4, what))[0]


def _read_f32(fh, what: str) -> float:
    return struct.unpack("<f", _read_exact(fh, 4, what))[0]


def _read_f32_array(fh, count: int, what: str) -> np.ndarray:
    data = _read_exact(fh, 4 * count, what)
    return np.frombuffer(data, dtype="<f4").astype(np.float64)


def _check_magic(fh, magic: bytes, path) -> None:
    got = fh.read(4)
    if got != magic:
        raise FormatError(f"{path}: expected magic {magic!r}, found {got!r}")


# ---------------------------------------------------------------------------
# Motion sequences


def save_motion(path: _PathLike, m: motion_core.MotionSequence) -> None:
    """Write the A2MO binary container (f32 frames, row-major)."""
    with open(path, "wb") as fh:
        fh.write(MOTION_MAGIC)
        fh.write(struct.pack("<I", 1))
        fh.write(struct.pack("<f", m.fps))
        fh.write(struct.pack("<I", len(m)))
        fh.write(struct.pack("<I", motion_core.FRAME_DIM))
        fh.write(m.params.astype("<f4").tobytes())


def load_motion(path: _PathLike) -> motion_core.MotionSequence:
    with open(path, "rb") as fh:
        _check_magic(fh, MOTION_MAGIC, path)
        version = _read_u32(fh, "version")
        if version != 1:
            raise FormatError(f"{path}: unsupported motion format version {version}")
        fps = _read_f32(fh, "fps")
        count = _read_u32(fh, "frame_count")
        dim = _read_u32(fh, "dim")
        if dim != motion_core.FRAME_DIM:
            raise FormatError(f"{path}: frame dim must be {motion_core.FRAME_DIM}, got {dim}")
        frames = _read_f32_array(fh, count * dim, "frames").reshape(count, dim)
    return motion_core.MotionSequence(frames, fps=fps)


def _f32_repr(value: float) -> str:
    return np.format_float_positional(np.float32(value), unique=True, trim="0")


def save_motion_csv(path: _PathLike, m: motion_core.MotionSequence) -> None:
    """Lossless (at f32 precision) CSV alternative to the binary container."""
    lines = [f"# fps={_f32_repr(m.fps)}", ",".join(motion_core.CHANNEL_NAMES)]
    quantized = m.params.astype(np.float32)
    for row in quantized:
        lines.append(",".join(_f32_repr(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_motion_csv(path: _PathLike) -> motion_core.MotionSequence:
    text = Path(path).read_text(encoding="utf-8")
    fps = 25.0
    rows: List[List[float]] = []
    header_seen = False
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("fps="):
                fps = float(body[4:])
            continue
        if not header_seen:
            names = line.split(",")
            if names != motion_core.CHANNEL_NAMES:
                raise FormatError(f"{path}:{line_no}: header does not name the 58 channels")
            header_seen = True
            continue
        parts = line.split(",")
        if len(parts) != motion_core.FRAME_DIM:
            raise FormatError(f"{path}:{line_no}: expected {motion_core.FRAME_DIM} values")
        rows.append([float(p) for p in parts])
    if not header_seen:
        raise FormatError(f"{path}: missing CSV header row")
    params = np.asarray(rows, dtype=np.float64).reshape(len(rows), motion_core.FRAME_DIM)
    params = params.astype(np.float32).astype(np.float64)
    return motion_core.MotionSequence(params, fps=np.float32(fps))


# ---------------------------------------------------------------------------
# Blendshape models (JSON key-value tree)


def save_model(path: _PathLike, model: motion_core.BlendshapeModel) -> None:
    doc = {
        "format": "facemotion-model",
        "version": 1,
        "template": model.template.tolist(),
        "expr_basis": model.expr_basis.tolist(),
        "eyelid_basis": model.eyelid_basis.tolist(),
        "jaw_joint": model.jaw_joint.tolist(),
        "jaw_region": model.jaw_region.tolist(),
        "regions": {k: v.tolist() for k, v in model.regions.items()},
        "landmarks": dict(model.landmarks),
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n", encoding="utf-8")


def load_model(path: _PathLike) -> motion_core.BlendshapeModel:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != "facemotion-model":
        raise FormatError(f"{path}: not a facemotion model document")
    if doc.get("version") != 1:
        raise FormatError(f"{path}: unsupported model version {doc.get('version')}")
    try:
        return motion_core.BlendshapeModel(
            template=np.asarray(doc["template"], dtype=np.float64),
            expr_basis=np.asarray(doc["expr_basis"], dtype=np.float64),
            eyelid_basis=np.asarray(doc["eyelid_basis"], dtype=np.float64),
            jaw_joint=np.asarray(doc["jaw_joint"], dtype=np.float64),
            jaw_region=np.asarray(doc["jaw_region"], dtype=np.intp),
            regions={k: np.asarray(v, dtype=np.intp) for k, v in doc["regions"].items()},
            landmarks={k: int(v) for k, v in doc["landmarks"].items()},
        )
    except KeyError as exc:
        raise FormatError(f"{path}: missing model field {exc}") from exc


# ---------------------------------------------------------------------------
# Codebooks + projections (A2CB)


def save_codebook(path: _PathLike, cb: rvq.Codebook, proj: rvq.WindowProjection, cfg: rvq.QuantizerConfig) -> None:
    """A2CB: header, f32 codebook entries level-major, then encode/decode maps."""
    with open(path, "wb") as fh:
        fh.write(CODEBOOK_MAGIC)
        fh.write(struct.pack("<I", 1))
        fh.write(struct.pack("<I", cb.num_levels))
        fh.write(struct.pack("<I", cb.codebook_size))
        fh.write(struct.pack("<I", cb.latent_dim))
        fh.write(struct.pack("<I", cfg.group_size))
        fh.write(struct.pack("<f", cfg.gamma))
        fh.write(cb.entries.astype("<f4").tobytes())
        for mat, bias in ((proj.encode_w, proj.encode_b), (proj.decode_w, proj.decode_b)):
            fh.write(struct.pack("<II", mat.shape[0], mat.shape[1]))
            fh.write(mat.astype("<f4").tobytes())
            fh.write(bias.astype("<f4").tobytes())


def load_codebook(path: _PathLike) -> Tuple[rvq.Codebook, rvq.WindowProjection, rvq.QuantizerConfig]:
    with open(path, "rb") as fh:
        _check_magic(fh, CODEBOOK_MAGIC, path)
        version = _read_u32(fh, "version")
        if version != 1:
            raise FormatError(f"{path}: unsupported codebook version {version}")
        n_q = _read_u32(fh, "num_levels")
        k = _read_u32(fh, "codebook_size")
        d_z = _read_u32(fh, "latent_dim")
        g = _read_u32(fh, "group_size")
        gamma = _read_f32(fh, "gamma")
        entries = _read_f32_array(fh, n_q * k * d_z, "entries").reshape(n_q, k, d_z)
        maps = []
        for what in ("encode", "decode"):
            rows, cols = struct.unpack("<II", _read_exact(fh, 8, f"{what} dims"))
            mat = _read_f32_array(fh, rows * cols, f"{what} matrix").reshape(rows, cols)
            bias = _read_f32_array(fh, rows, f"{what} bias")
            maps.append((mat, bias))
    cfg = rvq.QuantizerConfig(
        group_size=g, num_levels=n_q, codebook_size=k, latent_dim=d_z, gamma=float(np.float32(gamma))
    )
    proj = rvq.WindowProjection(maps[0][0], maps[0][1], maps[1][0], maps[1][1])
    return rvq.Codebook(entries), proj, cfg


# ---------------------------------------------------------------------------
# Token grids (A2TK)


def save_tokens(path: _PathLike, tokens: rvq.TokenSequence) -> None:
    if tokens.codebook_size > 0xFFFF:
        raise FormatError("token files support codebook sizes up to 65535")
    with open(path, "wb") as fh:
        fh.write(TOKEN_MAGIC)
        fh.write(struct.pack("<I", 1))
        fh.write(struct.pack("<I", len(tokens)))
        fh.write(struct.pack("<I", tokens.num_levels))
        fh.write(struct.pack("<I", tokens.codebook_size))
        fh.write(tokens.indices.astype("<u2").tobytes())


def load_tokens(path: _PathLike, group_size: int = 5) -> rvq.TokenSequence:
    """Token files do not carry the temporal group size; pass the codec's."""
    with open(path, "rb") as fh:
        _check_magic(fh, TOKEN_MAGIC, path)
        version = _read_u32(fh, "version")
        if version != 1:
            raise FormatError(f"{path}: unsupported token version {version}")
        count = _read_u32(fh, "count")
        n_q = _read_u32(fh, "num_levels")
        k = _read_u32(fh, "codebook_size")
        data = _read_exact(fh, 2 * count * n_q, "indices")
        indices = np.frombuffer(data, dtype="<u2").astype(np.int64).reshape(count, n_q)
    return rvq.TokenSequence(indices, group_size=group_size, num_levels=n_q, codebook_size=k)


# ---------------------------------------------------------------------------
# Feature sequences (A2FE)


def save_features(path: _PathLike, h: streamsim.AudioFeatureSequence) -> None:
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<I", 1))
        fh.write(struct.pack("<f", h.fps))
        fh.write(struct.pack("<I", len(h)))
        fh.write(struct.pack("<I", h.features.shape[1]))
        fh.write(h.features.astype("<f4").tobytes())


def load_features(path: _PathLike) -> streamsim.AudioFeatureSequence:
    with open(path, "rb") as fh:
        _check_magic(fh, FEATURE_MAGIC, path)
        version = _read_u32(fh, "version")
        if version != 1:
            raise FormatError(f"{path}: unsupported feature version {version}")
        fps = _read_f32(fh, "fps")
        count = _read_u32(fh, "count")
        dim = _read_u32(fh, "dim")
        feats = _read_f32_array(fh, count * dim, "features").reshape(count, dim)
    return streamsim.AudioFeatureSequence(feats, fps=fps)


# ---------------------------------------------------------------------------
# Event logs


def save_event_log(path: _PathLike, log: streamsim.StreamEventLog) -> None:
    lines = []
    for e in log.events:
        lines.append(f"{e.timestamp_ms!r} {e.kind} {e.payload}".rstrip())
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_event_log(path: _PathLike) -> streamsim.StreamEventLog:
    log = streamsim.StreamEventLog()
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split(maxsplit=2)
        if len(parts) < 2:
            raise FormatError(f"{path}:{line_no}: expected '<timestamp_ms> <kind> [payload]'")
        try:
            ts = float(parts[0])
        except ValueError as exc:
            raise FormatError(f"{path}:{line_no}: bad timestamp {parts[0]!r}") from exc
        if parts[1] not in streamsim.EVENT_KINDS:
            raise FormatError(f"{path}:{line_no}: unknown event kind {parts[1]!r}")
        try:
            log.append(ts, parts[1], parts[2] if len(parts) == 3 else "")
        except Exception as exc:
            raise FormatError(f"{path}:{line_no}: {exc}") from exc
    return log


# ---------------------------------------------------------------------------
# Reports and manifests (structured JSON text)


def _write_json(path: _PathLike, doc: dict) -> None:
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def save_loss_report(path: _PathLike, report: losses.LossReport) -> None:
    _write_json(path, {"report": "loss", **report.to_dict()})


def save_metrics_report(path: _PathLike, report: metrics.MetricsReport) -> None:
    _write_json(path, {"report": "metrics", **report.to_dict()})


def save_latency_report(path: _PathLike, report: streamsim.LatencyReport) -> None:
    _write_json(path, {"report": "latency", **report.to_dict()})


def load_report(path: _PathLike) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "report" not in doc and "manifest" not in doc:
        raise FormatError(f"{path}: not a report document")
    return doc


def save_manifest(
    path: _PathLike,
    command: str,
    seed: Optional[int],
    inputs: Dict[str, str],
    outputs: Dict[str, str],
    config: dict,
    results: Optional[dict] = None,
) -> None:
    doc = {
        "manifest": 1,
        "tool_version": _tool_version(),
        "command": command,
        "seed": seed,
        "inputs": dict(inputs),
        "outputs": dict(outputs),
        "config": config,
    }
    if results is not None:
        doc["results"] = results
    _write_json(path, doc)


def _tool_version() -> str:
    from . import __version__

    return __version__
