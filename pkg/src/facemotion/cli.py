"""Command-line surface for the motion codec pipeline.

Commands: gen-data, fit-codec, encode, decode, eval-recon, eval-metrics,
compare, simulate-stream. Every run writes a manifest JSON next to its
outputs echoing the resolved configuration, so identical flags reproduce
identical bytes.

Flag precedence: command-line flags override values from --config (a JSON
file with optional "synth", "quantizer", "weights", "metrics" and "stream"
sections), which override built-in defaults.

Exit codes: 0 success, 2 usage error, 3 file-format error,
4 computation or input error (mismatched lengths, invalid values),
5 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, fileio, losses, metrics, motion_core, rvq, streamsim, synth
from .errors import FaceMotionError, FormatError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_FORMAT = 3
EXIT_COMPUTE = 4
EXIT_IO = 5


def _load_config(path):
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: config is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise FormatError(f"{path}: config must be a JSON object")
    return doc


def _resolve(flag_value, config, section, key, default):
    if flag_value is not None:
        return flag_value
    if section in config and isinstance(config[section], dict) and key in config[section]:
        return config[section][key]
    return default


def _say(args, message):
    if not args.quiet:
        print(message)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_motion_any(path) -> motion_core.MotionSequence:
    if str(path).endswith(".csv"):
        return fileio.load_motion_csv(path)
    return fileio.load_motion(path)


def _add_common(parser):
    parser.add_argument("--out", default=".", help="output directory (default: current)")
    parser.add_argument("--seed", type=int, default=None, help="random seed")
    parser.add_argument("--config", default=None, help="JSON config file")
    parser.add_argument("--quiet", action="store_true", help="suppress progress output")


# ---------------------------------------------------------------------------
# gen-data


def cmd_gen_data(args) -> int:
    config = _load_config(args.config)
    frames = int(_resolve(args.frames, config, "synth", "duration_frames", 250))
    if frames < 1:
        print(f"gen-data: --frames must be >= 1, got {frames}", file=sys.stderr)
        return EXIT_USAGE
    vertices = int(_resolve(args.vertices, config, "synth", "num_vertices", 200))
    if vertices < 10:
        print(f"gen-data: --vertices must be >= 10, got {vertices}", file=sys.stderr)
        return EXIT_USAGE
    scfg = synth.SynthConfig(
        seed=int(_resolve(args.seed, config, "synth", "seed", 0)),
        num_vertices=vertices,
        duration_frames=frames,
        fps=float(_resolve(args.fps, config, "synth", "fps", 25.0)),
        speech_rate_hz=float(_resolve(args.speech_rate, config, "synth", "speech_rate_hz", 4.0)),
        expression_amplitude=float(
            _resolve(args.expression_amplitude, config, "synth", "expression_amplitude", 0.08)
        ),
        noise_std=float(_resolve(args.noise_std, config, "synth", "noise_std", 0.002)),
    )
    out = _out_dir(args)
    model_path = out / "model.json"
    motion_path = out / "motion.a2mo"
    fileio.save_model(model_path, synth.make_model(scfg))
    fileio.save_motion(motion_path, synth.make_motion(scfg))
    fileio.save_manifest(
        out / "gen-data.manifest.json",
        command="gen-data",
        seed=scfg.seed,
        inputs={},
        outputs={"model": str(model_path), "motion": str(motion_path)},
        config={"synth": scfg.__dict__},
    )
    _say(args, f"wrote {model_path} and {motion_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# fit-codec


def _quantizer_config(args, config) -> rvq.QuantizerConfig:
    return rvq.QuantizerConfig(
        group_size=int(_resolve(args.group_size, config, "quantizer", "group_size", 5)),
        num_levels=int(_resolve(args.levels, config, "quantizer", "num_levels", 6)),
        codebook_size=int(_resolve(args.codebook_size, config, "quantizer", "codebook_size", 256)),
        latent_dim=int(_resolve(args.latent_dim, config, "quantizer", "latent_dim", 256)),
        gamma=float(_resolve(args.gamma, config, "quantizer", "gamma", 0.25)),
        ema_decay=float(_resolve(args.ema_decay, config, "quantizer", "ema_decay", 0.99)),
        dead_code_threshold=float(
            _resolve(args.dead_code_threshold, config, "quantizer", "dead_code_threshold", 1.0)
        ),
        seed=int(_resolve(args.seed, config, "quantizer", "seed", 0)),
    )


def cmd_fit_codec(args) -> int:
    config = _load_config(args.config)
    qcfg = _quantizer_config(args, config)
    corpus = [_load_motion_any(p) for p in args.motion]
    if not corpus:
        print("fit-codec: no training motion files given", file=sys.stderr)
        return EXIT_USAGE
    proj, cb = rvq.fit_codec(corpus, qcfg)
    latents = np.vstack([rvq.window_encode(m, proj, qcfg).vectors for m in corpus])
    z = rvq.LatentSequence(latents, fps_latent=corpus[0].fps / qcfg.group_size)
    tokens, level_norms = rvq.rvq_encode(z, cb, group_size=qcfg.group_size)
    q = rvq.rvq_decode(tokens, cb, fps_latent=z.fps_latent)
    codebook_term, commit_term, vq_total = rvq.commitment_loss(z, q, qcfg.gamma)

    out = _out_dir(args)
    cb_path = out / "codebook.a2cb"
    fileio.save_codebook(cb_path, cb, proj, qcfg)
    fileio.save_manifest(
        out / "fit-codec.manifest.json",
        command="fit-codec",
        seed=qcfg.seed,
        inputs={f"motion_{i}": str(p) for i, p in enumerate(args.motion)},
        outputs={"codebook": str(cb_path)},
        config={"quantizer": qcfg.__dict__},
        results={
            "residual_norms": [float(v) for v in level_norms],
            "codebook_term": codebook_term,
            "commit_term": commit_term,
            "quantizer_objective": vq_total,
            "lambda_vq": 1.0,
        },
    )
    _say(args, f"wrote {cb_path} (final residual norm {level_norms[-1]:.6g})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# encode / decode


def cmd_encode(args) -> int:
    cb, proj, qcfg = fileio.load_codebook(args.codebook)
    m = _load_motion_any(args.motion)
    z = rvq.window_encode(m, proj, qcfg)
    tokens, level_norms = rvq.rvq_encode(z, cb, group_size=qcfg.group_size)
    out = _out_dir(args)
    tok_path = out / "tokens.a2tk"
    fileio.save_tokens(tok_path, tokens)
    fileio.save_manifest(
        out / "encode.manifest.json",
        command="encode",
        seed=None,
        inputs={"codebook": str(args.codebook), "motion": str(args.motion)},
        outputs={"tokens": str(tok_path)},
        config={"quantizer": qcfg.__dict__},
        results={
            "frames": len(m),
            "fps": m.fps,
            "residual_norms": [float(v) for v in level_norms],
        },
    )
    _say(args, f"wrote {tok_path} ({len(tokens)} token rows)")
    return EXIT_OK


def cmd_decode(args) -> int:
    cb, proj, qcfg = fileio.load_codebook(args.codebook)
    tokens = fileio.load_tokens(args.tokens, group_size=qcfg.group_size)
    frames = args.frames if args.frames is not None else len(tokens) * qcfg.group_size
    fps = args.fps if args.fps is not None else 25.0
    z = rvq.rvq_decode(tokens, cb, fps_latent=fps / qcfg.group_size)
    m = rvq.window_decode(z, proj, qcfg, original_t=frames)
    out = _out_dir(args)
    motion_path = out / "decoded.a2mo"
    fileio.save_motion(motion_path, m)
    fileio.save_manifest(
        out / "decode.manifest.json",
        command="decode",
        seed=None,
        inputs={"codebook": str(args.codebook), "tokens": str(args.tokens)},
        outputs={"motion": str(motion_path)},
        config={"quantizer": qcfg.__dict__, "frames": frames, "fps": fps},
    )
    _say(args, f"wrote {motion_path} ({frames} frames)")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval-recon / eval-metrics / compare


def _loss_weights(args, config) -> losses.LossWeights:
    return losses.LossWeights(
        w_param=float(_resolve(args.w_param, config, "weights", "w_param", 1.0)),
        w_geo=float(_resolve(args.w_geo, config, "weights", "w_geo", 1e5)),
        w_dyn=float(_resolve(args.w_dyn, config, "weights", "w_dyn", 1e2)),
        gamma=float(_resolve(args.gamma, config, "weights", "gamma", 0.25)),
        lambda_vq=float(_resolve(args.lambda_vq, config, "weights", "lambda_vq", 1.0)),
    )


def cmd_eval_recon(args) -> int:
    config = _load_config(args.config)
    weights = _loss_weights(args, config)
    model = fileio.load_model(args.model)
    gt = _load_motion_any(args.gt)
    pred = _load_motion_any(args.pred)
    z = q = None
    if args.codebook is not None:
        cb, proj, qcfg = fileio.load_codebook(args.codebook)
        z = rvq.window_encode(gt, proj, qcfg)
        tokens, _ = rvq.rvq_encode(z, cb, group_size=qcfg.group_size)
        q = rvq.rvq_decode(tokens, cb, fps_latent=z.fps_latent)
    report = losses.total_losses(model, gt, pred, z=z, q=q, weights=weights)
    out = _out_dir(args)
    report_path = out / "loss_report.json"
    fileio.save_loss_report(report_path, report)
    inputs = {"model": str(args.model), "gt": str(args.gt), "pred": str(args.pred)}
    if args.codebook is not None:
        inputs["codebook"] = str(args.codebook)
    fileio.save_manifest(
        out / "eval-recon.manifest.json",
        command="eval-recon",
        seed=None,
        inputs=inputs,
        outputs={"loss_report": str(report_path)},
        config={"weights": weights.to_dict()},
    )
    _say(args, f"wrote {report_path} (l_rec={report.l_rec:.6g})")
    return EXIT_OK


def _metrics_config(args, config, fps: float) -> metrics.MetricsConfig:
    return metrics.MetricsConfig(
        fps=fps,
        epsilon=float(_resolve(args.epsilon, config, "metrics", "epsilon", 1e-8)),
        peak_min_prominence=float(
            _resolve(args.peak_prominence, config, "metrics", "peak_min_prominence", 0.05)
        ),
        peak_min_distance=int(_resolve(args.peak_distance, config, "metrics", "peak_min_distance", 3)),
    )


def cmd_eval_metrics(args) -> int:
    config = _load_config(args.config)
    model = fileio.load_model(args.model)
    gt = _load_motion_any(args.gt)
    pred = _load_motion_any(args.pred)
    mcfg = _metrics_config(args, config, gt.fps)
    report = metrics.full_report(model, pred, gt, mcfg)
    out = _out_dir(args)
    report_path = out / "metrics_report.json"
    fileio.save_metrics_report(report_path, report)
    fileio.save_manifest(
        out / "eval-metrics.manifest.json",
        command="eval-metrics",
        seed=None,
        inputs={"model": str(args.model), "gt": str(args.gt), "pred": str(args.pred)},
        outputs={"metrics_report": str(report_path)},
        config={"metrics": mcfg.to_dict()},
    )
    _say(args, f"wrote {report_path} (MOD={report.mod_mm:.4g} mm)")
    return EXIT_OK


# Ranking targets: each metric is scored by distance to its ideal; the
# reference-free UFD is scored by distance to the reference's own UFD.
_METRIC_TARGETS = {
    "mod_mm": 0.0,
    "temporal_corr": 1.0,
    "velocity_corr": 1.0,
    "lip_width_corr": 1.0,
    "liveliness_ratio": 1.0,
    "peak_align_ms": 0.0,
}


def cmd_compare(args) -> int:
    config = _load_config(args.config)
    model = fileio.load_model(args.model)
    reference = _load_motion_any(args.reference)
    mcfg = _metrics_config(args, config, reference.fps)
    ref_ufd = metrics.ufd(model, reference)

    names, reports = [], []
    for i, path in enumerate(args.candidate):
        name = Path(path).stem
        if name in names:
            name = f"{name}_{i}"
        names.append(name)
        reports.append(metrics.full_report(model, _load_motion_any(path), reference, mcfg))

    rankings = {}
    targets = dict(_METRIC_TARGETS, ufd=ref_ufd)
    for metric_name, target in sorted(targets.items()):
        scored = []
        for name, rep in zip(names, reports):
            value = rep.to_dict()["values"][metric_name]
            if value is not None:
                scored.append((abs(value - target), name))
        scored.sort(key=lambda pair: (pair[0], names.index(pair[1])))
        rankings[metric_name] = [name for _, name in scored]

    out = _out_dir(args)
    report_paths = {}
    for name, rep in zip(names, reports):
        path = out / f"metrics_{name}.json"
        fileio.save_metrics_report(path, rep)
        report_paths[name] = str(path)
    comparison = {
        "report": "comparison",
        "reference": str(args.reference),
        "reference_ufd": ref_ufd,
        "candidates": {
            name: rep.to_dict()["values"] for name, rep in zip(names, reports)
        },
        "undefined": {name: rep.undefined for name, rep in zip(names, reports)},
        "targets": targets,
        "rankings": rankings,
    }
    cmp_path = out / "comparison.json"
    Path(cmp_path).write_text(json.dumps(comparison, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    fileio.save_manifest(
        out / "compare.manifest.json",
        command="compare",
        seed=None,
        inputs={"model": str(args.model), "reference": str(args.reference),
                **{f"candidate_{i}": str(p) for i, p in enumerate(args.candidate)}},
        outputs={"comparison": str(cmp_path), **report_paths},
        config={"metrics": mcfg.to_dict()},
    )
    _say(args, f"wrote {cmp_path} ({len(names)} candidates)")
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate-stream


def cmd_simulate_stream(args) -> int:
    config = _load_config(args.config)
    cb, proj, qcfg = fileio.load_codebook(args.codebook)
    features = fileio.load_features(args.features)
    segment_tokens = int(_resolve(args.segment_tokens, config, "stream", "segment_tokens", 5))
    seed = int(_resolve(args.seed, config, "stream", "seed", 0))

    gt_tokens = None
    corpus = None
    if args.predictor == "oracle":
        if args.gt_tokens is None:
            print("simulate-stream: --gt-tokens is required for the oracle predictor", file=sys.stderr)
            return EXIT_USAGE
        gt_tokens = fileio.load_tokens(args.gt_tokens, group_size=qcfg.group_size)
    if args.predictor == "retrieval":
        if args.corpus_features is None or args.corpus_tokens is None:
            print(
                "simulate-stream: --corpus-features and --corpus-tokens are required for retrieval",
                file=sys.stderr,
            )
            return EXIT_USAGE
        corpus = streamsim.make_retrieval_corpus(
            fileio.load_features(args.corpus_features),
            fileio.load_tokens(args.corpus_tokens, group_size=qcfg.group_size),
            qcfg,
            segment_tokens,
        )
    predictor = streamsim.PredictorSpec(kind=args.predictor, corpus=corpus, gt_tokens=gt_tokens, seed=seed)
    timing = streamsim.TimingModel(
        text_token_ms=float(_resolve(args.text_ms, config, "stream", "text_token_ms", 10.0)),
        audio_token_ms=float(_resolve(args.audio_ms, config, "stream", "audio_token_ms", 40.0)),
        segment_ms=float(_resolve(args.segment_ms, config, "stream", "segment_ms", 100.0)),
    )
    tokens, motion, log = streamsim.run_stream(
        features, predictor, cb, proj, qcfg, segment_tokens=segment_tokens, timing=timing
    )
    report = streamsim.latency_report(log)

    out = _out_dir(args)
    paths = {
        "tokens": out / "stream_tokens.a2tk",
        "motion": out / "stream_motion.a2mo",
        "events": out / "events.log",
        "latency_report": out / "latency_report.json",
    }
    fileio.save_tokens(paths["tokens"], tokens)
    fileio.save_motion(paths["motion"], motion)
    fileio.save_event_log(paths["events"], log)
    fileio.save_latency_report(paths["latency_report"], report)
    inputs = {"features": str(args.features), "codebook": str(args.codebook)}
    if args.gt_tokens:
        inputs["gt_tokens"] = str(args.gt_tokens)
    if args.corpus_features:
        inputs["corpus_features"] = str(args.corpus_features)
        inputs["corpus_tokens"] = str(args.corpus_tokens)
    fileio.save_manifest(
        out / "simulate-stream.manifest.json",
        command="simulate-stream",
        seed=seed,
        inputs=inputs,
        outputs={k: str(v) for k, v in paths.items()},
        config={
            "quantizer": qcfg.__dict__,
            "stream": {
                "predictor": args.predictor,
                "segment_tokens": segment_tokens,
                "timing": timing.__dict__,
            },
        },
    )
    _say(args, f"wrote {paths['latency_report']} (RTF={report.rtf:.4g})")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="facemotion",
        description="3D facial motion codec, metrics and streaming simulator",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic model and motion sequence")
    _add_common(p)
    p.add_argument("--frames", type=int, default=None, help="number of motion frames (default 250)")
    p.add_argument("--vertices", type=int, default=None, help="mesh vertex count (default 200)")
    p.add_argument("--fps", type=float, default=None, help="frame rate (default 25)")
    p.add_argument("--speech-rate", type=float, default=None, help="jaw bursts per second (default 4)")
    p.add_argument("--expression-amplitude", type=float, default=None)
    p.add_argument("--noise-std", type=float, default=None)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("fit-codec", help="fit window projections and codebooks on motion files")
    _add_common(p)
    p.add_argument("--motion", action="append", required=True, help="training motion file (repeatable)")
    p.add_argument("--group-size", type=int, default=None)
    p.add_argument("--levels", type=int, default=None)
    p.add_argument("--codebook-size", type=int, default=None)
    p.add_argument("--latent-dim", type=int, default=None)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--ema-decay", type=float, default=None)
    p.add_argument("--dead-code-threshold", type=float, default=None)
    p.set_defaults(func=cmd_fit_codec)

    p = sub.add_parser("encode", help="encode a motion file to tokens")
    _add_common(p)
    p.add_argument("--codebook", required=True)
    p.add_argument("--motion", required=True)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="decode a token file to motion")
    _add_common(p)
    p.add_argument("--codebook", required=True)
    p.add_argument("--tokens", required=True)
    p.add_argument("--frames", type=int, default=None, help="original frame count (default: all)")
    p.add_argument("--fps", type=float, default=None, help="output frame rate (default 25)")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("eval-recon", help="itemized reconstruction loss report")
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--codebook", default=None, help="include quantizer diagnostics")
    p.add_argument("--w-param", type=float, default=None)
    p.add_argument("--w-geo", type=float, default=None)
    p.add_argument("--w-dyn", type=float, default=None)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--lambda-vq", type=float, default=None)
    p.set_defaults(func=cmd_eval_recon)

    p = sub.add_parser("eval-metrics", help="full metric report for a prediction/reference pair")
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--peak-prominence", type=float, default=None)
    p.add_argument("--peak-distance", type=int, default=None)
    p.set_defaults(func=cmd_eval_metrics)

    p = sub.add_parser("compare", help="rank candidate motions against one reference")
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--candidate", action="append", required=True, help="candidate motion file (repeatable)")
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--peak-prominence", type=float, default=None)
    p.add_argument("--peak-distance", type=int, default=None)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("simulate-stream", help="run the segment-wise decode protocol")
    _add_common(p)
    p.add_argument("--features", required=True)
    p.add_argument("--codebook", required=True)
    p.add_argument("--predictor", choices=streamsim.PREDICTOR_KINDS, default="hold_last")
    p.add_argument("--gt-tokens", default=None, help="token file for the oracle predictor")
    p.add_argument("--corpus-features", default=None, help="feature file for the retrieval corpus")
    p.add_argument("--corpus-tokens", default=None, help="token file for the retrieval corpus")
    p.add_argument("--segment-tokens", type=int, default=None)
    p.add_argument("--text-ms", type=float, default=None)
    p.add_argument("--audio-ms", type=float, default=None)
    p.add_argument("--segment-ms", type=float, default=None)
    p.set_defaults(func=cmd_simulate_stream)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FormatError as exc:
        print(f"facemotion {args.command}: format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (FaceMotionError, ValueError) as exc:
        print(f"facemotion {args.command}: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    except OSError as exc:
        print(f"facemotion {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
