"""Command-line entry point: ``noisebench <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import pandas as pd

from . import core, estimation, gridsim, noisegen, windowing
from .core import Label
from .errors import NoiseBenchError
from .estimation import KalmanParams
from .features import FeatureCatalog
from .learn import ForestModel, ForestParams, SplitPolicy, recall, train
from .pipeline import ALLVALUES, FrameFeatures, PipelineConfig, read_config, real_residuals, run_pipeline
from .scoring import FidelityReport, SourceScore, delta, delta_table, score


def _emit(args, payload, text=None):
    if args.json:
        print(json.dumps(payload, sort_keys=True, indent=2))
    elif text is not None:
        print(text, end="" if text.endswith("\n") else "\n")


def _load_frames(args):
    if args.manifest:
        return core.load_manifest(args.manifest)
    frames = []
    for path in args.inputs or []:
        frames.append(core.load_csv(path, source_tag=args.source_tag, label=args.label))
    if not frames:
        raise NoiseBenchError("give --manifest or at least one --in file")
    return frames


def cmd_simulate(args):
    cfg = gridsim.GridConfig.from_json(args.config) if args.config else gridsim.GridConfig()
    if args.duration is not None:
        cfg = gridsim.GridConfig.from_dict({**cfg.to_dict(), "duration_s": args.duration})
    frame = gridsim.simulate(cfg)
    core.write_csv(frame, args.out)
    _emit(args, {"out": str(args.out), "samples": len(frame), "channels": frame.names}, f"wrote {len(frame)} samples to {args.out}")


def cmd_perturb(args):
    frame = core.load_csv(args.input, source_tag=args.source_tag, label=Label.SIMULATED)
    channels = args.channels.split(",") if args.channels else frame.names
    if args.fit_gmm:
        ref = core.load_csv(args.fit_gmm, label=Label.REAL)
        specs = {}
        for ch in channels:
            scale = abs(float(frame.values(ch).mean()))
            fit = noisegen.fit_gmm(real_residuals([ref], ch) / scale, k=args.k, name="gmm")
            specs[ch] = fit.spec.with_seed(args.seed)
    else:
        spec = noisegen.load_noise(args.noise, seed=args.seed)
        specs = {ch: spec for ch in channels}
    out = noisegen.perturb(frame, specs, source_tag=args.source_tag)
    core.write_csv(out, args.out)
    _emit(args, {"out": str(args.out), "source_tag": out.source_tag, "noise": {c: s.to_dict() for c, s in specs.items()}}, f"wrote {args.out} ({out.source_tag})")


def cmd_estimate(args):
    frame = core.load_csv(args.input)
    noise = estimation.estimate_frame(frame, KalmanParams(args.q, args.r))
    core.write_csv(noise, args.out)
    _emit(args, {"out": str(args.out), "channels": noise.names}, f"wrote residuals to {args.out}")


def cmd_extract(args):
    frames = _load_frames(args)
    cfg = windowing.PruneConfig(window_len=args.window)
    kalman = KalmanParams(args.q, args.r)
    tables = []
    for frame in frames:
        noise = estimation.estimate_frame(frame, kalman)
        channels = frame.names if args.channel == ALLVALUES else [args.channel]
        ff = FrameFeatures(frame, noise, channels, cfg, FeatureCatalog())
        if args.channel == ALLVALUES:
            tables.append(ff.joint_table(channels))
        else:
            tables.append(ff.channel_table(args.channel))
        if args.dump_windows:
            d = Path(args.dump_windows)
            d.mkdir(parents=True, exist_ok=True)
            for ch in channels:
                keep = ff.joint if args.channel == ALLVALUES else ff.single[ch]
                origins = ff.origins[keep]
                pairs = [
                    windowing.WindowPair(raw, res, ch, int(o), frame.source_tag, frame.label)
                    for o, raw, res in zip(
                        origins,
                        windowing.window_matrix(frame.values(ch), origins, cfg.window_len),
                        windowing.window_matrix(noise.values(ch), origins, cfg.window_len),
                    )
                ]
                windowing.dump_windows(pairs, d / f"{frame.source_tag}_{ch}_raw.csv", "raw")
                windowing.dump_windows(pairs, d / f"{frame.source_tag}_{ch}_noise.csv", "noise")
    table = pd.concat(tables, ignore_index=True)
    table.to_csv(args.out, index=False, lineterminator="\n")
    _emit(args, {"out": str(args.out), "rows": int(len(table))}, f"wrote {len(table)} feature rows to {args.out}")


def cmd_train(args):
    table = pd.read_csv(args.features)
    policy = SplitPolicy(balance_ratio=args.balance_ratio, seed=args.seed)
    hyper = ForestParams(n_trees=args.trees, max_depth=args.max_depth, min_samples_leaf=args.min_samples_leaf, seed=args.seed)
    res = train(table, policy, hyper, top_k=args.top_k)
    res.model.save(args.out)
    if args.test_out:
        res.test.to_csv(args.test_out, index=False, lineterminator="\n")
    r = recall(res.model, res.test)
    _emit(
        args,
        {"out": str(args.out), "recall": r, "features": res.model.feature_order, "fingerprint": res.model.fingerprint()},
        f"recall {r:.4f}; model written to {args.out}",
    )


def cmd_rank(args):
    model = ForestModel.load(args.model)
    table = pd.read_csv(args.features)
    is_real = table["label"] == Label.REAL.value
    channel = str(table["channel"].iloc[0]) if "channel" in table and len(table) else ""
    rep = score(model, table[~is_real], channel=channel)
    if is_real.any():
        rep.reference = SourceScore.from_probs(model.predict_proba(table[is_real]))
        rep.recall = recall(model, table)
    if args.out:
        Path(args.out).write_text(rep.to_json(), encoding="utf-8")
    _emit(args, rep.to_dict(), rep.table())


def cmd_report(args):
    base = FidelityReport.from_dict(json.loads(Path(args.baseline).read_text()))
    dyn = FidelityReport.from_dict(json.loads(Path(args.dynamic).read_text()))
    d = delta(base, dyn)
    _emit(args, d.to_dict(), delta_table([d], {base.channel: base}))


def cmd_run(args):
    cfg_doc = read_config(args.config) if args.config else {}
    if args.seed is not None:
        cfg_doc["seed"] = args.seed
    config = PipelineConfig.from_dict(cfg_doc)
    result = run_pipeline(config, args.manifest, run_dir=args.run_dir)
    summary = {
        k: {"best": r.top, "mean_p_real": r.per_source[r.top].mean_p_real, "recall": r.recall} for k, r in result.reports.items()
    }
    text = "".join(r.table() + "\n" for r in result.reports.values())
    if result.deltas:
        text += delta_table(list(result.deltas.values()), result.reports)
        for k, d in result.deltas.items():
            summary[k]["delta"] = d.deltas[d.baseline_top]
            summary[k]["argmax_preserved"] = d.argmax_preserved
    _emit(args, summary, text)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="RNG seed")
    common.add_argument("--run-dir", default=None, help="directory for intermediate artifacts")
    common.add_argument("--config", default=None, help="JSON configuration file")
    common.add_argument("--json", action="store_true", help="machine-readable output")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="noisebench", description="Rank simulated noise sources by fidelity to a real trace.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="generate a noise-free grid trace")
    p.add_argument("--out", required=True)
    p.add_argument("--duration", type=int, default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("perturb", parents=[common], help="add noise to a simulated trace")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--noise", default="gaussian1", help="preset name or noise-spec JSON")
    p.add_argument("--fit-gmm", default=None, metavar="CSV", help="fit a GMM on this reference trace instead")
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--channels", default=None, help="comma-separated subset")
    p.add_argument("--source-tag", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("estimate", parents=[common], help="Kalman residuals of every channel")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--q", type=float, default=1e-5)
    p.add_argument("--r", type=float, default=1e-2)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("extract", parents=[common], help="window features as CSV")
    p.add_argument("--manifest", default=None)
    p.add_argument("--in", dest="inputs", action="append")
    p.add_argument("--label", default="simulated")
    p.add_argument("--source-tag", default=None)
    p.add_argument("--channel", default="V1", help=f"channel name or {ALLVALUES}")
    p.add_argument("--window", type=int, default=20)
    p.add_argument("--q", type=float, default=1e-5)
    p.add_argument("--r", type=float, default=1e-2)
    p.add_argument("--dump-windows", default=None, metavar="DIR")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", parents=[common], help="fit a random forest on a feature CSV")
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--test-out", default=None, help="write the held-out partition here")
    p.add_argument("--top-k", type=int, default=11)
    p.add_argument("--balance-ratio", type=float, default=1.0)
    p.add_argument("--trees", type=int, default=100)
    p.add_argument("--max-depth", type=int, default=12)
    p.add_argument("--min-samples-leaf", type=int, default=2)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("rank", parents=[common], help="score feature rows with a model")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("report", parents=[common], help="baseline vs dynamic deltas")
    p.add_argument("--baseline", required=True)
    p.add_argument("--dynamic", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("run", parents=[common], help="full pipeline")
    p.add_argument("--manifest", required=True)
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.seed is None and args.command in ("perturb", "train"):
        args.seed = 0
    try:
        args.func(args)
    except NoiseBenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
