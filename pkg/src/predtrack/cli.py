"""Command-line entry point: ``predtrack <command> ...``.

Exit codes: 0 success, 1 usage error, 2 bad data or configuration,
3 a requested check failed.
"""

import argparse
import glob
import json
import logging
import os
import sys
from dataclasses import replace

import numpy as np

from . import motio
from .metrics import evaluate_tracking, records_to_frames, tracks_to_frames
from .predictor import Dataset, Predictor, fine_tune, train
from .simulator import Scene, SceneConfig, generate, make_training_set, standard_benchmark
from .tracker import MODES, run

log = logging.getLogger("predtrack")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CHECK = 0, 1, 2, 3


class CheckFailed(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- shared helpers -----------------------------------------------------------------

def load_models(short_path, long_path):
    models = []
    for path, horizon in ((short_path, "short"), (long_path, "long")):
        if not os.path.exists(path):
            raise FileNotFoundError(f"checkpoint not found: {path}")
        model = Predictor.load(path)
        if model.horizon != horizon:
            raise ValueError(f"{path} holds a {model.horizon}-horizon model, expected {horizon}")
        models.append(model)
    return models


def track_scene(scene, config, short, long):
    """Track a simulated scene; returns (tracks, report)."""
    frames = [(f, d) for f, d in enumerate(scene.detections, start=1)]
    tracks = run(frames, config, short, long, scene.bounds)
    hyp = tracks_to_frames({k: (t.frames, t.positions) for k, t in tracks.items()})
    return tracks, evaluate_tracking(tracks_to_frames(scene.ground_truth), hyp, 1.0)


def run_ablation(scenes, config, short, long, modes=tuple(MODES), threshold=1.0):
    """Pool metrics over ``scenes`` for each mode. Returns ``{mode: EvalReport}``."""
    generated = [s if isinstance(s, Scene) else generate(s) for s in scenes]
    out = {}
    for mode in modes:
        cfg = replace(config, mode=mode)
        gt, hyp = {}, {}
        offset = 0
        for k, scene in enumerate(generated):
            frames = [(f, d) for f, d in enumerate(scene.detections, start=1)]
            tracks = run(frames, cfg, short, long, scene.bounds)
            # scenes are laid end to end so one evaluation pools all of them
            for f, (ids, pos) in tracks_to_frames(scene.ground_truth).items():
                gt[f + offset] = ids, pos
            h = tracks_to_frames({k: (t.frames, t.positions) for k, t in tracks.items()})
            for f, (ids, pos) in h.items():
                hyp[f + offset] = [i + 1_000_000 * k for i in ids], pos
            offset += scene.config.n_frames + 1
        out[mode] = evaluate_tracking(gt, hyp, threshold)
    return out


def ablation_table(reports):
    head = f"{'mode':<5}{'MOTA':>8}{'MOTP':>8}{'MT':>7}{'ML':>7}{'FP':>6}{'FN':>6}{'IDS':>6}{'Frag':>6}"
    rows = [head]
    for mode, r in reports.items():
        rows.append(f"{mode:<5}{100 * r.mota:>8.1f}{r.motp:>8.3f}{r.mt:>7.1f}{r.ml:>7.1f}"
                    f"{r.fp:>6d}{r.fn:>6d}{r.ids:>6d}{r.frag:>6d}")
    return "\n".join(rows)


def ordering_failures(reports, min_gain=5.0):
    """Reasons the combined mode fails to beat association alone; empty when it does."""
    t1, t4 = reports["T1"], reports["T4"]
    bad = []
    if 100 * (t4.mota - t1.mota) < min_gain:
        bad.append(f"MOTA gain {100 * (t4.mota - t1.mota):.2f} < {min_gain}")
    if not t4.ids < t1.ids:
        bad.append(f"IDS {t4.ids} not below {t1.ids}")
    if not t4.frag < t1.frag:
        bad.append(f"Frag {t4.frag} not below {t1.frag}")
    return bad


def gt_scene(records, bounds):
    """Wrap MOTChallenge ground-truth records as a scene for window extraction."""
    acc = {}
    for r in records:
        if r.id >= 0:
            acc.setdefault(r.id, []).append((r.frame, r.centroid))
    gt = {}
    for tid, rows in acc.items():
        rows.sort()
        frames = np.array([f for f, _ in rows])
        pts = np.array([p for _, p in rows], dtype=float)
        # split at frame gaps so every piece is continuous
        cuts = np.flatnonzero(np.diff(frames) != 1) + 1
        for k, (fr, pt) in enumerate(zip(np.split(frames, cuts), np.split(pts, cuts))):
            gt[tid * 1000 + k] = (fr, pt)
    n_frames = max((int(f[-1]) for f, _ in gt.values()), default=1)
    return Scene(SceneConfig(bounds=bounds.as_tuple(), n_frames=n_frames), gt, [])


# -- commands -----------------------------------------------------------------------

def cmd_simulate(args, config):
    scene_cfg = config.scene if args.seed is None else replace(config.scene, seed=args.seed)
    scene = generate(scene_cfg)
    gt, det = motio.scene_records(scene)
    motio.save_mot(args.out_gt, gt)
    motio.save_mot(args.out_det, det)
    print(f"scene {scene_cfg.name or '-'} seed={scene_cfg.seed} frames={scene_cfg.n_frames} "
          f"agents={len(scene.ground_truth)} gt_points={len(gt)} detections={len(det)} "
          f"clutter={scene.clutter_count}")
    return EXIT_OK


def cmd_train(args, config):
    seed = 0 if args.seed is None else args.seed
    if not os.path.isdir(args.data):
        raise FileNotFoundError(f"data directory not found: {args.data}")
    files = sorted(glob.glob(os.path.join(args.data, "*.txt")))
    if args.fine_tune:
        if not os.path.exists(args.fine_tune):
            raise FileNotFoundError(f"checkpoint not found: {args.fine_tune}")
        model = Predictor.load(args.fine_tune)
        if model.horizon != args.horizon:
            raise ValueError(f"{args.fine_tune} holds a {model.horizon}-horizon model")
    else:
        pcfg = config.predictor
        if args.hidden is not None:
            pcfg = replace(pcfg, hidden_dim=args.hidden)
        model = Predictor(pcfg, args.horizon, seed=seed)
    pcfg = model.config
    scenes = []
    for path in files:
        recs = [r for r in motio.read_mot(path) if r.id >= 0]
        if not recs:
            log.info("skipping %s: no identified records", path)
            continue
        bounds = motio.resolve_bounds(config.bounds, np.array([r.centroid for r in recs]))
        scenes.append(gt_scene(recs, bounds))
    samples = make_training_set(scenes, model.obs_len, model.pred_len, radius=pcfg.radius,
                                stride=args.stride)
    if not samples:
        raise ValueError(f"no training windows of length {model.obs_len + model.pred_len} in {args.data}")
    dataset = Dataset.from_samples(samples)
    epochs = pcfg.epochs if args.epochs is None else args.epochs
    if args.fine_tune:
        curve = fine_tune(model, dataset, epochs=epochs, lr=args.lr, batch_size=args.batch_size, seed=seed)
    else:
        curve = train(model, dataset, epochs=epochs, lr=args.lr, batch_size=args.batch_size, seed=seed)
    model.save(args.out, {"windows": len(dataset), "epochs": epochs, "seed": seed})
    curve_path = args.loss_curve or os.path.splitext(args.out)[0] + ".loss.txt"
    with open(curve_path, "w") as fh:
        fh.write("".join(f"{i} {v!r}\n" for i, v in enumerate(curve)))
    print(f"{len(dataset)} windows, loss {curve[0]:.6g} -> {curve[-1]:.6g}")
    if epochs > 0 and args.lr != 0 and not curve[-1] < curve[0]:
        raise CheckFailed(f"final loss {curve[-1]:.6g} is not below initial {curve[0]:.6g}")
    return EXIT_OK


def cmd_predict(args, config):
    if not os.path.exists(args.ckpt):
        raise FileNotFoundError(f"checkpoint not found: {args.ckpt}")
    model = Predictor.load(args.ckpt)
    recs = [r for r in motio.read_mot(args.tracks) if r.id >= 0]
    if not recs:
        raise ValueError(f"{args.tracks}: no identified records")
    bounds = motio.resolve_bounds(config.bounds, np.array([r.centroid for r in recs]))
    by_id = {}
    for r in sorted(recs, key=lambda r: (r.id, r.frame)):
        by_id.setdefault(r.id, []).append(r)
    end = {tid: rs[-1].frame for tid, rs in by_id.items()}
    pos = {tid: bounds.normalize(np.array([r.centroid for r in rs])) for tid, rs in by_id.items()}
    ids = sorted(by_id)
    hist = [pos[i] for i in ids]
    neigh = [[pos[j] for j in ids if j != i and end[j] == end[i]
              and np.linalg.norm(pos[j][-1] - pos[i][-1]) <= model.config.radius] for i in ids]
    out = []
    for i, res in zip(ids, model.predict_batch(hist, neigh)):
        for s, p in enumerate(bounds.denormalize(res.positions), start=1):
            out.append(motio.MotRecord.from_centroid(end[i] + s, i, *p))
    motio.save_mot(args.out, out)
    print(f"predicted {model.pred_len} frames for {len(ids)} tracks")
    return EXIT_OK


def cmd_track(args, config):
    short, long = load_models(args.short, args.long)
    tcfg = config.tracker if args.mode is None else replace(config.tracker, mode=args.mode)
    tcfg = replace(tcfg, predictor=long.config)
    recs = motio.read_mot(args.det)
    frames = motio.detections_by_frame(recs)
    points = np.concatenate([p for _, p, _ in frames]) if frames else np.zeros((0, 2))
    if not len(points):
        raise ValueError(f"{args.det}: no detections")
    bounds = motio.resolve_bounds(config.bounds, points)
    tracks = run(frames, tcfg, short, long, bounds)
    motio.save_mot(args.out, motio.track_records(tracks))
    print(f"mode {tcfg.mode}: {len(tracks)} tracks over {len(frames)} frames")
    return EXIT_OK


def cmd_evaluate(args, config):
    gt = motio.read_mot(args.gt)
    res = motio.read_mot(args.res)
    if not gt:
        raise ValueError(f"{args.gt}: empty ground truth")
    last_gt = max(r.frame for r in gt)
    last_res = max((r.frame for r in res), default=0)
    if last_res > last_gt:
        raise ValueError(f"result runs to frame {last_res} but ground truth ends at {last_gt}")
    threshold = config.eval_threshold if args.threshold is None else args.threshold
    if threshold <= 0:
        raise ValueError("threshold must be > 0")
    report = evaluate_tracking(records_to_frames(gt), records_to_frames(res), threshold)
    print(report.key_values() if args.format == "kv" else report.summary())
    return EXIT_OK


def cmd_ablate(args, config):
    if args.suite != "standard":
        raise ValueError(f"unknown suite {args.suite!r}")
    short, long = load_models(args.short, args.long)
    tcfg = replace(config.tracker, predictor=long.config)
    reports = run_ablation(standard_benchmark(), tcfg, short, long, threshold=config.eval_threshold)
    table = ablation_table(reports)
    print(table)
    if args.out:
        os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)
        with open(args.out, "w") as fh:
            json.dump({m: r.as_dict() for m, r in reports.items()}, fh, indent=2, sort_keys=True)
    if args.assert_ordering:
        bad = ordering_failures(reports, args.min_gain)
        if bad:
            raise CheckFailed("; ".join(bad))
        print("ordering holds")
    return EXIT_OK


# -- argument parsing ---------------------------------------------------------------

def build_parser():
    p = Parser(prog="predtrack", description="Tracking by trajectory prediction.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=Parser)

    def common(sp):
        sp.add_argument("--config", help=f"YAML config file (default: ${motio.CONFIG_ENV})")
        sp.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config value; repeatable")
        sp.add_argument("--lax", action="store_true", help="warn about unknown config keys instead of failing")
        sp.add_argument("--seed", type=int, help="random seed (scene seed for simulate, init and "
                        "shuffle seed for train; other commands are deterministic and ignore it)")

    sp = sub.add_parser("simulate", help="generate a synthetic scene")
    common(sp)
    sp.add_argument("--out-gt", required=True, help="ground-truth MOTChallenge file")
    sp.add_argument("--out-det", required=True, help="detections MOTChallenge file")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("train", help="train or fine-tune a motion model")
    common(sp)
    sp.add_argument("--data", required=True, help="directory of ground-truth MOTChallenge .txt files")
    sp.add_argument("--horizon", required=True, choices=["short", "long"])
    sp.add_argument("--out", required=True, help="checkpoint to write")
    sp.add_argument("--hidden", type=int, help="hidden size (new models only)")
    sp.add_argument("--lr", type=float, help="learning rate")
    sp.add_argument("--epochs", type=int, help="number of epochs")
    sp.add_argument("--batch-size", type=int, help="minibatch size")
    sp.add_argument("--stride", type=int, default=1, help="window stride in frames")
    sp.add_argument("--fine-tune", metavar="CKPT", help="continue training this checkpoint")
    sp.add_argument("--loss-curve", help="loss curve file (default: next to the checkpoint)")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("predict", help="predict the future of every track in a file")
    common(sp)
    sp.add_argument("--ckpt", required=True, help="model checkpoint")
    sp.add_argument("--tracks", required=True, help="MOTChallenge track file")
    sp.add_argument("--out", required=True, help="predicted positions, MOTChallenge format")
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("track", help="track a detection file")
    common(sp)
    sp.add_argument("--det", required=True, help="detections, MOTChallenge format")
    sp.add_argument("--short", required=True, help="short-horizon checkpoint")
    sp.add_argument("--long", required=True, help="long-horizon checkpoint")
    sp.add_argument("--out", required=True, help="tracks, MOTChallenge format")
    sp.add_argument("--mode", choices=sorted(MODES), help="merge cues: T1 none, T2 SD, T3 CD, T4 both")
    sp.set_defaults(func=cmd_track)

    sp = sub.add_parser("evaluate", help="CLEAR-MOT metrics of a result file")
    common(sp)
    sp.add_argument("--gt", required=True, help="ground truth, MOTChallenge format")
    sp.add_argument("--res", required=True, help="tracker output, MOTChallenge format")
    sp.add_argument("--threshold", type=float, help="match distance in scene units")
    sp.add_argument("--format", choices=["table", "kv"], default="table", help="output layout")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("ablate", help="run T1-T4 on a benchmark suite")
    common(sp)
    sp.add_argument("--suite", default="standard", help="benchmark suite (only 'standard')")
    sp.add_argument("--short", required=True, help="short-horizon checkpoint")
    sp.add_argument("--long", required=True, help="long-horizon checkpoint")
    sp.add_argument("--out", help="write the per-mode metrics as JSON")
    sp.add_argument("--assert-ordering", action="store_true",
                    help="exit 3 unless T4 beats T1 on MOTA, IDS and Frag")
    sp.add_argument("--min-gain", type=float, default=5.0, help="MOTA points T4 must gain over T1")
    sp.set_defaults(func=cmd_ablate)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = motio.load_config(args.config, args.set, strict=not args.lax)
        return args.func(args, config)
    except CheckFailed as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return EXIT_CHECK
    except (motio.ParseError, motio.ConfigError, FileNotFoundError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
