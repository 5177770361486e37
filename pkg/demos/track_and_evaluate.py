"""Track one benchmark scene with the shipped models and score the result.

    python demos/track_and_evaluate.py [scene name] [--mode T1..T4]
"""

import argparse
import os

from predtrack.metrics import evaluate_tracking, tracks_to_frames
from predtrack.predictor import Predictor
from predtrack.simulator import generate, standard_benchmark
from predtrack.tracker import MODES, TrackerConfig, run

MODELS = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "models")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("scene", nargs="?", default="occlusion-8", choices=[c.name for c in standard_benchmark()])
    ap.add_argument("--mode", default="T4", choices=sorted(MODES))
    args = ap.parse_args()

    short = Predictor.load(os.path.join(MODELS, "short.json"))
    long = Predictor.load(os.path.join(MODELS, "long.json"))
    scene = generate(next(c for c in standard_benchmark() if c.name == args.scene))
    config = TrackerConfig(mode=args.mode, predictor=long.config)
    tracks = run([(f, d) for f, d in enumerate(scene.detections, start=1)], config, short, long, scene.bounds)

    hyp = tracks_to_frames({k: (t.frames, t.positions) for k, t in tracks.items()})
    report = evaluate_tracking(tracks_to_frames(scene.ground_truth), hyp, 1.0)
    print(f"{args.scene}, mode {args.mode}: {len(tracks)} tracks for {len(scene.ground_truth)} agents")
    print(report.summary())

    # per-agent story: which track ids covered each target, in order
    for agent in sorted(scene.ground_truth):
        ids = []
        for f, g, h, _ in sorted(report.matches):
            if g == agent and (not ids or ids[-1] != h):
                ids.append(h)
        print(f"  agent {agent}: tracks {ids}")


if __name__ == "__main__":
    main()
