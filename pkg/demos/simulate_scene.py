"""Generate one benchmark scene and show what the detector corruption does to it.

    python demos/simulate_scene.py [scene name] [--out DIR]

With ``--out`` the ground truth and detections are written as MOTChallenge files.
"""

import argparse
import os

import numpy as np

from predtrack.motio import save_mot, scene_records
from predtrack.simulator import generate, standard_benchmark


def main():
    names = [c.name for c in standard_benchmark()]
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("scene", nargs="?", default="crossing", choices=names)
    ap.add_argument("--out")
    args = ap.parse_args()

    cfg = next(c for c in standard_benchmark() if c.name == args.scene)
    scene = generate(cfg)
    n_true = sum(len(f) for f, _ in scene.ground_truth.values())
    n_det = sum(len(d) for d in scene.detections)
    steps = np.concatenate([np.linalg.norm(np.diff(p, axis=0), axis=1) for _, p in scene.ground_truth.values()])
    print(f"{cfg.name}: {len(scene.ground_truth)} agents over {cfg.n_frames} frames in a "
          f"{cfg.bounds[2] - cfg.bounds[0]:.0f} m arena")
    print(f"  {n_true} true positions, {n_det} detections")
    print(f"  miss rate {cfg.p_miss}, jitter {cfg.jitter} m, clutter {cfg.clutter_rate}/frame, "
          f"split rate {cfg.split_rate}")
    print(f"  walking speed: median {np.median(steps):.3f} m/frame, max {steps.max():.3f}")
    for agent, first, duration in cfg.occlusions:
        print(f"  agent {agent} occluded for frames {first}..{first + duration - 1}")

    if args.out:
        os.makedirs(args.out, exist_ok=True)
        gt, det = scene_records(scene)
        save_mot(os.path.join(args.out, "gt.txt"), gt)
        save_mot(os.path.join(args.out, "det.txt"), det)
        print(f"wrote {args.out}/gt.txt and {args.out}/det.txt")


if __name__ == "__main__":
    main()
