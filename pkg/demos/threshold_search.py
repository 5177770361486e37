"""Grid search over the two merge thresholds on the benchmark suite.

The tracker defaults were picked from this table: the best MOTA region is flat,
so a point in its middle was taken.

    python demos/threshold_search.py [--sd 0.02,0.025,0.03] [--cd 0.1,0.2,0.3,0.5]
"""

import argparse
import itertools
import os
from dataclasses import replace

from predtrack.cli import run_ablation
from predtrack.predictor import Predictor
from predtrack.simulator import generate, standard_benchmark
from predtrack.tracker import TrackerConfig

MODELS = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "models")


def floats(text):
    return [float(x) for x in text.split(",")]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sd", type=floats, default=[0.02, 0.025, 0.03])
    ap.add_argument("--cd", type=floats, default=[0.1, 0.2, 0.3, 0.5])
    args = ap.parse_args()

    short = Predictor.load(os.path.join(MODELS, "short.json"))
    long = Predictor.load(os.path.join(MODELS, "long.json"))
    scenes = [generate(c) for c in standard_benchmark()]
    base = TrackerConfig(predictor=long.config)
    t1 = run_ablation(scenes, base, short, long, modes=("T1",))["T1"]
    print(f"{'tau_sd':>7}{'tau_cd':>7}{'MOTA':>7}{'FP':>6}{'FN':>6}{'IDS':>6}{'Frag':>6}")
    print(f"{'T1':>14}{100 * t1.mota:>7.1f}{t1.fp:>6}{t1.fn:>6}{t1.ids:>6}{t1.frag:>6}")
    for sd, cd in itertools.product(args.sd, args.cd):
        r = run_ablation(scenes, replace(base, tau_sd=sd, tau_cd=cd), short, long, modes=("T4",))["T4"]
        print(f"{sd:>7}{cd:>7}{100 * r.mota:>7.1f}{r.fp:>6}{r.fn:>6}{r.ids:>6}{r.frag:>6}", flush=True)


if __name__ == "__main__":
    main()
