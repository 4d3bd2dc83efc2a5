#!/usr/bin/env python3
"""End-to-end pipeline check over the shipped configs.

Drives the CLI exactly as a user would (gen -> simulate -> nms -> eval ->
plot, plus crossover-stats), asserting every stage exits cleanly and the
stages compose through their files alone. Prints the final summary.

Usage: python scripts/run_pipeline.py [--out OUT_DIR] [--n-scenes N] [--seed S]
"""

import argparse
import json
import sys
from pathlib import Path

from pairdet.cli import main as pairdet_main

REPO_ROOT = Path(__file__).resolve().parent.parent
CONFIGS = REPO_ROOT / "configs"


def run(*argv: object) -> None:
    argv = [str(a) for a in argv]
    code = pairdet_main(argv)
    assert code == 0, f"stage failed ({code}): pairdet {' '.join(argv)}"


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out/pipeline", help="output directory")
    ap.add_argument("--n-scenes", type=int, default=50)
    ap.add_argument("--seed", type=int, default=42)
    args = ap.parse_args()

    out = Path(args.out)
    scenes_dir = out / "scenes"
    manifest = scenes_dir / "manifest.json"
    dets = out / "detections.json"
    kept_joint = out / "kept_joint.json"
    kept_body = out / "kept_body_only.json"

    run("gen", "--scene-config", CONFIGS / "crowded_scene.json",
        "--n-scenes", args.n_scenes, "--seed", args.seed, "--out", scenes_dir)
    run("simulate", "--scenes", manifest,
        "--noise-config", CONFIGS / "detector_noise.json", "--out", dets)
    run("nms", "--detections", dets, "--variant", "joint",
        "--omega-h", 0.5, "--omega-b", 0.5, "--lam", 0.8, "--out", kept_joint)
    run("nms", "--detections", dets, "--variant", "original-body",
        "--omega", 0.5, "--out", kept_body)

    summaries = {}
    for name, kept in (("joint", kept_joint), ("body_only", kept_body)):
        summary = out / f"summary_{name}.json"
        curve = out / f"curve_{name}.csv"
        run("eval", "--detections", kept, "--scenes", manifest,
            "--out-summary", summary, "--out-curve", curve)
        summaries[name] = json.loads(summary.read_text())

    run("plot", out / "curve_joint.csv", out / "curve_body_only.csv",
        "--out", out / "miss_rate_vs_fppi.svg")
    run("crossover-stats", "--scenes", manifest,
        "--noise-config", CONFIGS / "detector_noise.json",
        "--out", out / "crossover_stats.csv")

    print(f"pipeline complete in {out}/")
    for name, summary in summaries.items():
        print(f"  {name:>9}: mr2={summary['mr2']:.4f} ap50={summary['ap50']:.4f} "
              f"fppi@recall={summary['fppi_at_recall']}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
