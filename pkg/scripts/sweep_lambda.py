#!/usr/bin/env python3
"""Body-score weight sweep for joint NMS against the body-only baseline.

Generates the shipped crowded scenes, simulates the noisy detector once, then
evaluates body detection under original body-only NMS and joint NMS across a
range of blend weights. Prints an FPPI-at-recall table plus the log-average
miss rate per variant and writes one curve CSV per variant (plottable with
`pairdet plot`).

Usage: python scripts/sweep_lambda.py [--n-scenes N] [--seed S] [--out DIR]
"""

import argparse
import dataclasses
import sys
from pathlib import Path

from pairdet import fileio
from pairdet.metrics import curve_to_csv, fppi_at_recall, fppi_mr_curve, log_average_mr
from pairdet.nms import NmsConfig, joint_nms
from pairdet.simscene import generate_scene, simulate_detections

REPO_ROOT = Path(__file__).resolve().parent.parent
CONFIGS = REPO_ROOT / "configs"
RECALLS = (0.2, 0.4, 0.6, 0.8)


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-scenes", type=int, default=200)
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--lambdas", type=float, nargs="+", default=[0.5, 0.6, 0.7, 0.8, 0.9])
    ap.add_argument("--omega", type=float, default=0.5, help="IoU threshold for every variant")
    ap.add_argument("--out", default="out/sweep", help="directory for curve CSVs")
    args = ap.parse_args()

    scene_cfg = dataclasses.replace(
        fileio.load_scene_config(CONFIGS / "crowded_scene.json"), seed=args.seed
    )
    noise = fileio.load_detector_noise(CONFIGS / "detector_noise.json")
    scenes = [generate_scene(scene_cfg, i) for i in range(args.n_scenes)]
    detections = [
        simulate_detections(s, noise, scene_cfg.width, scene_cfg.height, i)
        for i, s in enumerate(scenes)
    ]
    image_gts = [[p.body for p in s] for s in scenes]

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    def evaluate(name: str, cfg: NmsConfig):
        image_dets = []
        for dets in detections:
            kept = joint_nms(dets, cfg)
            image_dets.append(([dets[k].body for k in kept],
                               [dets[k].body_score for k in kept]))
        curve = fppi_mr_curve(image_dets, image_gts)
        (out_dir / f"curve_{name}.csv").write_text(curve_to_csv(curve), encoding="utf-8")
        return fppi_at_recall(curve, RECALLS), log_average_mr(curve)

    header = "variant      " + "".join(f"  fppi@{r:.1f}" for r in RECALLS) + "      mr2"
    print(header)
    print("-" * len(header))

    def show(name, fppi, mr):
        cells = "".join(f"  {fppi[r]:8.4f}" for r in RECALLS)
        print(f"{name:<13}{cells}  {mr:.4f}")

    fppi, mr = evaluate("body_only", NmsConfig(omega_h=1.0, omega_b=args.omega, lam=1.0))
    show("body-only", fppi, mr)
    for lam in args.lambdas:
        fppi, mr = evaluate(f"joint_{lam:g}", NmsConfig(args.omega, args.omega, lam))
        show(f"joint l={lam:g}", fppi, mr)
    print(f"\ncurves written to {out_dir}/ (render with: pairdet plot {out_dir}/curve_*.csv --out sweep.svg)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
