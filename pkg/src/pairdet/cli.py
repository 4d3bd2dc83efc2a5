"""Command-line front end wiring the pipeline stages together through files.

Subcommands: gen, simulate, assign, crossover-stats, nms, eval, plot,
experiment. Every command is deterministic given its flags and seeds; all
randomness enters through config seeds or explicit --seed overrides.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import fileio
from .crossover import count_qualified, crossover, label_pairs
from .fileio import DetectionImage, Scene
from .geom import make_anchor_grid
from .metrics import ap50, curve_to_csv, fppi_mr_curve, summary_dict
from .nms import NmsConfig, joint_nms, joint_score
from .rpn import assign_principal
from .simscene import (
    DetectorNoise,
    SceneConfig,
    SceneGenerationError,
    generate_scene,
    simulate_branch_proposals,
    simulate_detections,
)

SVG_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


class CliError(Exception):
    """User-facing failure: message printed to stderr, exit code 1."""


def _load(loader, path):
    try:
        return loader(path)
    except json.JSONDecodeError as e:
        raise CliError(f"{path}:{e.lineno}:{e.colno}: invalid JSON: {e.msg}") from e
    except FileNotFoundError as e:
        raise CliError(f"{path}: no such file") from e
    except (ValueError, KeyError, TypeError) as e:
        raise CliError(f"{path}: {e}") from e


def _maybe_reseed(config, seed: Optional[int]):
    return config if seed is None else dataclasses.replace(config, seed=seed)


# ---------------------------------------------------------------------------
# stage implementations (shared by the subcommands and `experiment`)


def run_gen(cfg: SceneConfig, n_scenes: int, out_dir: Path) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    names = []
    for i in range(n_scenes):
        persons = generate_scene(cfg, i)
        scene = Scene(f"scene_{i:04d}", cfg.width, cfg.height, persons)
        name = f"scene_{i:04d}.json"
        fileio.save_scene(scene, out_dir / name)
        names.append(name)
    return fileio.save_manifest(out_dir, names, cfg, n_scenes)


def run_simulate(scenes: Sequence[Scene], noise: DetectorNoise, out_path: Path) -> None:
    images = [
        DetectionImage(
            s.image_id,
            simulate_detections(s.persons, noise, s.width, s.height, i),
        )
        for i, s in enumerate(scenes)
    ]
    fileio.save_detections(images, out_path)


def run_nms(images: Sequence[DetectionImage], cfg: NmsConfig, out_path: Path) -> None:
    kept_images = []
    provenance: dict[str, list[dict]] = {}
    for img in images:
        kept = joint_nms(img.pairs, cfg)
        kept_images.append(DetectionImage(img.image_id, [img.pairs[k] for k in kept]))
        provenance[img.image_id] = [
            {"kept_rank": rank, "joint_score": joint_score(img.pairs[k], cfg.lam)}
            for rank, k in enumerate(kept)
        ]
    header = {
        "nms": {"lambda": cfg.lam, "omega_b": cfg.omega_b, "omega_h": cfg.omega_h}
    }
    fileio.save_detections(kept_images, out_path, header=header, provenance=provenance)


def run_eval(
    images: Sequence[DetectionImage],
    scenes: Sequence[Scene],
    part: str,
    summary_path: Path,
    curve_path: Path,
) -> dict:
    det_ids = {img.image_id for img in images}
    scene_ids = {s.image_id for s in scenes}
    if det_ids != scene_ids:
        only_det = sorted(det_ids - scene_ids)
        only_scene = sorted(scene_ids - det_ids)
        raise CliError(
            "image ids do not match: "
            f"only in detections: {only_det}; only in scenes: {only_scene}"
        )
    by_id = {img.image_id: img for img in images}
    image_dets = []
    image_gts = []
    for scene in scenes:
        pairs = by_id[scene.image_id].pairs
        image_dets.append(
            ([p.part_box(part) for p in pairs], [p.part_score(part) for p in pairs])
        )
        image_gts.append([person.part(part) for person in scene.persons])
    try:
        curve = fppi_mr_curve(image_dets, image_gts)
        ap = ap50(image_dets, image_gts)
    except ValueError as e:
        raise CliError(str(e)) from e
    summary = summary_dict(curve, ap)
    fileio.dump_json(summary, summary_path)
    curve_path.write_text(curve_to_csv(curve), encoding="utf-8")
    return summary


def run_crossover_stats(
    scenes: Sequence[Scene], noise: DetectorNoise, out_path: Path
) -> list[tuple[str, int, int, int]]:
    rows: list[tuple[str, int, int, int]] = []
    for i, scene in enumerate(scenes):
        hb = simulate_branch_proposals(scene.persons, noise, "head", scene.width, scene.height, i)
        bh = simulate_branch_proposals(scene.persons, noise, "body", scene.width, scene.height, i)
        hb_pos = [p for p, lab in zip(hb, label_pairs(hb, scene.persons)) if lab.positive]
        bh_pos = [p for p, lab in zip(bh, label_pairs(bh, scene.persons)) if lab.positive]
        before = count_qualified(hb_pos, scene.persons)
        after = count_qualified(crossover(hb_pos, bh_pos), scene.persons)
        rows.append((scene.image_id, len(hb_pos), before, after))
    lines = ["image_id,n_positive_hb,n_qualified_before,n_qualified_after"]
    for image_id, n_pos, before, after in rows:
        lines.append(f"{image_id},{n_pos},{before},{after}")
    if rows:
        n = len(rows)
        lines.append(
            "mean,{!r},{!r},{!r}".format(
                sum(r[1] for r in rows) / n,
                sum(r[2] for r in rows) / n,
                sum(r[3] for r in rows) / n,
            )
        )
    out_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return rows


def read_curve_csv(path: Path) -> list[tuple[float, float]]:
    """(fppi, miss_rate) rows of a curve CSV; fails loudly on malformed cells."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CliError(f"{path}: empty curve file") from None
        try:
            fppi_col = header.index("fppi")
            mr_col = header.index("miss_rate")
        except ValueError:
            raise CliError(f"{path}: missing fppi/miss_rate columns in {header}") from None
        points = []
        for rownum, row in enumerate(reader, start=2):
            try:
                points.append((float(row[fppi_col]), float(row[mr_col])))
            except (ValueError, IndexError):
                raise CliError(f"{path}: row {rownum}: non-numeric or short row {row!r}") from None
    if not points:
        raise CliError(f"{path}: curve has no data rows")
    return points


def render_curves_svg(
    curves: Sequence[tuple[str, Sequence[tuple[float, float]]]],
    width: int = 720,
    height: int = 540,
) -> str:
    """Self-contained SVG of miss rate vs FPPI on log-log axes, x spanning
    1e-2..1e0. Points outside the viewport are clamped onto its edge."""
    ml, mr_, mt, mb = 80, 24, 24, 56
    plot_w = width - ml - mr_
    plot_h = height - mt - mb
    x_lo, x_hi = -2.0, 0.0  # log10 fppi

    positive_mrs = [m for _, pts in curves for _, m in pts if m > 0]
    if positive_mrs:
        y_lo = math.floor(math.log10(min(positive_mrs)))
        y_lo = max(min(y_lo, -1.0), -6.0)
    else:
        y_lo = -2.0
    y_hi = 0.0

    def sx(fppi: float) -> float:
        lx = math.log10(max(fppi, 10.0 ** x_lo))
        lx = min(max(lx, x_lo), x_hi)
        return ml + (lx - x_lo) / (x_hi - x_lo) * plot_w

    def sy(mr: float) -> float:
        ly = math.log10(max(mr, 10.0 ** y_lo))
        ly = min(max(ly, y_lo), y_hi)
        return mt + (y_hi - ly) / (y_hi - y_lo) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{ml}" y="{mt}" width="{plot_w}" height="{plot_h}" '
        'fill="none" stroke="#444444" stroke-width="1"/>',
    ]
    # decade grid + tick labels
    k = int(x_lo)
    while k <= int(x_hi):
        x = sx(10.0 ** k)
        parts.append(
            f'<line x1="{x:.2f}" y1="{mt}" x2="{x:.2f}" y2="{mt + plot_h}" '
            'stroke="#dddddd" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{x:.2f}" y="{mt + plot_h + 20}" font-family="sans-serif" '
            f'font-size="13" text-anchor="middle">1e{k}</text>'
        )
        k += 1
    k = int(y_lo)
    while k <= int(y_hi):
        y = sy(10.0 ** k)
        parts.append(
            f'<line x1="{ml}" y1="{y:.2f}" x2="{ml + plot_w}" y2="{y:.2f}" '
            'stroke="#dddddd" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{ml - 8}" y="{y + 4:.2f}" font-family="sans-serif" '
            f'font-size="13" text-anchor="end">1e{k}</text>'
        )
        k += 1
    parts.append(
        f'<text x="{ml + plot_w / 2:.2f}" y="{height - 12}" font-family="sans-serif" '
        'font-size="14" text-anchor="middle">false positives per image</text>'
    )
    parts.append(
        f'<text x="20" y="{mt + plot_h / 2:.2f}" font-family="sans-serif" font-size="14" '
        f'text-anchor="middle" transform="rotate(-90 20 {mt + plot_h / 2:.2f})">miss rate</text>'
    )
    for idx, (label, pts) in enumerate(curves):
        color = SVG_PALETTE[idx % len(SVG_PALETTE)]
        coords = " ".join(f"{sx(f):.2f},{sy(m):.2f}" for f, m in pts)
        parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="2"/>'
        )
        ly = mt + 16 + 18 * idx
        parts.append(
            f'<line x1="{ml + plot_w - 150}" y1="{ly - 4}" x2="{ml + plot_w - 120}" '
            f'y2="{ly - 4}" stroke="{color}" stroke-width="2"/>'
        )
        parts.append(
            f'<text x="{ml + plot_w - 114}" y="{ly}" font-family="sans-serif" '
            f'font-size="13">{label}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# ---------------------------------------------------------------------------
# subcommands


def _nms_config(variant: str, omega: Optional[float], omega_h: Optional[float],
                omega_b: Optional[float], lam: Optional[float]) -> NmsConfig:
    """Canonical suppression parameters for each variant. The single-part
    baselines are the joint algorithm with the other threshold disabled, which
    makes the reduction identity hold file-for-file."""
    if variant == "joint":
        if omega_h is None or omega_b is None or lam is None:
            raise CliError("variant 'joint' needs --omega-h, --omega-b and --lam")
        return NmsConfig(omega_h=omega_h, omega_b=omega_b, lam=lam)
    if omega is None:
        raise CliError(f"variant {variant!r} needs --omega")
    if variant == "original-body":
        return NmsConfig(omega_h=1.0, omega_b=omega, lam=1.0)
    if variant == "original-head":
        return NmsConfig(omega_h=omega, omega_b=1.0, lam=0.0)
    raise CliError(f"unknown nms variant {variant!r}")


def cmd_gen(args) -> None:
    cfg = _maybe_reseed(_load(fileio.load_scene_config, args.scene_config), args.seed)
    run_gen(cfg, args.n_scenes, Path(args.out))


def cmd_simulate(args) -> None:
    scenes = _load(fileio.load_scenes, args.scenes)
    noise = _maybe_reseed(_load(fileio.load_detector_noise, args.noise_config), args.seed)
    run_simulate(scenes, noise, Path(args.out))


def cmd_assign(args) -> None:
    scene = _load(fileio.load_scene, args.scene)
    grid = make_anchor_grid(scene.width, scene.height, args.strides, args.scales, args.ratios)
    assignments = assign_principal(
        [a.box for a in grid], scene.persons, args.principal, args.pos_iou, args.neg_iou
    )
    records = [
        {
            "anchor_index": a.anchor_index,
            "label": a.label,
            "person_id": a.matched_gt,
            "head_target": a.head_target.to_list() if a.head_target else None,
            "body_target": a.body_target.to_list() if a.body_target else None,
        }
        for a in assignments
    ]
    fileio.dump_json(
        {"scene": scene.image_id, "principal": args.principal, "assignments": records},
        args.out,
    )


def cmd_crossover_stats(args) -> None:
    scenes = _load(fileio.load_scenes, args.scenes)
    noise = _maybe_reseed(_load(fileio.load_detector_noise, args.noise_config), args.seed)
    run_crossover_stats(scenes, noise, Path(args.out))


def cmd_nms(args) -> None:
    images = _load(fileio.load_detections, args.detections)
    cfg = _nms_config(args.variant, args.omega, args.omega_h, args.omega_b, args.lam)
    run_nms(images, cfg, Path(args.out))


def cmd_eval(args) -> None:
    images = _load(fileio.load_detections, args.detections)
    scenes = _load(fileio.load_scenes, args.scenes)
    run_eval(images, scenes, args.part, Path(args.out_summary), Path(args.out_curve))


def cmd_plot(args) -> None:
    curves = [(Path(p).stem, read_curve_csv(Path(p))) for p in args.curves]
    Path(args.out).write_text(render_curves_svg(curves), encoding="utf-8")


def cmd_experiment(args) -> None:
    spec = _load(fileio.load_json, args.spec)
    required = {"scene_config", "noise_config", "n_scenes", "seed", "nms", "out_dir"}
    missing = required - set(spec)
    if missing:
        raise CliError(f"{args.spec}: experiment spec missing fields {sorted(missing)}")
    cfg = _maybe_reseed(_load(fileio.load_scene_config, spec["scene_config"]), spec["seed"])
    noise = _maybe_reseed(_load(fileio.load_detector_noise, spec["noise_config"]), spec["seed"])
    nms_spec = dict(spec["nms"])
    cfg_nms = _nms_config(
        nms_spec.pop("variant", "joint"),
        nms_spec.pop("omega", None),
        nms_spec.pop("omega_h", None),
        nms_spec.pop("omega_b", None),
        nms_spec.pop("lambda", None),
    )
    if nms_spec:
        raise CliError(f"{args.spec}: unknown nms fields {sorted(nms_spec)}")
    part = spec.get("part", "body")
    out_dir = Path(spec["out_dir"])
    scenes_dir = out_dir / "scenes"
    manifest = run_gen(cfg, spec["n_scenes"], scenes_dir)
    scenes = fileio.load_scenes(manifest)
    raw_path = out_dir / "detections.json"
    run_simulate(scenes, noise, raw_path)
    kept_path = out_dir / "detections_nms.json"
    run_nms(fileio.load_detections(raw_path), cfg_nms, kept_path)
    summary = run_eval(
        fileio.load_detections(kept_path),
        scenes,
        part,
        out_dir / "summary.json",
        out_dir / "curve.csv",
    )
    # paths relative to out_dir keep the report byte-identical across reruns
    artifacts = {
        "scenes": str(manifest.relative_to(out_dir)),
        "detections": raw_path.name,
        "detections_nms": kept_path.name,
        "summary": "summary.json",
        "curve": "curve.csv",
    }
    if spec.get("crossover", False):
        stats_path = out_dir / "crossover_stats.csv"
        run_crossover_stats(scenes, noise, stats_path)
        artifacts["crossover_stats"] = stats_path.name
    fileio.dump_json({"artifacts": artifacts, "summary": summary}, out_dir / "report.json")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pairdet",
        description="Paired head/body detection pipeline over synthetic crowded scenes",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate deterministic scene files plus a manifest")
    p.add_argument("--scene-config", required=True, help="scene config JSON path")
    p.add_argument("--n-scenes", type=int, required=True, help="number of scenes to write")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("simulate", help="run the noisy detector over scenes")
    p.add_argument("--scenes", required=True, help="scene manifest or single scene file")
    p.add_argument("--noise-config", required=True, help="detector noise JSON path")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", required=True, help="output detections JSON path")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("assign", help="dump paired anchor assignments for one scene")
    p.add_argument("--scene", required=True, help="single scene JSON path")
    p.add_argument("--principal", choices=["head", "body"], required=True,
                   help="part used for anchor matching")
    p.add_argument("--strides", type=float, nargs="+", default=[16.0],
                   help="grid strides in pixels")
    p.add_argument("--scales", type=float, nargs="+", default=[64.0, 128.0],
                   help="anchor scales (sqrt of area) in pixels")
    p.add_argument("--ratios", type=float, nargs="+", default=[0.5, 1.0, 2.0],
                   help="anchor aspect ratios (width/height)")
    p.add_argument("--pos-iou", type=float, default=0.7, help="positive IoU threshold")
    p.add_argument("--neg-iou", type=float, default=0.3, help="negative IoU threshold")
    p.add_argument("--out", required=True, help="output JSON path")
    p.set_defaults(func=cmd_assign)

    p = sub.add_parser("crossover-stats",
                       help="qualified-pair counts before/after crossover, as CSV")
    p.add_argument("--scenes", required=True, help="scene manifest or single scene file")
    p.add_argument("--noise-config", required=True, help="detector noise JSON path")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_crossover_stats)

    p = sub.add_parser("nms", help="suppress a detection file")
    p.add_argument("--detections", required=True, help="input detections JSON path")
    p.add_argument("--variant", choices=["joint", "original-body", "original-head"],
                   required=True, help="suppression variant")
    p.add_argument("--omega", type=float, default=None,
                   help="IoU threshold for the original-* variants")
    p.add_argument("--omega-h", type=float, default=None, help="head IoU threshold (joint)")
    p.add_argument("--omega-b", type=float, default=None, help="body IoU threshold (joint)")
    p.add_argument("--lam", type=float, default=None,
                   help="body-score weight of the blended score (joint)")
    p.add_argument("--out", required=True, help="output detections JSON path")
    p.set_defaults(func=cmd_nms)

    p = sub.add_parser("eval", help="evaluate detections against scenes")
    p.add_argument("--detections", required=True, help="detections JSON path")
    p.add_argument("--scenes", required=True, help="scene manifest or single scene file")
    p.add_argument("--part", choices=["body", "head"], default="body",
                   help="which part to evaluate")
    p.add_argument("--out-summary", required=True, help="summary JSON output path")
    p.add_argument("--out-curve", required=True, help="curve CSV output path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("plot", help="render curve CSVs as a log-log SVG plot")
    p.add_argument("curves", nargs="+", help="curve CSV paths")
    p.add_argument("--out", required=True, help="output SVG path")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("experiment", help="run an experiment spec end to end")
    p.add_argument("--spec", required=True, help="experiment spec JSON path")
    p.set_defaults(func=cmd_experiment)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (ValueError, OSError, SceneGenerationError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
