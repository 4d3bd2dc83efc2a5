"""JSON interchange formats shared by the CLI stages.

Boxes serialize as [x1, y1, x2, y2]. Scene files carry one image each:
{"id": ..., "image": {"w": ..., "h": ...}, "persons": [{"id", "head", "body"}]}.
Detection files cover an image set: {"images": [{"id", "detections": [...]}]}
with per-detection {"head", "body", "s_h", "s_b"} plus optional provenance.
Everything is dumped with sorted keys so identical data means identical bytes.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional, Sequence

from .geom import Box
from .nms import DetectionPair
from .rpn import GtPair
from .simscene import DetectorNoise, SceneConfig


@dataclass(frozen=True)
class Scene:
    """One annotated image: its size and the ground-truth person pairs."""

    image_id: str
    width: float
    height: float
    persons: list[GtPair]


@dataclass(frozen=True)
class DetectionImage:
    """All detection pairs reported for one image."""

    image_id: str
    pairs: list[DetectionPair]


def dump_json(obj: Any, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(obj, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def load_json(path: str | Path) -> Any:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def scene_to_dict(scene: Scene) -> dict:
    return {
        "id": scene.image_id,
        "image": {"w": scene.width, "h": scene.height},
        "persons": [
            {"id": p.person_id, "head": p.head.to_list(), "body": p.body.to_list()}
            for p in scene.persons
        ],
    }


def scene_from_dict(data: dict) -> Scene:
    persons = [
        GtPair(
            head=Box.from_list(p["head"]),
            body=Box.from_list(p["body"]),
            person_id=int(p["id"]),
        )
        for p in data["persons"]
    ]
    return Scene(
        image_id=str(data["id"]),
        width=float(data["image"]["w"]),
        height=float(data["image"]["h"]),
        persons=persons,
    )


def save_scene(scene: Scene, path: str | Path) -> None:
    dump_json(scene_to_dict(scene), path)


def load_scene(path: str | Path) -> Scene:
    return scene_from_dict(load_json(path))


def save_manifest(
    out_dir: str | Path,
    scene_files: Sequence[str],
    config: SceneConfig,
    n_scenes: int,
) -> Path:
    manifest = {
        "n_scenes": n_scenes,
        "scene_config": dataclasses.asdict(config),
        "scenes": list(scene_files),
    }
    path = Path(out_dir) / "manifest.json"
    dump_json(manifest, path)
    return path


def load_scenes(path: str | Path) -> list[Scene]:
    """Load scenes from a manifest (paths resolved next to it) or from a
    single scene file."""
    path = Path(path)
    data = load_json(path)
    if "scenes" in data:
        return [load_scene(path.parent / rel) for rel in data["scenes"]]
    return [scene_from_dict(data)]


def detection_pair_to_dict(pair: DetectionPair) -> dict:
    return {
        "head": pair.head.to_list(),
        "body": pair.body.to_list(),
        "s_h": pair.head_score,
        "s_b": pair.body_score,
    }


def detection_pair_from_dict(data: dict) -> DetectionPair:
    return DetectionPair(
        head=Box.from_list(data["head"]),
        body=Box.from_list(data["body"]),
        head_score=float(data["s_h"]),
        body_score=float(data["s_b"]),
    )


def save_detections(
    images: Sequence[DetectionImage],
    path: str | Path,
    header: Optional[dict] = None,
    provenance: Optional[dict[str, list[dict]]] = None,
) -> None:
    """Write a detection file; provenance maps image id to one extra dict per
    pair (merged into the pair records)."""
    doc: dict[str, Any] = {}
    if header:
        doc.update(header)
    image_records = []
    for img in images:
        records = [detection_pair_to_dict(p) for p in img.pairs]
        if provenance and img.image_id in provenance:
            extras = provenance[img.image_id]
            for rec, extra in zip(records, extras):
                rec.update(extra)
        image_records.append({"id": img.image_id, "detections": records})
    doc["images"] = image_records
    dump_json(doc, path)


def load_detections(path: str | Path) -> list[DetectionImage]:
    data = load_json(path)
    return [
        DetectionImage(
            image_id=str(img["id"]),
            pairs=[detection_pair_from_dict(d) for d in img["detections"]],
        )
        for img in data["images"]
    ]


def _range_pair(value: Sequence[float], name: str) -> tuple[float, float]:
    if len(value) != 2:
        raise ValueError(f"{name} must be a [lo, hi] pair, got {value!r}")
    return float(value[0]), float(value[1])


def scene_config_from_dict(data: dict) -> SceneConfig:
    known = {f.name for f in dataclasses.fields(SceneConfig)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown scene config fields: {sorted(unknown)}")
    kwargs = dict(data)
    for name in ("body_size_range", "body_aspect_range", "head_ratio_range"):
        if name in kwargs:
            kwargs[name] = _range_pair(kwargs[name], name)
    return SceneConfig(**kwargs)


def detector_noise_from_dict(data: dict) -> DetectorNoise:
    known = {f.name for f in dataclasses.fields(DetectorNoise)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown detector noise fields: {sorted(unknown)}")
    return DetectorNoise(**data)


def load_scene_config(path: str | Path) -> SceneConfig:
    return scene_config_from_dict(load_json(path))


def load_detector_noise(path: str | Path) -> DetectorNoise:
    return detector_noise_from_dict(load_json(path))
