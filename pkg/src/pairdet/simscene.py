"""Deterministic synthetic crowded scenes and a configurable noisy detector.

Crowding is induced by placing a chosen number of people in tightly
overlapping couples (body IoU comfortably above 0.5) and everyone else with
rejection sampling far enough apart, so the achieved crowded fraction is exact
by construction. All randomness flows through per-scene counter-based streams
derived from (seed, stream id, scene index), which makes every operation a
pure function of its config and safe to parallelize across scenes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .geom import Box, clip_box, iou
from .nms import DetectionPair
from .rpn import GtPair, PairedProposal, Part, branch_for

_SCENE_STREAM = 0
_DETECT_STREAM = 1
_BRANCH_HEAD_STREAM = 2
_BRANCH_BODY_STREAM = 3

_SCENE_ATTEMPTS = 50
_PLACE_ATTEMPTS = 300
_PARTNER_ATTEMPTS = 60

# Couple members are placed at body IoU above this, leaving headroom over the
# 0.5 crowding criterion so downstream jitter rarely flips their status.
_COUPLE_MIN_IOU = 0.65
# Distinct groups (couples, singles) stay below this against each other, well
# under the crowding criterion; only couple partners are mutually crowded.
_GROUP_MAX_IOU = 0.30


class SceneGenerationError(RuntimeError):
    """Placement failed after bounded retries (config likely infeasible)."""


@dataclass(frozen=True)
class SceneConfig:
    """Geometry of generated scenes. Sizes are pixels; crowd_intensity is the
    target fraction of people that have a partner at body IoU > 0.5."""

    width: float = 640.0
    height: float = 512.0
    n_persons: int = 12
    crowd_intensity: float = 0.6
    body_size_range: tuple[float, float] = (90.0, 150.0)  # body height
    body_aspect_range: tuple[float, float] = (0.40, 0.55)  # body width/height
    head_ratio_range: tuple[float, float] = (0.18, 0.27)  # head side/body height
    seed: int = 0

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"image size must be positive: {self.width}x{self.height}")
        if self.n_persons < 0:
            raise ValueError(f"n_persons must be >= 0, got {self.n_persons}")
        if not 0.0 <= self.crowd_intensity <= 1.0:
            raise ValueError(f"crowd_intensity must be in [0, 1], got {self.crowd_intensity}")
        for name, (lo, hi) in (
            ("body_size_range", self.body_size_range),
            ("body_aspect_range", self.body_aspect_range),
            ("head_ratio_range", self.head_ratio_range),
        ):
            if not (0.0 < lo <= hi):
                raise ValueError(f"{name} must satisfy 0 < lo <= hi, got ({lo}, {hi})")
        if self.head_ratio_range[1] > 1.0:
            raise ValueError("head_ratio_range must stay at or below 1.0")


@dataclass(frozen=True)
class DetectorNoise:
    """Knobs of the simulated detector.

    Jitters are relative standard deviations applied to box centers and
    (log) sizes. Scores are Beta-distributed with the given means and shared
    concentration; true detections score above false positives by
    construction of the means. Ghost pairs model crowd-induced duplicates:
    an extra pair that re-detects a person's head while its body drifts.
    """

    head_jitter: float = 0.04
    body_jitter: float = 0.12
    miss_prob: float = 0.03  # per person: the whole pair goes undetected
    fp_rate: float = 1.0  # Poisson mean of random false-positive pairs/image
    ghost_prob: float = 0.55
    ghost_body_jitter: float = 0.50
    head_tp_mean: float = 0.85
    body_tp_mean: float = 0.78
    head_fp_mean: float = 0.25
    body_fp_mean: float = 0.50
    ghost_head_score_mean: float = 0.85
    ghost_body_score_mean: float = 0.60
    score_conc: float = 14.0
    principal_jitter: float = 0.05  # branch-proposal simulation
    attached_jitter: float = 0.35
    seed: int = 0

    def __post_init__(self):
        for name in ("head_jitter", "body_jitter", "ghost_body_jitter",
                     "principal_jitter", "attached_jitter", "fp_rate"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("miss_prob", "ghost_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        for name in ("head_tp_mean", "body_tp_mean", "head_fp_mean", "body_fp_mean",
                     "ghost_head_score_mean", "ghost_body_score_mean"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must be in (0, 1), got {v}")
        if self.score_conc <= 0:
            raise ValueError("score_conc must be positive")


def _stream(seed: int, stream: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream, index)))


def crowded_fraction(bodies: Sequence[Box]) -> float:
    """Fraction of boxes having at least one partner with IoU > 0.5."""
    n = len(bodies)
    if n == 0:
        return 0.0
    crowded = 0
    for i in range(n):
        if any(iou(bodies[i], bodies[j]) > 0.5 for j in range(n) if j != i):
            crowded += 1
    return crowded / n


def _sample_body(rng: np.random.Generator, cfg: SceneConfig) -> Optional[Box]:
    h = rng.uniform(*cfg.body_size_range)
    w = h * rng.uniform(*cfg.body_aspect_range)
    if w > cfg.width or h > cfg.height:
        return None
    x1 = rng.uniform(0.0, cfg.width - w)
    y1 = rng.uniform(0.0, cfg.height - h)
    return Box(x1, y1, x1 + w, y1 + h)


def _sample_partner(rng: np.random.Generator, cfg: SceneConfig, base: Box) -> Optional[Box]:
    for _ in range(_PARTNER_ATTEMPTS):
        w = base.width * rng.uniform(0.95, 1.06)
        h = base.height * rng.uniform(0.95, 1.06)
        x1 = base.x1 + base.width * rng.uniform(-0.12, 0.12)
        y1 = base.y1 + base.height * rng.uniform(-0.06, 0.06)
        if x1 < 0 or y1 < 0 or x1 + w > cfg.width or y1 + h > cfg.height:
            continue
        partner = Box(x1, y1, x1 + w, y1 + h)
        if iou(base, partner) > _COUPLE_MIN_IOU:
            return partner
    return None


def _place_head(rng: np.random.Generator, body: Box, cfg: SceneConfig) -> Box:
    # head sits somewhere in the top 30% band of its body, fully inside it
    side = rng.uniform(*cfg.head_ratio_range) * body.height
    w = min(side, 0.9 * body.width)
    x1 = body.x1 + rng.uniform(0.0, body.width - w)
    band = max(0.0, 0.3 * body.height - side)
    y1 = body.y1 + (rng.uniform(0.0, band) if band > 0 else 0.0)
    return Box(x1, y1, x1 + w, y1 + side)


def _crowded_count(cfg: SceneConfig) -> int:
    m = 2 * round(cfg.crowd_intensity * cfg.n_persons / 2.0)
    return min(m, 2 * (cfg.n_persons // 2))


def _try_place_bodies(rng: np.random.Generator, cfg: SceneConfig) -> Optional[list[Box]]:
    n_coupled = _crowded_count(cfg)
    placed: list[Box] = []

    def clear_of_others(box: Box) -> bool:
        return all(iou(box, other) <= _GROUP_MAX_IOU for other in placed)

    for _ in range(n_coupled // 2):
        for _ in range(_PLACE_ATTEMPTS):
            base = _sample_body(rng, cfg)
            if base is None or not clear_of_others(base):
                continue
            partner = _sample_partner(rng, cfg, base)
            if partner is not None and clear_of_others(partner):
                placed.extend((base, partner))
                break
        else:
            return None
    for _ in range(cfg.n_persons - n_coupled):
        for _ in range(_PLACE_ATTEMPTS):
            solo = _sample_body(rng, cfg)
            if solo is not None and clear_of_others(solo):
                placed.append(solo)
                break
        else:
            return None
    return placed


def generate_scene(cfg: SceneConfig, scene_index: int = 0) -> list[GtPair]:
    """Generate one scene of head/body pairs, bit-reproducible from
    (cfg, scene_index).

    The number of coupled people is crowd_intensity * n_persons rounded to an
    even count, so for n_persons >= 10 the achieved crowded fraction is within
    1/n_persons of the target. Raises SceneGenerationError when the bodies
    cannot be placed (e.g. they do not fit the image).
    """
    if cfg.n_persons == 0:
        return []
    rng = _stream(cfg.seed, _SCENE_STREAM, scene_index)
    target_fraction = _crowded_count(cfg) / cfg.n_persons
    for _ in range(_SCENE_ATTEMPTS):
        bodies = _try_place_bodies(rng, cfg)
        if bodies is None:
            continue
        if abs(crowded_fraction(bodies) - target_fraction) > 1e-9:
            continue  # a couple collided with a single; extremely rare
        return [
            GtPair(head=_place_head(rng, body, cfg), body=body, person_id=pid)
            for pid, body in enumerate(bodies)
        ]
    raise SceneGenerationError(
        f"could not place {cfg.n_persons} bodies of size {cfg.body_size_range} "
        f"in a {cfg.width}x{cfg.height} image after {_SCENE_ATTEMPTS} attempts"
    )


def _jitter(
    box: Box,
    rel: float,
    rng: np.random.Generator,
    width: float,
    height: float,
) -> Box:
    """Perturb center by N(0, rel*size) and scale sizes by exp(N(0, rel)),
    then clip into the image. rel=0 returns the box unchanged (the four
    normal draws are consumed either way, keeping streams aligned)."""
    z = rng.normal(0.0, 1.0, size=4)
    if rel == 0.0:
        return box
    cx, cy = box.center
    w = box.width * math.exp(z[2] * rel)
    h = box.height * math.exp(z[3] * rel)
    cx += z[0] * rel * box.width
    cy += z[1] * rel * box.height
    return clip_box(Box(cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h), width, height)


def _beta_score(rng: np.random.Generator, mean: float, conc: float) -> float:
    return float(rng.beta(mean * conc, (1.0 - mean) * conc))


def _random_plausible_pair(
    rng: np.random.Generator,
    noise: DetectorNoise,
    width: float,
    height: float,
) -> DetectionPair:
    """A person-shaped false positive placed uniformly in the image."""
    h = min(rng.uniform(0.15, 0.35) * height, 0.95 * height)
    w = min(h * rng.uniform(0.4, 0.6), 0.95 * width)
    x1 = rng.uniform(0.0, width - w)
    y1 = rng.uniform(0.0, height - h)
    body = Box(x1, y1, x1 + w, y1 + h)
    side = rng.uniform(0.18, 0.27) * h
    hx1 = body.x1 + rng.uniform(0.0, body.width - min(side, 0.9 * body.width))
    head = Box(hx1, body.y1, hx1 + min(side, 0.9 * body.width), body.y1 + side)
    return DetectionPair(
        head=head,
        body=body,
        head_score=_beta_score(rng, noise.head_fp_mean, noise.score_conc),
        body_score=_beta_score(rng, noise.body_fp_mean, noise.score_conc),
    )


def simulate_detections(
    gts: Sequence[GtPair],
    noise: DetectorNoise,
    width: float,
    height: float,
    image_index: int = 0,
) -> list[DetectionPair]:
    """Run the simulated detector over one scene.

    Every non-missed person yields one pair with independently jittered head
    and body and TP-distributed scores. Each person may additionally spawn a
    ghost pair (its head again, body drifted by ghost_body_jitter, body score
    from the ghost distribution): the crowd-duplicate phenomenon Joint NMS is
    meant to kill. Finally a Poisson number of uniformly placed false-positive
    pairs is added with FP-distributed scores. Deterministic in
    (gts, noise, image_index).
    """
    rng = _stream(noise.seed, _DETECT_STREAM, image_index)
    dets: list[DetectionPair] = []
    for person in gts:
        if rng.random() >= noise.miss_prob:
            head = _jitter(person.head, noise.head_jitter, rng, width, height)
            body = _jitter(person.body, noise.body_jitter, rng, width, height)
            dets.append(
                DetectionPair(
                    head=head,
                    body=body,
                    head_score=_beta_score(rng, noise.head_tp_mean, noise.score_conc),
                    body_score=_beta_score(rng, noise.body_tp_mean, noise.score_conc),
                )
            )
        if rng.random() < noise.ghost_prob:
            head = _jitter(person.head, noise.head_jitter, rng, width, height)
            body = _jitter(person.body, noise.ghost_body_jitter, rng, width, height)
            dets.append(
                DetectionPair(
                    head=head,
                    body=body,
                    head_score=_beta_score(rng, noise.ghost_head_score_mean, noise.score_conc),
                    body_score=_beta_score(rng, noise.ghost_body_score_mean, noise.score_conc),
                )
            )
    for _ in range(rng.poisson(noise.fp_rate)):
        dets.append(_random_plausible_pair(rng, noise, width, height))
    return dets


def simulate_branch_proposals(
    gts: Sequence[GtPair],
    noise: DetectorNoise,
    principal: Part,
    width: float,
    height: float,
    image_index: int = 0,
) -> list[PairedProposal]:
    """One proposal pair per person from the branch whose matching part is
    `principal`: that part is jittered by principal_jitter, the attached part
    by attached_jitter, and the score follows the principal part's TP
    distribution. Deterministic in (gts, noise, principal, image_index)."""
    stream = _BRANCH_HEAD_STREAM if principal == "head" else _BRANCH_BODY_STREAM
    rng = _stream(noise.seed, stream, image_index)
    score_mean = noise.head_tp_mean if principal == "head" else noise.body_tp_mean
    out: list[PairedProposal] = []
    for person in gts:
        principal_box = _jitter(person.part(principal), noise.principal_jitter, rng, width, height)
        attached_part: Part = "body" if principal == "head" else "head"
        attached_box = _jitter(person.part(attached_part), noise.attached_jitter, rng, width, height)
        head, body = (
            (principal_box, attached_box) if principal == "head" else (attached_box, principal_box)
        )
        out.append(
            PairedProposal(
                head=head,
                body=body,
                score=_beta_score(rng, score_mean, noise.score_conc),
                principal=principal,
                source_branch=branch_for(principal),
            )
        )
    return out
