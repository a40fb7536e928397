"""Synthetic shape corpus generator.

Produces small PGM images of three shape families (circle, rectangle,
cross) with per-image jitter of up to 2 px translation and 10% scale,
plus `.meta` sidecar files carrying the annotation fields, so evaluation
and tests never need binary fixtures. Fully deterministic for a given
seed.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .image import GrayscaleImage, encode_pgm

__all__ = ["SHAPE_CLASSES", "ShapeClass", "render_shape", "generate_dataset"]

SPECIALTY = "Synthetic"
PHYSICIAN = "synth"
_FG = 220
_BG = 40


@dataclass(frozen=True)
class ShapeClass:
    name: str
    sub_class: str
    keywords: tuple[str, ...]


SHAPE_CLASSES = (
    ShapeClass("CIRCLE", "DISC", ("round lesion", "well-defined margin")),
    ShapeClass("RECTANGLE", "BOX", ("rectangular implant", "sharp corners")),
    ShapeClass("CROSS", "PLUS", ("cruciform marker", "intersecting bars")),
)


def render_shape(kind: str, size: int = 96, dx: int = 0, dy: int = 0, scale: float = 1.0) -> GrayscaleImage:
    """Rasterize one filled shape, centred with the given jitter."""
    cx = size // 2 + dx
    cy = size // 2 + dy
    yy, xx = np.indices((size, size))
    if kind == "CIRCLE":
        r = 22.0 * scale
        inside = (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r
    elif kind == "RECTANGLE":
        hw, hh = 26.0 * scale, 14.0 * scale
        inside = (np.abs(xx - cx) <= hw) & (np.abs(yy - cy) <= hh)
    elif kind == "CROSS":
        arm, thick = 26.0 * scale, 7.0 * scale
        horizontal = (np.abs(xx - cx) <= arm) & (np.abs(yy - cy) <= thick)
        vertical = (np.abs(xx - cx) <= thick) & (np.abs(yy - cy) <= arm)
        inside = horizontal | vertical
    else:
        raise ValueError(f"unknown shape kind {kind!r}")
    return GrayscaleImage(np.where(inside, _FG, _BG).astype(np.uint8))


def generate_dataset(
    out_dir, per_class: int = 12, seed: int = 7, size: int = 96
) -> list[Path]:
    """Write `per_class` jittered images per shape class, with .meta sidecars."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = random.Random(seed)
    paths = []
    emitted: set[bytes] = set()
    for cls in SHAPE_CLASSES:
        for index in range(per_class):
            # redraw jitter until the raster is fresh, so every file registers
            while True:
                dx = rng.randint(-2, 2)
                dy = rng.randint(-2, 2)
                scale = rng.uniform(0.9, 1.1)
                image = render_shape(cls.name, size=size, dx=dx, dy=dy, scale=scale)
                data = encode_pgm(image)
                if data not in emitted:
                    emitted.add(data)
                    break
            name = f"{cls.name}{index:02d}.pgm"
            path = out / name
            path.write_bytes(data)
            meta = {
                "specialty": SPECIALTY,
                "class_name": cls.name,
                "sub_class": cls.sub_class,
                "keywords": list(cls.keywords),
                "physician_id": PHYSICIAN,
            }
            (out / (name + ".meta")).write_text(json.dumps(meta, indent=2) + "\n")
            paths.append(path)
    return paths
