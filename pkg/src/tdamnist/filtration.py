"""Scalar fields computed from binary images.

Pixel coordinates are ``(x, y) = (column, row)``. Each field maps digit
pixels to low values and background pixels to the field maximum, so the
digit enters a sublevel filtration first.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import convolve

from .imageio import binarize

DEFAULT_DIRECTIONS = ((0, 1), (0, -1), (1, 0), (-1, 0), (1, 1), (1, -1), (-1, 1), (-1, -1))
DEFAULT_CENTERS = ((13, 6), (6, 13), (13, 13), (20, 13), (13, 20), (6, 6), (6, 20), (20, 6), (20, 20))
DEFAULT_RADIUS = 6.0
DEFAULT_THRESHOLD = 0.4


@dataclass(frozen=True)
class FieldTag:
    kind: str  # "height" | "radial" | "density" | "grayscale"
    param: tuple = ()

    def __str__(self) -> str:
        if not self.param:
            return self.kind
        return f"{self.kind}({','.join(f'{p:g}' for p in self.param)})"


@dataclass
class ScalarField:
    values: np.ndarray
    tag: FieldTag
    degenerate: bool = False

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def max(self) -> float:
        return float(self.values.max()) if self.values.size else 0.0


@dataclass
class FiltrationConfig:
    directions: tuple = DEFAULT_DIRECTIONS
    centers: tuple = DEFAULT_CENTERS
    density_radius: float = DEFAULT_RADIUS
    binarize_threshold: float = DEFAULT_THRESHOLD

    def __post_init__(self):
        self.directions = tuple(tuple(int(c) for c in v) for v in self.directions)
        self.centers = tuple(tuple(int(c) for c in p) for p in self.centers)
        if any(v == (0, 0) for v in self.directions):
            raise ValueError("zero direction vector")
        if self.density_radius <= 0:
            raise ValueError("density radius must be positive")
        if not 0.0 <= self.binarize_threshold <= 1.0:
            raise ValueError("threshold outside [0, 1]")

    @property
    def n_fields(self) -> int:
        return len(self.directions) + len(self.centers) + 1

    def tags(self) -> list[FieldTag]:
        return (
            [FieldTag("height", v) for v in self.directions]
            + [FieldTag("radial", c) for c in self.centers]
            + [FieldTag("density", (self.density_radius,))]
        )

    def to_dict(self) -> dict:
        return {
            "directions": [list(v) for v in self.directions],
            "centers": [list(c) for c in self.centers],
            "density_radius": self.density_radius,
            "binarize_threshold": self.binarize_threshold,
        }

    @classmethod
    def from_section(cls, section) -> "FiltrationConfig":
        """Build from a ``configparser`` section; missing keys keep defaults."""
        kwargs = {}
        if "directions" in section:
            kwargs["directions"] = _parse_pairs(section["directions"])
        if "centers" in section:
            kwargs["centers"] = _parse_pairs(section["centers"])
        if "density_radius" in section:
            kwargs["density_radius"] = float(section["density_radius"])
        if "binarize_threshold" in section:
            kwargs["binarize_threshold"] = float(section["binarize_threshold"])
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path) -> "FiltrationConfig":
        parser = configparser.ConfigParser()
        parser.read(Path(path))
        return cls.from_section(parser["filtration"] if parser.has_section("filtration") else {})


def _parse_pairs(text: str) -> tuple:
    # "0,1; 0,-1; 1,0"
    pairs = [p.strip() for p in text.replace("\n", ";").split(";") if p.strip()]
    return tuple(tuple(int(c) for c in p.split(",")) for p in pairs)


def _coords(shape) -> tuple[np.ndarray, np.ndarray]:
    rows, cols = np.indices(shape, dtype=np.float64)
    return cols, rows


def _background_fill(values: np.ndarray, mask: np.ndarray, tag: FieldTag) -> ScalarField:
    fg = mask.astype(bool)
    if not fg.any():
        return ScalarField(np.zeros(mask.shape), tag, degenerate=True)
    out = np.where(fg, values, 0.0)
    out[~fg] = values[fg].max()
    return ScalarField(out, tag)


def height_field(mask: np.ndarray, direction) -> ScalarField:
    """Projection of foreground pixels onto a unit direction, shifted to start at 0.

    Integer directions are normalized here. Background pixels take the
    largest foreground value.
    """
    mask = np.asarray(mask)
    v = np.asarray(direction, dtype=np.float64)
    norm = np.linalg.norm(v)
    if norm == 0:
        raise ValueError("zero direction vector")
    v = v / norm
    x, y = _coords(mask.shape)
    proj = x * v[0] + y * v[1]
    fg = mask.astype(bool)
    if fg.any():
        proj = proj - proj[fg].min()
    return _background_fill(proj, mask, FieldTag("height", tuple(direction)))


def radial_field(mask: np.ndarray, center) -> ScalarField:
    """Euclidean distance of foreground pixels to ``center``; background gets the farthest one."""
    mask = np.asarray(mask)
    cx, cy = center
    h, w = mask.shape
    if not (0 <= cx < w and 0 <= cy < h):
        raise ValueError(f"center {center} outside {w}x{h} image")
    x, y = _coords(mask.shape)
    dist = np.hypot(x - cx, y - cy)
    return _background_fill(dist, mask, FieldTag("radial", tuple(center)))


def _disk(radius: float) -> np.ndarray:
    r = int(np.floor(radius))
    dy, dx = np.mgrid[-r : r + 1, -r : r + 1]
    return (dx * dx + dy * dy <= radius * radius).astype(np.float64)


def neighbor_counts(mask: np.ndarray, radius: float) -> np.ndarray:
    """Number of foreground pixels within Euclidean ``radius`` of each pixel (self included)."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    mask = np.asarray(mask, dtype=np.float64)
    return convolve(mask, _disk(radius), mode="constant", cval=0.0)


def density_field(mask: np.ndarray, radius: float = DEFAULT_RADIUS) -> ScalarField:
    """Inverted neighbor count ``max - count`` so dense strokes come first."""
    counts = neighbor_counts(mask, radius)
    tag = FieldTag("density", (float(radius),))
    if not np.asarray(mask).any():
        return ScalarField(np.zeros(counts.shape), tag, degenerate=True)
    return ScalarField(counts.max() - counts, tag)


def make_all_fields(image: np.ndarray, cfg: FiltrationConfig | None = None) -> list[ScalarField]:
    """Binarize a grayscale image and compute every configured field.

    Order: heights (by ``cfg.directions``), radials (by ``cfg.centers``), density.
    """
    cfg = cfg or FiltrationConfig()
    mask = binarize(image, cfg.binarize_threshold)
    fields = [height_field(mask, v) for v in cfg.directions]
    fields += [radial_field(mask, c) for c in cfg.centers]
    fields.append(density_field(mask, cfg.density_radius))
    return fields
