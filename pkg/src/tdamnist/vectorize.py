"""Fixed-length vectors from persistence diagrams.

Five representations: Betti curve, persistence landscape, power-weighted
silhouette, persistence image and heat kernel. Each works on one diagram
and a sampling range; :func:`assemble` lays the per-field vectors out for a
whole image under one of the H0 / H1 / fused / concat strategies.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import ndtr

from .persistence import PersistenceDiagram

KINDS = ("betti", "landscape", "silhouette", "image", "heat")
STRATEGIES = ("H0", "H1", "fused", "concat")
_GRID_KINDS = ("image", "heat")


@dataclass(frozen=True)
class VectorizerConfig:
    kind: str
    resolution: int | None = None
    layers: int = 1
    power: float = 1.0
    sigma: float = 0.1
    sample_range: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown vectorizer {self.kind!r}; expected one of {', '.join(KINDS)}")
        if self.resolution is None:
            object.__setattr__(self, "resolution", 10 if self.kind in _GRID_KINDS else 75)
        if self.resolution < 2:
            raise ValueError("resolution must be at least 2")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.layers < 1:
            raise ValueError("layers must be at least 1")
        lo, hi = self.sample_range
        if not lo < hi:
            raise ValueError(f"empty sample range {self.sample_range}")

    @property
    def length(self) -> int:
        r = self.resolution
        if self.kind in _GRID_KINDS:
            return r * r
        if self.kind == "landscape":
            return self.layers * r
        return r

    @property
    def name(self) -> str:
        """Short tag such as ``landscape3`` or ``heat``."""
        return f"landscape{self.layers}" if self.kind == "landscape" else self.kind

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "resolution": self.resolution,
            "layers": self.layers,
            "power": self.power,
            "sigma": self.sigma,
        }

    @classmethod
    def parse(cls, spec: str) -> "VectorizerConfig":
        """``"heat"``, ``"landscape3"``, ``"betti:resolution=50"`` and the like."""
        name, _, rest = spec.partition(":")
        kwargs: dict = {}
        if name.startswith("landscape") and name != "landscape":
            kwargs["layers"] = int(name[len("landscape"):])
            name = "landscape"
        aliases = {"persistence_image": "image", "heat_kernel": "heat", "betti_curve": "betti"}
        name = aliases.get(name, name)
        for item in filter(None, rest.split(",")):
            k, _, v = item.partition("=")
            kwargs[k] = int(v) if k in ("resolution", "layers") else float(v)
        return cls(name, **kwargs)


def _canonical(diagram: PersistenceDiagram) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Distinct points in sorted order with their multiplicities.

    Working on distinct points makes every vectorizer exactly invariant to
    point order and exactly linear in multiplicity.
    """
    if len(diagram) == 0:
        z = np.zeros(0)
        return z, z, z
    pts, counts = np.unique(diagram.points, axis=0, return_counts=True)
    return pts[:, 0], pts[:, 1], counts.astype(np.float64)


def sample_points(cfg: VectorizerConfig) -> np.ndarray:
    lo, hi = cfg.sample_range
    return np.linspace(lo, hi, cfg.resolution)


def betti_curve(diagram: PersistenceDiagram, cfg: VectorizerConfig) -> np.ndarray:
    """Number of intervals ``[b, d)`` containing each sample point."""
    t = sample_points(cfg)
    b, d, m = _canonical(diagram)
    if b.size == 0:
        return np.zeros(cfg.resolution)
    alive = (b[:, None] <= t[None, :]) & (t[None, :] < d[:, None])
    return (alive * m[:, None]).sum(axis=0)


def tents(births: np.ndarray, deaths: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Tent functions ``max(0, min(t - b, d - t))``, one row per point."""
    return np.maximum(0.0, np.minimum(t[None, :] - births[:, None], deaths[:, None] - t[None, :]))


def landscape(diagram: PersistenceDiagram, cfg: VectorizerConfig) -> np.ndarray:
    """First ``cfg.layers`` landscape functions, concatenated."""
    t = sample_points(cfg)
    b, d, m = _canonical(diagram)
    out = np.zeros((cfg.layers, cfg.resolution))
    if b.size == 0:
        return out.ravel()
    # multiplicity repeats a tent in the order statistics
    reps = m.astype(np.int64)
    lam = tents(np.repeat(b, reps), np.repeat(d, reps), t)
    lam = -np.sort(-lam, axis=0)
    k = min(cfg.layers, lam.shape[0])
    out[:k] = lam[:k]
    return out.ravel()


def silhouette(diagram: PersistenceDiagram, cfg: VectorizerConfig) -> np.ndarray:
    """Tent functions averaged with weights ``|d - b| ** power``.

    A diagram whose weights sum to zero (empty, or only zero-length points)
    gives the zero vector.
    """
    t = sample_points(cfg)
    b, d, m = _canonical(diagram)
    if b.size == 0:
        return np.zeros(cfg.resolution)
    w = m * np.abs(d - b) ** cfg.power
    total = w.sum()
    if total == 0:
        return np.zeros(cfg.resolution)
    return (w / total) @ tents(b, d, t)


def _cell_masses(centers: np.ndarray, edges: np.ndarray, sigma: float) -> np.ndarray:
    """Gaussian mass of each interval ``[edges[k], edges[k+1]]``, one row per center."""
    cdf = ndtr((edges[None, :] - centers[:, None]) / sigma)
    return np.diff(cdf, axis=1)


def persistence_image_grid(cfg: VectorizerConfig) -> tuple[np.ndarray, np.ndarray]:
    """Cell edges (birth axis, persistence axis) of the persistence image."""
    lo, hi = cfg.sample_range
    r = cfg.resolution
    return np.linspace(lo, hi, r + 1), np.linspace(0.0, hi - lo, r + 1)


def persistence_image(diagram: PersistenceDiagram, cfg: VectorizerConfig) -> np.ndarray:
    """Integrated Gaussian surface over birth-persistence coordinates.

    Each point ``(b, d)`` becomes a unit-mass isotropic Gaussian of std
    ``sigma`` centred at ``(b, d - b)`` with constant weight 1. Cell values
    are exact integrals over the cell, persistence along rows, birth along
    columns, flattened row-major.
    """
    b, d, m = _canonical(diagram)
    r = cfg.resolution
    if b.size == 0:
        return np.zeros(r * r)
    x_edges, y_edges = persistence_image_grid(cfg)
    mx = _cell_masses(b, x_edges, cfg.sigma)
    my = _cell_masses(d - b, y_edges, cfg.sigma)
    return ((my * m[:, None]).T @ mx).ravel()


def heat_kernel(diagram: PersistenceDiagram, cfg: VectorizerConfig) -> np.ndarray:
    """Heat-equation solution from the points minus that from their mirror images.

    With ``sigma = sqrt(2 t)`` each point contributes a normal density of std
    ``sigma``; the mirror swaps birth and death. The grid covers
    ``sample_range`` on both axes (birth along columns, death along rows) and
    each cell holds the average of the solution over the cell.
    """
    b, d, m = _canonical(diagram)
    r = cfg.resolution
    if b.size == 0:
        return np.zeros(r * r)
    lo, hi = cfg.sample_range
    edges = np.linspace(lo, hi, r + 1)
    area = ((hi - lo) / r) ** 2
    mb = _cell_masses(b, edges, cfg.sigma)
    md = _cell_masses(d, edges, cfg.sigma)
    source = (md * m[:, None]).T @ mb
    mirror = (mb * m[:, None]).T @ md
    return ((source - mirror) / area).ravel()


VECTORIZERS = {
    "betti": betti_curve,
    "landscape": landscape,
    "silhouette": silhouette,
    "image": persistence_image,
    "heat": heat_kernel,
}


def vectorize(diagram: PersistenceDiagram, cfg: VectorizerConfig) -> np.ndarray:
    return VECTORIZERS[cfg.kind](diagram, cfg)


class ChannelSlot(NamedTuple):
    field_index: int
    dim_tag: str  # "H0" | "H1" | "fused"
    kind: str
    offset: int
    length: int


@dataclass
class FeatureVector:
    values: np.ndarray
    layout: list[ChannelSlot]

    def __post_init__(self):
        if len(self.values) != sum(s.length for s in self.layout):
            raise ValueError("values length does not match layout")

    def channel(self, field_index: int, dim_tag: str) -> np.ndarray:
        for s in self.layout:
            if s.field_index == field_index and s.dim_tag == dim_tag:
                return self.values[s.offset : s.offset + s.length]
        raise KeyError((field_index, dim_tag))


@dataclass
class SampleRanges:
    """Per-channel sampling ranges keyed by ``(field_index, "H0"|"H1"|"fused")``."""

    ranges: dict[tuple[int, str], tuple[float, float]]
    flagged: set[tuple[int, str]] = field(default_factory=set)

    def __getitem__(self, key) -> tuple[float, float]:
        return self.ranges[key]

    def to_dict(self) -> dict:
        return {
            "ranges": [[k[0], k[1], lo, hi] for k, (lo, hi) in sorted(self.ranges.items())],
            "flagged": sorted([list(k) for k in self.flagged]),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SampleRanges":
        ranges = {(int(f), str(t)): (float(lo), float(hi)) for f, t, lo, hi in data["ranges"]}
        flagged = {(int(f), str(t)) for f, t in data.get("flagged", [])}
        return cls(ranges, flagged)


def channel_dims(strategy: str) -> list[str]:
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; expected one of {', '.join(STRATEGIES)}")
    return {"H0": ["H0"], "H1": ["H1"], "fused": ["fused"], "concat": ["H0", "H1"]}[strategy]


def _channel_diagram(pair, dim_tag: str) -> PersistenceDiagram:
    d0, d1 = pair
    if dim_tag == "H0":
        return d0
    if dim_tag == "H1":
        return d1
    return d0.union(d1)


def fit_sample_ranges(training: Sequence[Sequence[tuple]]) -> SampleRanges:
    """Per-channel ``(min birth, max death)`` over training images.

    ``training[i][f]`` is the finalized ``(H0, H1)`` pair of field ``f`` of
    image ``i``. Degenerate ranges widen to ``(lo, lo + 1)``; channels with no
    points at all get ``(0, 1)`` and are flagged.
    """
    if len(training) == 0:
        raise ValueError("cannot fit sample ranges on an empty training set")
    n_fields = len(training[0])
    ranges, flagged = {}, set()
    for f in range(n_fields):
        per_dim = {}
        for k, tag in enumerate(("H0", "H1")):
            births = [img[f][k].births for img in training]
            deaths = [img[f][k].deaths for img in training]
            per_dim[tag] = (np.concatenate(births), np.concatenate(deaths))
        per_dim["fused"] = (
            np.concatenate([per_dim["H0"][0], per_dim["H1"][0]]),
            np.concatenate([per_dim["H0"][1], per_dim["H1"][1]]),
        )
        for tag, (b, d) in per_dim.items():
            if b.size == 0:
                ranges[(f, tag)] = (0.0, 1.0)
                flagged.add((f, tag))
                continue
            lo, hi = float(b.min()), float(d.max())
            if not hi > lo:
                hi = lo + 1.0
            ranges[(f, tag)] = (lo, hi)
    return SampleRanges(ranges, flagged)


def layout_for(n_fields: int, cfg: VectorizerConfig, strategy: str) -> list[ChannelSlot]:
    slots, offset = [], 0
    for f in range(n_fields):
        for tag in channel_dims(strategy):
            slots.append(ChannelSlot(f, tag, cfg.name, offset, cfg.length))
            offset += cfg.length
    return slots


def assemble(diagrams: Sequence[tuple], cfg: VectorizerConfig, strategy: str,
             ranges: SampleRanges | None = None, n_fields: int = 18) -> FeatureVector:
    """Feature vector of one image from its per-field ``(H0, H1)`` diagram pairs.

    Without ``ranges`` every channel uses ``cfg.sample_range``.
    """
    if len(diagrams) != n_fields or any(len(p) != 2 for p in diagrams):
        raise ValueError(f"expected {n_fields} (H0, H1) diagram pairs, got {len(diagrams)}")
    layout = layout_for(n_fields, cfg, strategy)
    parts = []
    for slot in layout:
        c = cfg if ranges is None else replace(cfg, sample_range=ranges[(slot.field_index, slot.dim_tag)])
        parts.append(vectorize(_channel_diagram(diagrams[slot.field_index], slot.dim_tag), c))
    return FeatureVector(np.concatenate(parts), layout)


def vectorize_dataset(all_diagrams: Sequence[Sequence[tuple]], cfg: VectorizerConfig, strategy: str,
                      ranges: SampleRanges | None = None) -> tuple[np.ndarray, list[ChannelSlot]]:
    """Row-per-image feature matrix (float64) and its channel layout."""
    n_fields = len(all_diagrams[0]) if len(all_diagrams) else 18
    layout = layout_for(n_fields, cfg, strategy)
    out = np.zeros((len(all_diagrams), sum(s.length for s in layout)))
    for i, img in enumerate(all_diagrams):
        out[i] = assemble(img, cfg, strategy, ranges, n_fields=n_fields).values
    return out, layout
