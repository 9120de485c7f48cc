"""Image -> diagrams -> features plumbing shared by the CLI and the tests."""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Sequence

import numpy as np

from . import storage
from .filtration import FiltrationConfig, make_all_fields
from .persistence import PersistenceDiagram, field_diagrams
from .vectorize import SampleRanges, VectorizerConfig, fit_sample_ranges, vectorize_dataset

log = logging.getLogger(__name__)

ImageDiagrams = list  # list over fields of (H0, H1) PersistenceDiagram pairs


def image_diagrams(image: np.ndarray, cfg: FiltrationConfig | None = None) -> ImageDiagrams:
    """Finalized (H0, H1) diagrams for every scalar field of one grayscale image."""
    return [field_diagrams(f) for f in make_all_fields(image, cfg)]


def _chunk(args):
    images, cfg = args
    return [image_diagrams(img, cfg) for img in images]


def extract_diagrams(images: np.ndarray, cfg: FiltrationConfig | None = None, workers: int = 1,
                     chunk: int = 64) -> list[ImageDiagrams]:
    cfg = cfg or FiltrationConfig()
    if workers <= 1 or len(images) <= chunk:
        return _chunk((images, cfg))
    jobs = [(images[i : i + chunk], cfg) for i in range(0, len(images), chunk)]
    out: list[ImageDiagrams] = []
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for part in pool.map(_chunk, jobs):
            out.extend(part)
    return out


def diagrams_to_records(all_diagrams: Sequence[ImageDiagrams]) -> tuple[np.ndarray, list[int], list[float]]:
    """Flatten to ``(field_index, dimension, birth, death)`` rows plus per-image counts and field maxima."""
    rows, counts, maxima = [], [], []
    for img in all_diagrams:
        n = 0
        for f, pair in enumerate(img):
            for dim, d in enumerate(pair):
                k = len(d)
                if k:
                    rows.append(np.column_stack([np.full(k, f), np.full(k, dim), d.births, d.deaths]))
                n += k
            maxima.append(float(pair[0].field_max))
        counts.append(n)
    records = np.concatenate(rows) if rows else np.zeros((0, 4))
    return records.astype(np.float32), counts, maxima


def records_to_diagrams(records: np.ndarray, counts: Sequence[int], n_fields: int,
                        maxima: Sequence[float] | None = None) -> list[ImageDiagrams]:
    records = np.asarray(records, dtype=np.float64)
    out, start = [], 0
    for i, n in enumerate(counts):
        block = records[start : start + n]
        start += n
        img = []
        for f in range(n_fields):
            fm = float(maxima[i * n_fields + f]) if maxima is not None else float("nan")
            pair = []
            for dim in (0, 1):
                sel = block[(block[:, 0] == f) & (block[:, 1] == dim)]
                pair.append(PersistenceDiagram(sel[:, 2], sel[:, 3], dim, fm, essential=np.zeros(len(sel), bool)))
            img.append(tuple(pair))
        out.append(img)
    return out


def write_diagram_cache(path, all_diagrams: Sequence[ImageDiagrams], header: dict) -> None:
    records, counts, maxima = diagrams_to_records(all_diagrams)
    n_fields = len(all_diagrams[0]) if all_diagrams else 0
    storage.write(path, {**header, "kind": "diagrams", "counts": counts, "field_max": maxima,
                         "n_fields": n_fields, "columns": ["field_index", "dimension", "birth", "death"]},
                  records)


def read_diagram_cache(path) -> tuple[dict, list[ImageDiagrams]]:
    header, records = storage.read(path)
    if header.get("kind") != "diagrams":
        raise storage.ContainerError(f"{path} is not a diagram cache")
    return header, records_to_diagrams(records, header["counts"], header["n_fields"], header["field_max"])


class DiagramFeatures:
    """Topological features whose sample ranges are refit on each training split."""

    def __init__(self, diagrams: Sequence[ImageDiagrams], cfg: VectorizerConfig, strategy: str):
        self.diagrams = list(diagrams)
        self.cfg = cfg
        self.strategy = strategy
        self.last_ranges: SampleRanges | None = None

    def __len__(self) -> int:
        return len(self.diagrams)

    def split(self, train_idx, test_idx):
        ranges = fit_sample_ranges([self.diagrams[i] for i in train_idx])
        self.last_ranges = ranges
        xtr, _ = vectorize_dataset([self.diagrams[i] for i in train_idx], self.cfg, self.strategy, ranges)
        xte, _ = vectorize_dataset([self.diagrams[i] for i in test_idx], self.cfg, self.strategy, ranges)
        return xtr, xte
