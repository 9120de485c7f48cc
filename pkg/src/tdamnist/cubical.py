"""Filtered cubical complexes over a pixel grid (V-construction).

Pixels are vertices, 4-adjacent pixel pairs are edges and 2x2 pixel blocks are
unit squares. A cell's filtration value is the maximum over its vertices.

Cells are sorted by ``(value, dimension, anchor row, anchor col, orientation)``
where the anchor is the cell's top-left pixel and orientation is 0 for a
horizontal edge, 1 for a vertical edge and -1 for vertices and squares.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .filtration import ScalarField

HORIZONTAL, VERTICAL, NO_ORIENTATION = 0, 1, -1


class Cell(NamedTuple):
    dimension: int
    anchor: tuple[int, int]
    orientation: int
    value: float


class FiltrationOrderError(ValueError):
    """A complex whose cell order is not a valid filtration."""


@dataclass(frozen=True)
class FilteredCubicalComplex:
    values: np.ndarray  # (n,) float64
    dims: np.ndarray  # (n,) int8
    anchors: np.ndarray  # (n, 2) int32, (row, col)
    orientations: np.ndarray  # (n,) int8
    boundary: np.ndarray  # (n, 4) int32, sorted-order face indices, -1 padded
    shape: tuple[int, int]

    def __len__(self) -> int:
        return len(self.values)

    @property
    def vertex_count(self) -> int:
        return int(np.count_nonzero(self.dims == 0))

    @property
    def edge_count(self) -> int:
        return int(np.count_nonzero(self.dims == 1))

    @property
    def square_count(self) -> int:
        return int(np.count_nonzero(self.dims == 2))

    def faces(self, i: int) -> np.ndarray:
        row = self.boundary[i]
        return row[row >= 0]

    @property
    def cells(self) -> list[Cell]:
        return [
            Cell(int(d), (int(a[0]), int(a[1])), int(o), float(v))
            for d, a, o, v in zip(self.dims, self.anchors, self.orientations, self.values)
        ]

    def permuted(self, order) -> "FilteredCubicalComplex":
        """Reorder cells; ``order[k]`` is the old index of the new k-th cell."""
        order = np.asarray(order, dtype=np.int64)
        inverse = np.empty_like(order)
        inverse[order] = np.arange(len(order))
        old = self.boundary[order]
        pad = np.iinfo(np.int64).max
        boundary = np.where(old >= 0, inverse[np.maximum(old, 0)], pad)
        boundary.sort(axis=1)
        boundary = np.where(boundary == pad, -1, boundary).astype(np.int32)
        return FilteredCubicalComplex(
            self.values[order],
            self.dims[order],
            self.anchors[order],
            self.orientations[order],
            boundary,
            self.shape,
        )

    def dump(self, path, delimiter: str = "\t") -> None:
        """Write the sorted cell list as delimited text, one cell per line."""
        with open(path, "w") as fh:
            fh.write(delimiter.join(["index", "dim", "row", "col", "orientation", "value", "faces"]) + "\n")
            for i, c in enumerate(self.cells):
                faces = ",".join(str(f) for f in self.faces(i))
                fh.write(
                    delimiter.join(
                        [str(i), str(c.dimension), str(c.anchor[0]), str(c.anchor[1]),
                         str(c.orientation), repr(c.value), faces]
                    )
                    + "\n"
                )


def build_complex(field) -> FilteredCubicalComplex:
    """Full-grid filtered cubical complex of a scalar field (or a 2-D array)."""
    f = np.asarray(field.values if isinstance(field, ScalarField) else field, dtype=np.float64)
    if f.ndim != 2 or f.size == 0:
        raise ValueError(f"expected a nonempty 2-D field, got shape {f.shape}")
    h, w = f.shape
    rr, cc = np.indices((h, w))

    # per-kind arrays in a canonical unsorted layout
    vid = np.arange(h * w).reshape(h, w)
    n_v, n_he, n_ve = h * w, h * (w - 1), (h - 1) * w
    he_id = n_v + np.arange(n_he).reshape(h, w - 1)
    ve_id = n_v + n_he + np.arange(n_ve).reshape(h - 1, w)
    sq_id = n_v + n_he + n_ve + np.arange((h - 1) * (w - 1)).reshape(h - 1, w - 1)

    he_val = np.maximum(f[:, :-1], f[:, 1:])
    ve_val = np.maximum(f[:-1, :], f[1:, :])
    sq_val = np.maximum(he_val[:-1, :], he_val[1:, :])

    values = np.concatenate([f.ravel(), he_val.ravel(), ve_val.ravel(), sq_val.ravel()])
    dims = np.concatenate([
        np.zeros(n_v, np.int8), np.ones(n_he + n_ve, np.int8), np.full(sq_id.size, 2, np.int8)
    ])
    rows = np.concatenate([rr.ravel(), rr[:, :-1].ravel(), rr[:-1, :].ravel(), rr[:-1, :-1].ravel()])
    cols = np.concatenate([cc.ravel(), cc[:, :-1].ravel(), cc[:-1, :].ravel(), cc[:-1, :-1].ravel()])
    orient = np.concatenate([
        np.full(n_v, NO_ORIENTATION, np.int8),
        np.full(n_he, HORIZONTAL, np.int8),
        np.full(n_ve, VERTICAL, np.int8),
        np.full(sq_id.size, NO_ORIENTATION, np.int8),
    ])

    boundary = np.full((len(values), 4), -1, dtype=np.int64)
    boundary[he_id.ravel(), :2] = np.stack([vid[:, :-1].ravel(), vid[:, 1:].ravel()], axis=1)
    boundary[ve_id.ravel(), :2] = np.stack([vid[:-1, :].ravel(), vid[1:, :].ravel()], axis=1)
    boundary[sq_id.ravel()] = np.stack(
        [he_id[:-1, :].ravel(), he_id[1:, :].ravel(), ve_id[:, :-1].ravel(), ve_id[:, 1:].ravel()], axis=1
    )

    order = np.lexsort((orient, cols, rows, dims, values))
    inverse = np.empty_like(order)
    inverse[order] = np.arange(len(order))
    bnd = boundary[order]
    # faces ascending, -1 padding last
    pad = np.iinfo(np.int64).max
    bnd = np.where(bnd >= 0, inverse[np.maximum(bnd, 0)], pad)
    bnd.sort(axis=1)
    bnd = np.where(bnd == pad, -1, bnd).astype(np.int32)

    return FilteredCubicalComplex(
        values=values[order],
        dims=dims[order],
        anchors=np.stack([rows, cols], axis=1)[order].astype(np.int32),
        orientations=orient[order],
        boundary=bnd,
        shape=(h, w),
    )


def check_filtration(cx: FilteredCubicalComplex) -> None:
    """Raise :class:`FiltrationOrderError` unless faces precede cofaces with no larger value."""
    n = len(cx)
    if n and np.any(np.diff(cx.values) < 0):
        raise FiltrationOrderError("cell values are not sorted")
    b = cx.boundary
    present = b >= 0
    own = np.broadcast_to(np.arange(n)[:, None], b.shape)
    if np.any(present & (b >= own)):
        raise FiltrationOrderError("a cell appears before one of its faces")
    face_vals = np.where(present, cx.values[np.maximum(b, 0)], -np.inf)
    if np.any(face_vals > cx.values[:, None]):
        raise FiltrationOrderError("a face has a larger value than its coface")
    expected = np.where(cx.dims == 0, 0, np.where(cx.dims == 1, 2, 4))
    if np.any(present.sum(axis=1) != expected):
        raise FiltrationOrderError("wrong number of faces")


def sublevel_counts(cx: FilteredCubicalComplex, t: float) -> tuple[int, int, int]:
    """(vertices, edges, squares) with value <= t."""
    counts = np.bincount(cx.dims[cx.values <= t], minlength=3)
    return int(counts[0]), int(counts[1]), int(counts[2])


def euler_characteristic(cx: FilteredCubicalComplex, t: float = np.inf) -> int:
    v, e, f = sublevel_counts(cx, t)
    return v - e + f
