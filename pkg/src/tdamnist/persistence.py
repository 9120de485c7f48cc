"""Persistence diagrams of filtered cubical complexes.

Pairs come from a Z/2 column reduction of the boundary matrix in filtration
order. Squares are reduced before edges so that every edge a square kills
can be skipped outright (clearing). Dimension 0 has an independent
elder-rule union-find route in :func:`h0_union_find`.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numba
import numpy as np

from .cubical import FilteredCubicalComplex, build_complex, check_filtration
from .filtration import FieldTag, ScalarField

FUSED = -1


@dataclass
class PersistenceDiagram:
    """Multiset of (birth, death) points; repeated rows carry multiplicity.

    Essential classes have ``death == inf`` until :func:`finalize_diagram`
    replaces it with ``field_max``; the ``essential`` mask survives that.
    """

    births: np.ndarray
    deaths: np.ndarray
    dimension: int
    field_max: float = float("nan")
    tag: FieldTag | None = None
    essential: np.ndarray = field(default=None)

    def __post_init__(self):
        self.births = np.asarray(self.births, dtype=np.float64).reshape(-1)
        self.deaths = np.asarray(self.deaths, dtype=np.float64).reshape(-1)
        if self.births.shape != self.deaths.shape:
            raise ValueError("births and deaths differ in length")
        if self.essential is None:
            self.essential = np.isinf(self.deaths)
        self.essential = np.asarray(self.essential, dtype=bool)

    def __len__(self) -> int:
        return len(self.births)

    @property
    def points(self) -> np.ndarray:
        return np.stack([self.births, self.deaths], axis=1)

    @property
    def persistence(self) -> np.ndarray:
        return self.deaths - self.births

    def multiset(self) -> list[tuple[float, float]]:
        return sorted(zip(self.births.tolist(), self.deaths.tolist()))

    def multiplicities(self) -> dict[tuple[float, float], int]:
        out: dict[tuple[float, float], int] = {}
        for p in zip(self.births.tolist(), self.deaths.tolist()):
            out[p] = out.get(p, 0) + 1
        return out

    def union(self, other: "PersistenceDiagram") -> "PersistenceDiagram":
        """Disjoint union, used for the fused strategy."""
        dim = self.dimension if self.dimension == other.dimension else FUSED
        return PersistenceDiagram(
            np.concatenate([self.births, other.births]),
            np.concatenate([self.deaths, other.deaths]),
            dim,
            max(self.field_max, other.field_max),
            self.tag,
            np.concatenate([self.essential, other.essential]),
        )

    @classmethod
    def empty(cls, dimension: int, field_max: float = float("nan"), tag=None) -> "PersistenceDiagram":
        return cls(np.zeros(0), np.zeros(0), dimension, field_max, tag)


@numba.njit(cache=True)
def _xor_sorted(a, na, b, nb, out):
    i = j = k = 0
    while i < na and j < nb:
        if a[i] < b[j]:
            out[k] = a[i]
            i += 1
            k += 1
        elif a[i] > b[j]:
            out[k] = b[j]
            j += 1
            k += 1
        else:
            i += 1
            j += 1
    while i < na:
        out[k] = a[i]
        i += 1
        k += 1
    while j < nb:
        out[k] = b[j]
        j += 1
        k += 1
    return k


@numba.njit(cache=True)
def _reduce_with_clearing(boundary, dims, top_dim):
    n = boundary.shape[0]
    pivot_owner = np.full(n, -1, np.int64)
    killer = np.full(n, -1, np.int64)
    negative = np.zeros(n, np.bool_)
    cleared = np.zeros(n, np.bool_)
    cap = 4 * n + 16
    store = np.empty(cap, np.int64)
    start = np.zeros(n, np.int64)
    length = np.zeros(n, np.int64)
    used = 0
    work = np.empty(n + 4, np.int64)
    tmp = np.empty(n + 4, np.int64)

    for dim in range(top_dim, 0, -1):
        for j in range(n):
            if dims[j] != dim or cleared[j]:
                continue
            m = 0
            for k in range(boundary.shape[1]):
                b = boundary[j, k]
                if b >= 0:
                    work[m] = b
                    m += 1
            while m > 0:
                owner = pivot_owner[work[m - 1]]
                if owner < 0:
                    break
                s = start[owner]
                m = _xor_sorted(work, m, store[s : s + length[owner]], length[owner], tmp)
                work, tmp = tmp, work
            if m == 0:
                continue
            low = work[m - 1]
            pivot_owner[low] = j
            killer[low] = j
            negative[j] = True
            # a column that is some pivot is positive: its own reduction would vanish
            cleared[low] = True
            if used + m > cap:
                cap = 2 * (used + m)
                grown = np.empty(cap, np.int64)
                grown[:used] = store[:used]
                store = grown
            store[used : used + m] = work[:m]
            start[j] = used
            length[j] = m
            used += m
    return killer, negative


def persistence_pairs(cx: FilteredCubicalComplex, check: bool = True):
    """Index-level result of the reduction.

    Returns ``(pairs, essential)``: an ``(k, 2)`` array of (birth cell, death
    cell) indices and an array of essential birth-cell indices.
    """
    if check:
        check_filtration(cx)
    top = int(cx.dims.max()) if len(cx) else 0
    killer, negative = _reduce_with_clearing(cx.boundary.astype(np.int64), cx.dims.astype(np.int64), top)
    births = np.flatnonzero(killer >= 0)
    pairs = np.stack([births, killer[births]], axis=1)
    essential = np.flatnonzero((killer < 0) & ~negative)
    return pairs, essential


def _diagrams_from_pairs(cx, pairs, essential, tag=None, max_dim: int = 1):
    field_max = float(cx.values.max())
    out = []
    for d in range(max_dim + 1):
        sel = pairs[cx.dims[pairs[:, 0]] == d]
        b = cx.values[sel[:, 0]]
        de = cx.values[sel[:, 1]]
        keep = de > b
        ess = essential[cx.dims[essential] == d]
        births = np.concatenate([b[keep], cx.values[ess]])
        deaths = np.concatenate([de[keep], np.full(len(ess), np.inf)])
        # canonical order makes diagrams from equal inputs bitwise equal
        order = np.lexsort((deaths, births))
        out.append(PersistenceDiagram(births[order], deaths[order], d, field_max, tag))
    return out


def compute_persistence(cx: FilteredCubicalComplex, tag: FieldTag | None = None, check: bool = True):
    """H0 and H1 diagrams of a filtered complex, essential deaths left at ``inf``.

    Zero-persistence pairs are dropped; essential classes are always kept.
    Raises :class:`~tdamnist.cubical.FiltrationOrderError` for an unsorted complex.
    """
    pairs, essential = persistence_pairs(cx, check=check)
    d0, d1 = _diagrams_from_pairs(cx, pairs, essential, tag)
    return d0, d1


def finalize_diagram(diagram: PersistenceDiagram, field_max: float | None = None) -> PersistenceDiagram:
    """Replace essential (infinite) deaths by the field maximum."""
    fm = diagram.field_max if field_max is None else float(field_max)
    deaths = np.where(np.isinf(diagram.deaths), fm, diagram.deaths)
    return replace(diagram, deaths=deaths, field_max=fm, essential=diagram.essential.copy())


def field_diagrams(field_: ScalarField) -> tuple[PersistenceDiagram, PersistenceDiagram]:
    """Finalized (H0, H1) diagrams of one scalar field."""
    cx = build_complex(field_)
    tag = field_.tag if isinstance(field_, ScalarField) else None
    # build_complex output is sorted by construction
    d0, d1 = compute_persistence(cx, tag=tag, check=False)
    fm = float(cx.values.max())
    return finalize_diagram(d0, fm), finalize_diagram(d1, fm)


class _UnionFind:
    def __init__(self):
        self.parent: dict[int, int] = {}
        self.oldest: dict[int, int] = {}

    def add(self, x: int) -> None:
        self.parent[x] = x
        self.oldest[x] = x

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root


def h0_union_find(cx: FilteredCubicalComplex, tag: FieldTag | None = None) -> PersistenceDiagram:
    """Dimension-0 diagram by the elder rule, walking vertices and edges in filtration order.

    Age is filtration position, so ties in value resolve the same way as in
    the matrix reduction.
    """
    uf = _UnionFind()
    births, deaths = [], []
    for i in range(len(cx)):
        d = cx.dims[i]
        if d == 0:
            uf.add(i)
        elif d == 1:
            u, v = cx.faces(i)
            ru, rv = uf.find(int(u)), uf.find(int(v))
            if ru == rv:
                continue
            if uf.oldest[ru] > uf.oldest[rv]:
                ru, rv = rv, ru
            # rv holds the younger component
            b, dv = cx.values[uf.oldest[rv]], cx.values[i]
            if dv > b:
                births.append(b)
                deaths.append(dv)
            uf.parent[rv] = ru
    for x in uf.parent:
        if uf.find(x) == x:
            births.append(cx.values[uf.oldest[x]])
            deaths.append(np.inf)
    births = np.asarray(births, dtype=np.float64)
    deaths = np.asarray(deaths, dtype=np.float64)
    order = np.lexsort((deaths, births))
    return PersistenceDiagram(births[order], deaths[order], 0, float(cx.values.max()), tag)


def betti_at(cx_or_diagrams, t: float) -> tuple[int, int]:
    """(beta_0, beta_1) of the sublevel complex at ``t``.

    Accepts a complex or an un-finalized ``(H0, H1)`` pair; essential classes
    count as never dying.
    """
    if isinstance(cx_or_diagrams, FilteredCubicalComplex):
        d0, d1 = compute_persistence(cx_or_diagrams)
    else:
        d0, d1 = cx_or_diagrams

    def alive(d: PersistenceDiagram) -> int:
        deaths = np.where(d.essential, np.inf, d.deaths)
        return int(np.count_nonzero((d.births <= t) & (t < deaths)))

    return alive(d0), alive(d1)
