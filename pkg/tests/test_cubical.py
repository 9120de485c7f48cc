import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from tdamnist.cubical import (
    FiltrationOrderError,
    build_complex,
    check_filtration,
    euler_characteristic,
    sublevel_counts,
)

fields = arrays(np.float64, st.tuples(st.integers(1, 7), st.integers(1, 7)), elements=st.integers(0, 4).map(float))


def test_mnist_size_counts():
    cx = build_complex(np.random.default_rng(0).random((28, 28)))
    assert (cx.vertex_count, cx.edge_count, cx.square_count) == (784, 1512, 729)


def test_edge_values_are_vertex_max():
    cx = build_complex(np.array([[1.0, 0.0, 1.0]]))
    assert sorted(cx.values[cx.dims == 1]) == [1.0, 1.0]


def test_disk_euler_characteristic():
    cx = build_complex(np.arange(9.0).reshape(3, 3))
    assert (cx.vertex_count, cx.edge_count, cx.square_count) == (9, 12, 4)
    assert euler_characteristic(cx) == 1


def test_single_pixel():
    cx = build_complex(np.array([[0.5]]))
    assert len(cx) == 1 and cx.vertex_count == 1


def test_sublevel_counts_extremes():
    f = np.random.default_rng(1).random((5, 5))
    cx = build_complex(f)
    assert sublevel_counts(cx, f.min() - 1) == (0, 0, 0)
    assert sublevel_counts(cx, f.max()) == (25, 40, 16)


def test_sublevel_counts_median_brute_force():
    f = np.random.default_rng(2).random((5, 5))
    t = float(np.median(f))
    cx = build_complex(f)
    v = sum(1 for r in range(5) for c in range(5) if f[r, c] <= t)
    e = sum(1 for r in range(5) for c in range(4) if max(f[r, c], f[r, c + 1]) <= t)
    e += sum(1 for r in range(4) for c in range(5) if max(f[r, c], f[r + 1, c]) <= t)
    s = sum(1 for r in range(4) for c in range(4) if f[r:r + 2, c:c + 2].max() <= t)
    assert sublevel_counts(cx, t) == (v, e, s)


@settings(max_examples=80, deadline=None)
@given(fields)
def test_complex_invariants(f):
    cx = build_complex(f)
    h, w = f.shape
    assert cx.vertex_count == h * w
    assert cx.edge_count == w * (h - 1) + h * (w - 1)
    assert cx.square_count == (h - 1) * (w - 1)
    check_filtration(cx)
    for i in range(len(cx)):
        faces = cx.faces(i)
        assert np.all(faces < i)
        assert np.all(cx.values[faces] <= cx.values[i])
        if cx.dims[i] == 0:
            assert cx.orientations[i] == -1
    # cell value is the max of its pixels
    for i in np.flatnonzero(cx.dims == 2):
        r, c = cx.anchors[i]
        assert cx.values[i] == f[r:r + 2, c:c + 2].max()
    # tie order: value, then dimension
    key = np.stack([cx.values, cx.dims], axis=1)
    assert all(tuple(key[i]) <= tuple(key[i + 1]) for i in range(len(cx) - 1))


@settings(max_examples=40, deadline=None)
@given(fields, st.integers(0, 4).map(float))
def test_sublevel_counts_monotone(f, t):
    cx = build_complex(f)
    a = sublevel_counts(cx, t)
    b = sublevel_counts(cx, t + 1)
    assert all(x <= y for x, y in zip(a, b))


def test_unsorted_complex_rejected():
    cx = build_complex(np.arange(4.0).reshape(2, 2))
    bad = cx.permuted(np.arange(len(cx))[::-1])
    with pytest.raises(FiltrationOrderError):
        check_filtration(bad)


def test_dump(tmp_path):
    cx = build_complex(np.array([[1.0, 0.0, 1.0]]))
    p = tmp_path / "cells.tsv"
    cx.dump(p)
    lines = p.read_text().splitlines()
    assert len(lines) == 1 + 5
    assert lines[1].split("\t")[:3] == ["0", "0", "0"]
