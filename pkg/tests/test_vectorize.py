import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import betti_scan, gaussian_cell_quadrature
from tdamnist.persistence import PersistenceDiagram
from tdamnist.vectorize import (
    SampleRanges,
    VectorizerConfig,
    assemble,
    betti_curve,
    fit_sample_ranges,
    heat_kernel,
    landscape,
    persistence_image,
    persistence_image_grid,
    silhouette,
    tents,
    vectorize,
    vectorize_dataset,
)


def dg(points, dim=0):
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    return PersistenceDiagram(pts[:, 0], pts[:, 1], dim)


def cfg(kind, lo=0.0, hi=1.0, **kw):
    return VectorizerConfig(kind, sample_range=(lo, hi), **kw)


def random_diagram(rng, n=None, lo=0.0, hi=10.0, dim=0):
    n = rng.integers(0, 12) if n is None else n
    b = rng.uniform(lo, hi, n)
    d = b + rng.uniform(0, hi - lo, n)
    # a few repeated points exercise multiplicity
    if n > 2:
        b[1], d[1] = b[0], d[0]
    return dg(np.column_stack([b, d]), dim)


point_lists = st.lists(
    st.tuples(st.integers(0, 8), st.integers(1, 8)).map(lambda p: (float(p[0]), float(p[0] + p[1]))),
    max_size=10,
)


# --- config ------------------------------------------------------------------


def test_config_defaults_and_lengths():
    assert VectorizerConfig("betti").resolution == 75
    assert VectorizerConfig("heat").resolution == 10
    assert VectorizerConfig("image").length == 100
    assert VectorizerConfig("landscape", layers=3).length == 225
    assert VectorizerConfig.parse("landscape5").layers == 5
    assert VectorizerConfig.parse("betti:resolution=50").resolution == 50
    assert VectorizerConfig.parse("heat:sigma=0.5").sigma == 0.5


@pytest.mark.parametrize("kw", [{"resolution": 1}, {"sigma": 0.0}, {"layers": 0}, {"sample_range": (1.0, 1.0)}])
def test_config_rejects_invalid(kw):
    with pytest.raises(ValueError):
        VectorizerConfig("landscape", **kw)


def test_unknown_kind():
    with pytest.raises(ValueError, match="unknown vectorizer"):
        VectorizerConfig.parse("wavelet")


# --- Betti curve ---------------------------------------------------------------


def test_betti_example():
    out = betti_curve(dg([(0, 2), (1, 3)]), cfg("betti", 0, 3, resolution=4))
    np.testing.assert_array_equal(out, [1, 2, 1, 0])


def test_betti_empty():
    np.testing.assert_array_equal(betti_curve(dg([]), cfg("betti")), np.zeros(75))


def test_betti_matches_scan(rng):
    c = cfg("betti", 0, 20, resolution=33)
    t = np.linspace(0, 20, 33)
    for _ in range(30):
        d = random_diagram(rng)
        assert betti_curve(d, c).tolist() == betti_scan(d.multiset(), t)


@settings(max_examples=60, deadline=None)
@given(point_lists, point_lists)
def test_betti_additivity_exact(p0, p1):
    c = cfg("betti", 0, 16, resolution=40)
    a, b = dg(p0, 0), dg(p1, 1)
    np.testing.assert_array_equal(betti_curve(a.union(b), c), betti_curve(a, c) + betti_curve(b, c))


# --- landscape -----------------------------------------------------------------


def test_landscape_apex():
    assert landscape(dg([(0, 2)]), cfg("landscape", 1, 1.5, resolution=2))[0] == 1.0


def test_landscape_second_layer_zero():
    out = landscape(dg([(0, 2)]), cfg("landscape", 0, 2, resolution=9, layers=2))
    np.testing.assert_array_equal(out[9:], 0)


def test_landscape_two_points():
    out = landscape(dg([(0, 2), (1, 3)]), cfg("landscape", 1.5, 2.5, resolution=2, layers=2))
    assert out[0] == 0.5 and out[2] == 0.5


def test_landscape_is_a_tent_on_both_sides():
    t = np.linspace(0, 2, 5)
    np.testing.assert_allclose(landscape(dg([(0, 2)]), cfg("landscape", 0, 2, resolution=5)), [0, 0.5, 1, 0.5, 0])
    np.testing.assert_allclose(tents(np.array([0.0]), np.array([2.0]), t)[0], [0, 0.5, 1, 0.5, 0])


def test_landscape_ordering(rng):
    c = cfg("landscape", 0, 20, resolution=50, layers=5)
    for _ in range(30):
        lam = landscape(random_diagram(rng), c).reshape(5, 50)
        assert np.all(lam[:-1] >= lam[1:]) and np.all(lam >= 0)


def test_landscape_multiplicity_fills_layers():
    out = landscape(dg([(0, 2), (0, 2)]), cfg("landscape", 0, 2, resolution=3, layers=3)).reshape(3, 3)
    np.testing.assert_array_equal(out[0], out[1])
    np.testing.assert_array_equal(out[2], 0)


# --- silhouette ----------------------------------------------------------------


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 5), st.floats(0.1, 5), st.floats(0.5, 3))
def test_silhouette_single_point_identity_exact(b, p, power):
    c = cfg("silhouette", 0, 10, resolution=30, power=power)
    t = np.linspace(0, 10, 30)
    d = b + p
    np.testing.assert_array_equal(silhouette(dg([(b, d)]), c), tents(np.array([b]), np.array([d]), t)[0])


def test_silhouette_duplicate_point():
    c = cfg("silhouette", 0, 2, resolution=11)
    np.testing.assert_array_equal(silhouette(dg([(0, 2), (0, 2)]), c), silhouette(dg([(0, 2)]), c))


def test_silhouette_weighted_example():
    # weights |4 - 0| = 4 and |2 - 1| = 1; tents at t = 1 are 1 and 0
    assert silhouette(dg([(0, 4), (1, 2)]), cfg("silhouette", 1, 2, resolution=2))[0] == 0.8


def test_silhouette_empty_and_zero_weight():
    np.testing.assert_array_equal(silhouette(dg([]), cfg("silhouette")), 0)
    np.testing.assert_array_equal(silhouette(dg([(1, 1)]), cfg("silhouette")), 0)


def test_silhouette_bounds(rng):
    c = cfg("silhouette", 0, 20, resolution=40)
    t = np.linspace(0, 20, 40)
    for _ in range(30):
        d = random_diagram(rng, n=rng.integers(1, 10))
        lam = tents(d.births, d.deaths, t)
        s = silhouette(d, c)
        assert np.all(s >= lam.min(0) - 1e-12) and np.all(s <= lam.max(0) + 1e-12)


# --- persistence image -----------------------------------------------------------


def test_image_empty():
    np.testing.assert_array_equal(persistence_image(dg([]), cfg("image")), np.zeros(100))


@settings(max_examples=40, deadline=None)
@given(point_lists)
def test_image_linearity_exact(points):
    c = cfg("image", 0, 16, sigma=0.7)
    one = persistence_image(dg(points), c)
    two = persistence_image(dg(points + points), c)
    np.testing.assert_array_equal(two, 2 * one)


def test_image_unit_mass_against_quadrature():
    # transformed point (4.5, 5.0) is the centre of the 10x10 grid
    c = cfg("image", -0.5, 9.5, sigma=0.3)
    b, p = 4.5, 5.0
    out = persistence_image(dg([(b, b + p)]), c)
    x_edges, y_edges = persistence_image_grid(c)
    ref = gaussian_cell_quadrature(b, p, c.sigma, x_edges, y_edges)
    assert abs(out.sum() - 1.0) < 0.02
    assert abs(ref.sum() - 1.0) < 0.02
    np.testing.assert_allclose(out.reshape(10, 10), ref, atol=0.02)


def test_image_axes_orientation():
    # persistence runs down the rows, birth across the columns
    out = persistence_image(dg([(8.5, 8.5 + 0.5)]), cfg("image", 0, 10, sigma=0.05)).reshape(10, 10)
    assert np.unravel_index(out.argmax(), out.shape) == (0, 8)


# --- heat kernel -----------------------------------------------------------------


def test_heat_diagonal_cancels():
    c = cfg("heat", 0, 10, sigma=0.1)
    out = heat_kernel(dg([(3.0, 3.0), (7.25, 7.25), (3.0, 3.0)]), c)
    assert np.max(np.abs(out)) < 1e-12


def test_heat_diagonal_cancels_random(rng):
    c = cfg("heat", 0, 10, sigma=0.8)
    t = rng.uniform(0, 10, 20)
    assert np.max(np.abs(heat_kernel(dg(np.column_stack([t, t])), c))) < 1e-12


def test_heat_positive_at_point():
    c = cfg("heat", 0, 10, sigma=0.1)
    out = heat_kernel(dg([(2.5, 7.5)]), c).reshape(10, 10)
    assert out[7, 2] > 0
    assert out[2, 7] < 0


def test_heat_matches_two_gaussian_oracle():
    # cell averages of the direct source-minus-mirror density
    c = cfg("heat", 0, 4, sigma=0.6, resolution=8)
    b, d = 1.3, 2.9
    edges = np.linspace(0, 4, 9)
    area = (edges[1] - edges[0]) ** 2
    src = gaussian_cell_quadrature(b, d, c.sigma, edges, edges)
    mir = gaussian_cell_quadrature(d, b, c.sigma, edges, edges)
    out = heat_kernel(dg([(b, d)]), c).reshape(8, 8)
    np.testing.assert_allclose(out, (src - mir) / area, atol=1e-4)


def test_heat_closed_form_normalization():
    # a wide grid cell average converges to the point value 1/(4 pi t) exp(-r^2/4t), t = sigma^2/2
    sigma, h = 0.5, 1e-3
    c = VectorizerConfig("heat", resolution=2, sigma=sigma, sample_range=(-h, h))
    t = sigma**2 / 2
    p = (0.2, 0.9)
    out = heat_kernel(dg([p]), c).reshape(2, 2)
    z = np.array([0.0, 0.0])
    expected = (np.exp(-np.sum((z - p) ** 2) / (4 * t)) - np.exp(-np.sum((z - p[::-1]) ** 2) / (4 * t))) / (4 * np.pi * t)
    assert out[0, 0] == pytest.approx(expected, abs=1e-5)


def test_heat_antisymmetry(rng):
    c = cfg("heat", 0, 10, sigma=0.7)
    for _ in range(10):
        d = random_diagram(rng)
        flipped = dg(d.points[:, ::-1])
        np.testing.assert_allclose(heat_kernel(flipped, c), -heat_kernel(d, c), atol=1e-12)


# --- shared properties -------------------------------------------------------------

ALL = [
    cfg("betti", 0, 20),
    cfg("landscape", 0, 20, layers=3),
    cfg("silhouette", 0, 20),
    cfg("image", 0, 20, sigma=0.5),
    cfg("heat", 0, 20, sigma=0.5),
]


@pytest.mark.parametrize("c", ALL, ids=lambda c: c.name)
def test_permutation_invariance(c, rng):
    for _ in range(10):
        d = random_diagram(rng, n=8)
        perm = rng.permutation(len(d))
        shuffled = dg(d.points[perm])
        np.testing.assert_array_equal(vectorize(shuffled, c), vectorize(d, c))


@pytest.mark.parametrize("c", ALL, ids=lambda c: c.name)
def test_determinism_and_empty(c, rng):
    d = random_diagram(rng, n=6)
    assert vectorize(d, c).tobytes() == vectorize(d, c).tobytes()
    out = vectorize(dg([]), c)
    assert out.shape == (c.length,) and not out.any()


# --- assembly ----------------------------------------------------------------------


def image_pairs(rng, n_fields=18):
    return [(random_diagram(rng, dim=0), random_diagram(rng, dim=1)) for _ in range(n_fields)]


def test_assemble_lengths(rng):
    pairs = image_pairs(rng)
    assert len(assemble(pairs, VectorizerConfig("betti"), "concat").values) == 2700
    assert len(assemble(pairs, VectorizerConfig("heat"), "H0").values) == 1800
    assert len(assemble(pairs, VectorizerConfig("heat"), "fused").values) == 1800
    fv = assemble(pairs, VectorizerConfig("landscape", layers=3), "concat")
    assert len(fv.values) == 36 * 225
    assert [(s.field_index, s.dim_tag) for s in fv.layout[:3]] == [(0, "H0"), (0, "H1"), (1, "H0")]


def test_assemble_fused_is_betti_sum(rng):
    pairs = image_pairs(rng)
    c = cfg("betti", 0, 10)
    fused = assemble(pairs, c, "fused")
    concat = assemble(pairs, c, "concat")
    for f in range(18):
        np.testing.assert_array_equal(fused.channel(f, "fused"), concat.channel(f, "H0") + concat.channel(f, "H1"))


def test_assemble_wrong_count(rng):
    with pytest.raises(ValueError, match="18"):
        assemble(image_pairs(rng, 17), VectorizerConfig("betti"), "H0")


def test_assemble_unknown_strategy(rng):
    with pytest.raises(ValueError, match="strategy"):
        assemble(image_pairs(rng), VectorizerConfig("betti"), "both")


def test_assemble_uses_channel_ranges(rng):
    pairs = [(dg([(0, 2)], 0), dg([(1, 3)], 1))] * 2
    ranges = SampleRanges({(0, "H0"): (0, 3), (1, "H0"): (10, 12)})
    fv = assemble(pairs, cfg("betti", resolution=4), "H0", ranges, n_fields=2)
    np.testing.assert_array_equal(fv.channel(0, "H0"), [1, 1, 0, 0])
    np.testing.assert_array_equal(fv.channel(1, "H0"), 0)


# --- sample ranges -----------------------------------------------------------------


def test_fit_ranges_example():
    training = [[(dg([(0, 2)], 0), dg([], 1))], [(dg([(1, 3)], 0), dg([], 1))]]
    r = fit_sample_ranges(training)
    assert r[(0, "H0")] == (0.0, 3.0)
    assert r[(0, "fused")] == (0.0, 3.0)
    assert r[(0, "H1")] == (0.0, 1.0) and (0, "H1") in r.flagged
    assert (0, "H0") not in r.flagged


def test_fit_ranges_degenerate_widened():
    r = fit_sample_ranges([[(dg([(2, 2)], 0), dg([], 1))]])
    assert r[(0, "H0")] == (2.0, 3.0)


def test_fit_ranges_empty_training():
    with pytest.raises(ValueError):
        fit_sample_ranges([])


def test_ranges_roundtrip():
    r = SampleRanges({(0, "H0"): (0.0, 3.5), (2, "fused"): (-1.0, 1.0)}, {(2, "fused")})
    back = SampleRanges.from_dict(r.to_dict())
    assert back.ranges == r.ranges and back.flagged == r.flagged


def test_fit_ranges_on_mnist(mnist_train):
    from tdamnist.pipeline import extract_diagrams

    diagrams = extract_diagrams(mnist_train.images[:20])
    r = fit_sample_ranges(diagrams)
    lo, hi = r[(0, "H0")]
    assert np.isfinite(lo) and np.isfinite(hi) and hi - lo > 0
    x, layout = vectorize_dataset(diagrams, VectorizerConfig("heat"), "fused", r)
    assert x.shape == (20, 1800) and np.isfinite(x).all() and len(layout) == 18
