import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats
from scipy.stats import qmc

from sqmc.lds import (ConfigurationError, PointSet, SobolSpec, load_direction_numbers,
                      owen_scramble, scrambled_sobol, sobol_generate, star_discrepancy_2d)


def radical_inverse_gray(i, bits=31):
    """Van der Corput value of the Gray code of i (first Sobol' coordinate)."""
    g = i ^ (i >> 1)
    return sum(((g >> k) & 1) * 2.0 ** -(k + 1) for k in range(bits))


def dyadic_counts(col, m):
    return np.bincount(np.floor(col * 2 ** m).astype(int), minlength=2 ** m)


def test_first_point_is_origin():
    assert sobol_generate(SobolSpec(2), 1).values.tolist() == [[0.0, 0.0]]


def test_first_dimension_is_van_der_corput():
    pts = sobol_generate(SobolSpec(1), 4).values.ravel()
    assert pts.tolist() == [0.0, 0.5, 0.75, 0.25]
    pts = sobol_generate(SobolSpec(1), 200).values.ravel()
    assert pts.tolist() == [radical_inverse_gray(i) for i in range(200)]


@pytest.mark.parametrize("d", [2, 5, 21, 64])
def test_matches_scipy_unscrambled(d):
    ours = sobol_generate(SobolSpec(d), 512).values
    with np.testing.suppress_warnings() as sup:
        sup.filter(UserWarning)
        ref = qmc.Sobol(d, scramble=False).random(512)
    np.testing.assert_array_equal(ours, ref)


@pytest.mark.parametrize("m", range(0, 11))
def test_coordinates_fill_dyadic_intervals(m):
    pts = sobol_generate(SobolSpec(2), 2 ** m).values
    for j in range(2):
        assert (dyadic_counts(pts[:, j], m) == 1).all()


def test_dimension_beyond_table_is_rejected():
    with pytest.raises(ConfigurationError):
        SobolSpec(len(load_direction_numbers()) + 1)


def test_bundled_table_has_enough_dimensions():
    table = load_direction_numbers()
    assert len(table) >= 21
    assert table.degree[0] == 0
    assert table.initial[2] == (1, 3)


def test_point_set_is_immutable_and_checked():
    ps = PointSet([[0.1, 0.2]])
    assert (ps.n, ps.d) == (1, 2)
    with pytest.raises(ValueError):
        ps.values[0, 0] = 0.5
    with pytest.raises(ValueError):
        PointSet([[1.0, 0.2]])


def test_scrambling_is_deterministic():
    spec = SobolSpec(3)
    pts = sobol_generate(spec, 64)
    assert owen_scramble(pts, spec, 7) == owen_scramble(pts, spec, 7)
    assert owen_scramble(pts, spec, 7) != owen_scramble(pts, spec, 8)


def test_scrambling_rejects_non_power_of_two():
    spec = SobolSpec(2)
    with pytest.raises(ConfigurationError):
        owen_scramble(sobol_generate(spec, 48), spec, 1)


def test_scrambled_points_avoid_endpoints():
    v = scrambled_sobol(4096, 4, 99).values
    assert v.min() > 0.0 and v.max() < 1.0


@pytest.mark.parametrize("m", [0, 1, 4, 8, 12])
@pytest.mark.parametrize("seed", [0, 1, 2 ** 63 + 5])
def test_net_structure_survives_scrambling(m, seed):
    pts = scrambled_sobol(2 ** m, 5, seed).values
    for j in range(5):
        assert (dyadic_counts(pts[:, j], m) == 1).all()


@pytest.mark.parametrize("m", [4, 7])
def test_two_dimensional_elementary_intervals(m):
    # first two Sobol' coordinates form a (0, m, 2)-net, before and after scrambling
    for pts in (sobol_generate(SobolSpec(2), 2 ** m).values, scrambled_sobol(2 ** m, 2, 3).values):
        for a in range(m + 1):
            ix = np.floor(pts[:, 0] * 2 ** a).astype(int)
            iy = np.floor(pts[:, 1] * 2 ** (m - a)).astype(int)
            counts = np.bincount(ix * 2 ** (m - a) + iy, minlength=2 ** m)
            assert (counts == 1).all()


def test_scrambled_marginals_are_uniform():
    pooled = np.concatenate([scrambled_sobol(16, 2, s).values[:, 0] for s in range(200)])
    observed = np.bincount(np.floor(pooled * 64).astype(int), minlength=64)
    assert stats.chisquare(observed).pvalue > 0.01


def test_star_discrepancy_single_centre_point():
    assert star_discrepancy_2d(np.array([[0.5, 0.5]])) == pytest.approx(0.75)


@pytest.mark.parametrize("eps", [1e-3, 1e-6, 1e-9])
def test_star_discrepancy_point_near_corner(eps):
    # the empty box [0, 1) x [0, 1 - eps) has volume 1 - eps
    d = star_discrepancy_2d(np.array([[1 - eps, 1 - eps]]))
    assert d == pytest.approx(1 - eps, abs=1e-12)


def test_star_discrepancy_rejects_other_dimensions():
    with pytest.raises(ValueError):
        star_discrepancy_2d(np.zeros((4, 3)))


def grid_lower_bound(x, G):
    b = np.arange(1, G + 1) / G
    inside = (x[:, 0][:, None, None] <= b[None, :, None]) & (x[:, 1][:, None, None] <= b[None, None, :])
    frac = inside.mean(axis=0)
    return np.abs(frac - b[:, None] * b[None, :]).max()


@settings(max_examples=25, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 0.999), st.floats(0, 0.999)), min_size=1, max_size=30))
def test_star_discrepancy_brackets_grid_search(pts):
    x = np.array(pts)
    G = 200
    exact = star_discrepancy_2d(x)
    approx = grid_lower_bound(x, G)
    assert approx <= exact + 1e-12
    assert exact <= approx + 2.0 / G + 1e-12


def test_sobol_beats_random_discrepancy():
    sobol = star_discrepancy_2d(sobol_generate(SobolSpec(2), 256))
    rng = np.random.default_rng(0)
    randoms = [star_discrepancy_2d(rng.random((256, 2))) for _ in range(100)]
    assert sobol < np.median(randoms)
