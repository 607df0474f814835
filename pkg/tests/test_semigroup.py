import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from grushinlab.semigroup import (
    Bump, Gaussian, GaussianX, GridFunction, GridSpec, MollifiedIndicator, PowerSingular,
    SemigroupOperator, apply_semigroup, decay_slope_fit, get_operator, integral, lp_norm,
    sample_function, smoothing_decay_probe, smoothing_exponent,
)

G = GridSpec()


def test_grid_validation():
    with pytest.raises(ValueError):
        GridSpec(nx=16)
    with pytest.raises(ValueError):
        GridSpec(ny=33)
    assert G.hx == pytest.approx(16 / 128)
    assert G.hy == pytest.approx(16 / 128)


def test_grid_function_rejects_nonfinite_and_is_read_only():
    v = np.zeros((G.nx, G.ny))
    v[3, 3] = np.nan
    with pytest.raises(ValueError):
        GridFunction(G, v)
    u = GridFunction(G, np.zeros((G.nx, G.ny)))
    with pytest.raises(ValueError):
        u.values[0, 0] = 1.0


def test_gaussian_center_value():
    u = sample_function(G, Gaussian(1.0, (0, 0), (1, 1)))
    assert u.values[G.nx // 2, G.ny // 2] == 1.0


def test_power_singular_is_finite():
    u = sample_function(G, PowerSingular(exponent=1.0, cutoff=4.0))
    assert np.all(np.isfinite(u.values))
    i, j = G.nx // 2, G.ny // 2
    nb = [u.values[i + 1, j], u.values[i - 1, j], u.values[i, j + 1], u.values[i, j - 1]]
    assert u.values[i, j] == pytest.approx(np.mean(nb))


def test_constant_in_y_profile():
    u = sample_function(G, GaussianX(1.0, 0.0, 1.0))
    assert np.all(u.values == u.values[:, :1])


def test_profile_from_descriptor_dict():
    u = sample_function(G, {"kind": "mollified_indicator", "amplitude": 2.0, "radius": 1.0})
    v = sample_function(G, MollifiedIndicator(2.0, (0.0, 0.0), 1.0))
    assert np.array_equal(u.values, v.values)
    with pytest.raises(ValueError):
        sample_function(G, {"kind": "nope"})


def test_lp_norm_examples():
    box = GridSpec(1.0, 1.0, 33, 32)
    one = GridFunction(box, np.ones((33, 32)))
    assert lp_norm(one, 1) == pytest.approx(4.0, rel=1e-14)
    g = sample_function(G, Gaussian(1.0, (0, 0), (1, 1)))
    assert lp_norm(g, math.inf) == 1.0
    fine = GridSpec(8, 8, 257, 256)
    g = sample_function(fine, Gaussian(1.0, (0, 0), (1, 1)))
    # int exp(-2x^2 - 2y^2) = pi/2
    assert abs(lp_norm(g, 2) - math.sqrt(math.pi / 2)) < 1e-6
    with pytest.raises(ValueError):
        lp_norm(g, 0.5)


def test_identity_at_tiny_time():
    u = sample_function(G, Gaussian(1.0, (0.5, -0.3), (1, 1)))
    assert np.abs(apply_semigroup(u, 1e-8).values - u.values).max() < 1e-6


def test_constant_in_y_is_one_dimensional_heat_flow():
    u = sample_function(G, GaussianX(1.0, 0.0, 1.0))
    t = 0.5
    out = apply_semigroup(u, t).values
    assert np.abs(out - out[:, :1]).max() < 1e-12
    # exp(-x^2) evolved under (1/2) d^2/dx^2
    exact = np.exp(-G.x ** 2 / (1 + 2 * t)) / math.sqrt(1 + 2 * t)
    assert np.abs(out[:, 0] - exact).max() < 2e-3


def test_mehler_route_agrees_with_generator():
    u = sample_function(G, Gaussian(1.0, (0, 0), (1, 1)))
    a = apply_semigroup(u, 0.5, method="generator").values
    b = apply_semigroup(u, 0.5, method="mehler").values
    assert np.abs(a - b).max() < 5e-3


def test_cache_matrices_nonnegative_and_mode_symmetric():
    op = SemigroupOperator(G)
    mats = op.cache(0.3).matrices
    assert mats.min() >= 0
    assert mats.shape == (G.ny // 2 + 1, G.nx, G.nx)
    # frequencies enter through |xi| only, so the symbol is even in m
    m = np.fft.fftfreq(G.ny, d=1.0 / G.ny)
    xi = np.pi * np.abs(m) / G.y_half_width
    sym = (4 / G.hy ** 2) * np.sin(0.5 * xi * G.hy) ** 2
    assert np.allclose(sym[1:G.ny // 2], sym[-1:-G.ny // 2:-1])


def test_resolution_warning():
    op = get_operator(G)
    assert op.resolution_warning(1e-4) is not None
    assert op.resolution_warning(0.5) is None


def _bump():
    return sample_function(G, Bump(1.0, (0.0, 0.0), (0.1, 0.1)))


def test_decay_slopes():
    t = np.linspace(0.2, 1.0, 9)
    f = decay_slope_fit(_bump(), 1, math.inf, t)
    assert abs(f.slope + 1.5) < 0.08
    f = decay_slope_fit(_bump(), 1, 2, t)
    assert abs(f.slope + 0.75) < 0.08
    with pytest.raises(ValueError):
        decay_slope_fit(_bump(), 1, 2, [0.2, 0.3])


def test_equal_exponents_flat_and_contracting():
    u = _bump()
    t = np.linspace(0.2, 1.0, 9)
    f = decay_slope_fit(u, 1, 1, t)
    assert abs(f.slope) < 1e-8
    for p in (2, math.inf):
        f = decay_slope_fit(u, p, p, t)
        assert np.all(f.norms <= lp_norm(u, p) * (1 + 1e-10))


def test_smoothing_exponent_value():
    assert smoothing_exponent(2, 4, 3) == pytest.approx(0.375)


def test_probe_smooth_data_goes_to_zero():
    phi = sample_function(G, Gaussian(1.0, (0, 0), (1, 1)))
    t = np.geomspace(0.5, 0.02, 6)
    r = smoothing_decay_probe(phi, 2, 4, t)
    assert r.eventually_decreasing
    assert np.all(r.values <= t ** r.alpha * lp_norm(phi, 4) * (1 + 1e-10))


@pytest.mark.slow
def test_probe_singular_data_fine_grid():
    g = GridSpec(8, 8, 513, 512)
    phi = sample_function(g, PowerSingular(1.0, 4.0))
    r = smoothing_decay_probe(phi, 2, 4, np.geomspace(1e-1, 1e-3, 7), operator=SemigroupOperator(g))
    assert r.eventually_decreasing
    assert r.values[-1] < 0.5 * r.values[0]


# ---------------------------------------------------------------- properties --

OP = get_operator(G)
profiles = st.builds(
    Gaussian,
    st.floats(-2, 2),
    st.tuples(st.floats(-2, 2), st.floats(-2, 2)),
    st.tuples(st.floats(0.3, 2), st.floats(0.3, 2)),
)
times = st.sampled_from([0.05, 0.1, 0.5, 1.0])


@settings(max_examples=15, deadline=None)
@given(profiles, times)
def test_mass_conservation(prof, t):
    u = sample_function(G, Gaussian(abs(prof.amplitude) + 0.1, prof.center, prof.widths))
    m0 = integral(u)
    assert abs(integral(OP.apply(u, t)) - m0) < 1e-3 * abs(m0)


@settings(max_examples=10, deadline=None)
@given(profiles)
def test_semigroup_law(prof):
    u = sample_function(G, prof)
    scale = max(np.abs(u.values).max(), 1e-300)
    for s in (0.1, 0.5):
        for t in (0.1, 0.5):
            lhs = OP.apply(OP.apply(u, t), s).values
            rhs = OP.apply(u, s + t).values
            assert np.abs(lhs - rhs).max() < 1e-6 * scale


@settings(max_examples=15, deadline=None)
@given(profiles, profiles, times)
def test_order_preservation(a, b, t):
    u = sample_function(G, a)
    v = u + np.abs(sample_function(G, b).values)
    assert np.all(OP.apply(u, t).values <= OP.apply(v, t).values + 1e-12)


@settings(max_examples=15, deadline=None)
@given(profiles, times)
def test_nonnegativity(prof, t):
    u = sample_function(G, Gaussian(abs(prof.amplitude), prof.center, prof.widths))
    assert OP.apply(u, t).values.min() >= -1e-12


@settings(max_examples=15, deadline=None)
@given(profiles, times, st.sampled_from([1, 2, math.inf]))
def test_contraction(prof, t, p):
    u = sample_function(G, prof)
    assert lp_norm(OP.apply(u, t), p) <= (1 + 1e-10) * lp_norm(u, p) + 1e-300


@settings(max_examples=10, deadline=None)
@given(profiles, profiles, st.floats(-3, 3), st.floats(-3, 3), times)
def test_linearity(pa, pb, a, b, t):
    u, v = sample_function(G, pa), sample_function(G, pb)
    lhs = OP.apply(u * a + v * b, t).values
    rhs = a * OP.apply(u, t).values + b * OP.apply(v, t).values
    scale = abs(a) * np.abs(u.values).max() + abs(b) * np.abs(v.values).max() + 1e-300
    assert np.abs(lhs - rhs).max() < 1e-12 * scale
