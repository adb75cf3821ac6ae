import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import j0

from mimolink import corrchan, seeding
from mimolink.corrchan import (
    CorrelationSpec,
    DopplerSpec,
    FadingSpec,
    Scenario,
    kronecker_correlation,
)
from mimolink.errors import DimensionError, InvalidParameterError


def explicit_kron(a, b):
    # entry layout written out by hand
    ac, bc = np.conj(a), np.conj(b)
    return np.array([
        [1, b, a, a * b],
        [bc, 1, a * bc, a],
        [ac, ac * b, 1, b],
        [ac * bc, ac, bc, 1],
    ], dtype=complex)


def rng(*k):
    return seeding.derive(1234, *k)


# correlation -----------------------------------------------------------------

@pytest.mark.parametrize("a", [0.0, 0.3, 0.7, 1.0])
@pytest.mark.parametrize("b", [0.0, 0.2 + 0.1j, 0.5j, -0.9])
def test_kronecker_matches_explicit_layout(a, b):
    r = kronecker_correlation(CorrelationSpec(a, b))
    np.testing.assert_allclose(r, explicit_kron(a, b), atol=1e-15)


def test_kronecker_examples():
    np.testing.assert_array_equal(kronecker_correlation(CorrelationSpec(0, 0)), np.eye(4))
    expected = [[1, .2, .5, .1], [.2, 1, .1, .5], [.5, .1, 1, .2], [.1, .5, .2, 1]]
    np.testing.assert_allclose(kronecker_correlation(CorrelationSpec(0.5, 0.2)), expected, atol=1e-15)
    full = kronecker_correlation(CorrelationSpec(1, 1))
    np.testing.assert_allclose(full, np.ones((4, 4)))
    assert np.linalg.matrix_rank(full) == 1


def test_correlation_magnitude_rejected():
    with pytest.raises(InvalidParameterError):
        CorrelationSpec(1.01, 0)
    with pytest.raises(InvalidParameterError):
        CorrelationSpec(0, 0.8 + 0.8j)


@settings(max_examples=60, deadline=None)
@given(
    st.floats(0, 1), st.floats(-np.pi, np.pi),
    st.floats(0, 1), st.floats(-np.pi, np.pi),
)
def test_coloring_reproduces_correlation(ma, pa, mb, pb):
    r = kronecker_correlation(CorrelationSpec(ma * np.exp(1j * pa), mb * np.exp(1j * pb)))
    assert np.allclose(r, r.conj().T)
    assert np.allclose(np.diag(r), 1)
    root = corrchan.correlation_root(r)
    # eigen-clipped fallback is exact to rounding as well
    np.testing.assert_allclose(root @ root.conj().T, r, atol=1e-10)


def test_correlation_root_rejects_indefinite():
    bad = np.array([[1, 2], [2, 1]], dtype=complex)
    with pytest.raises(InvalidParameterError):
        corrchan.correlation_root(bad)


def test_vec_roundtrip():
    h = np.arange(4).reshape(2, 2) + 1j
    v = corrchan.matrix_to_vec(h)
    assert v[2 * 1 + 0] == h[0, 1]
    np.testing.assert_array_equal(corrchan.vec_to_matrix(v), h)


# profiles ----------------------------------------------------------------------

@pytest.mark.parametrize("kind,n_taps,span", [("poor", 4, 2e-6), ("rich", 12, 5e-6)])
def test_scenario_profiles(kind, n_taps, span):
    p = corrchan.scenario_profile(kind)
    assert len(p.taps) == n_taps
    assert abs(p.powers.sum() - 1) < 1e-12
    assert np.all(np.diff(p.delays) > 0)
    assert p.delays[-1] == pytest.approx(span)
    assert p.los_index == 0
    assert sum(t.carries_los for t in p.taps) == 1


def test_scenario_correlation_presets():
    assert corrchan.scenario_correlation(Scenario.POOR).alpha == 0.7
    assert corrchan.scenario_correlation("rich").beta == 0.3


def test_doppler():
    d = DopplerSpec.from_kmh(60.0)
    assert d.max_doppler == pytest.approx(60 / 3.6 * 2e9 / 2.99792458e8, rel=1e-12)
    with pytest.raises(InvalidParameterError):
        DopplerSpec(-1.0)


def test_fading_spec_invariants():
    with pytest.raises(InvalidParameterError):
        FadingSpec("rayleigh", 1.0)
    with pytest.raises(InvalidParameterError):
        FadingSpec.from_k(-0.5)
    assert FadingSpec.from_k(0).kind.value == "rayleigh"


# fading process ------------------------------------------------------------------

def test_doppler_autocorrelation_matches_bessel():
    fd, dt, n = 100.0, 1e-4, 200_000
    x = corrchan.fading_process(fd, n, dt, rng(1))
    lags = int(5 / fd / dt)
    ac = np.real(corrchan.autocorrelation(x, lags))
    ref = j0(2 * np.pi * fd * dt * np.arange(lags + 1))
    assert np.max(np.abs(ac - ref)) < 0.05


def test_fading_process_unit_power():
    x = corrchan.fading_process(50.0, 100_000, 1e-4, rng(2))
    assert np.mean(np.abs(x) ** 2) == pytest.approx(1.0, abs=0.05)


def test_fading_time_offset_continues_sequence():
    a = corrchan.fading_process(80.0, 100, 1e-4, rng(3))
    b = corrchan.fading_process(80.0, 50, 1e-4, rng(3), t0=50e-4)
    np.testing.assert_allclose(a[50:], b, atol=1e-9)


# channel generation ------------------------------------------------------------------

def _series(kind="poor", fading=FadingSpec(), corr=None, n=100_000, speed=60.0, seed=4):
    prof = corrchan.scenario_profile(kind)
    corr = corr or CorrelationSpec(0.7, 0.7)
    return corrchan.generate_channel(prof, fading, corr, DopplerSpec.from_kmh(speed), n, 1e-3, rng(seed))


def test_spatial_correlation_recovered():
    corr = CorrelationSpec(0.7, 0.7)
    stats = corrchan.estimate_statistics(_series(corr=corr), max_lag=1)
    assert np.linalg.norm(stats.correlation - kronecker_correlation(corr)) <= 0.05


def test_tap_powers():
    s = _series(n=50_000)
    power = np.mean(np.abs(s.gains) ** 2, axis=(1, 2, 3))
    np.testing.assert_allclose(power, corrchan.scenario_profile("poor").powers, rtol=0.1)


def test_k_factor_recovered_normalized():
    s = _series(fading=FadingSpec("rician", 6.0, "normalized"), corr=CorrelationSpec())
    k = corrchan.estimate_statistics(s, max_lag=1).k_factor
    assert 4.8 <= k <= 7.2


def test_additive_los_adds_power():
    s = _series(fading=FadingSpec("rician", 6.0, "additive"), corr=CorrelationSpec(), n=50_000)
    p0 = corrchan.scenario_profile("poor").powers[0]
    assert np.mean(np.abs(s.gains[0]) ** 2) == pytest.approx(7 * p0, rel=0.1)


def test_rayleigh_k_estimate_small():
    s = _series(corr=CorrelationSpec())
    assert corrchan.estimate_statistics(s, max_lag=1).k_factor < 0.2


def test_low_sample_warning():
    s = _series(n=2000)
    with pytest.warns(RuntimeWarning):
        stats = corrchan.estimate_statistics(s, max_lag=4)
    assert stats.low_sample_warning


def test_rician_needs_los_tap():
    prof = corrchan.MultipathProfile(
        taps=(corrchan.TapProfile(0.0, 1.0, carries_los=False),), name="nlos"
    )
    with pytest.raises(InvalidParameterError):
        corrchan.generate_channel(prof, FadingSpec.from_k(2.0), CorrelationSpec(), DopplerSpec(1.0), 10, 1e-3, rng(5))


def test_generation_is_deterministic():
    a = _series(n=500, seed=9).gains
    b = _series(n=500, seed=9).gains
    np.testing.assert_array_equal(a, b)


def test_snapshots_shape_and_power():
    prof = corrchan.scenario_profile("rich")
    snaps = corrchan.draw_snapshots(prof, FadingSpec(), CorrelationSpec(0.3, 0.3), 20_000, rng(6))
    assert snaps.shape == (20_000, 12, 2, 2)
    np.testing.assert_allclose(np.mean(np.abs(snaps) ** 2, axis=(0, 2, 3)), prof.powers, rtol=0.1)


# frequency response --------------------------------------------------------------

def dft_oracle(gains, delays, n_symbols, n_sc, df, step):
    out = np.zeros((n_symbols, n_sc, 2, 2), dtype=complex)
    for s in range(n_symbols):
        for k in range(n_sc):
            for l, tau in enumerate(delays):
                out[s, k] += gains[l, s * step] * np.exp(-2j * np.pi * k * df * tau)
    return out


def test_freq_response_matches_dft_oracle():
    series = _series(kind="rich", n=56, seed=7)
    grid = corrchan.freq_response(series, 28, 24, 15e3, 2e-3)
    ref = dft_oracle(series.gains, series.delays, 28, 24, 15e3, 2)
    assert np.max(np.abs(grid.h - ref)) <= 1e-12


def test_freq_response_single_tap_is_flat():
    prof = corrchan.MultipathProfile(taps=(corrchan.TapProfile(0.0, 1.0),), name="flat")
    series = corrchan.generate_channel(prof, FadingSpec(), CorrelationSpec(), DopplerSpec(0.0), 3, 1e-3, rng(8))
    grid = corrchan.freq_response(series, 3, 12, 15e3, 1e-3)
    np.testing.assert_allclose(grid.h, np.broadcast_to(series.gains[0][:, None], grid.h.shape), atol=1e-15)


def test_freq_response_rejects_fractional_step():
    series = _series(n=20, seed=7)
    with pytest.raises(DimensionError):
        corrchan.freq_response(series, 10, 12, 15e3, 1.5e-3)


def test_channel_grid_window():
    series = _series(n=28, seed=7)
    grid = corrchan.freq_response(series, 28, 12, 15e3, 1e-3)
    sub = grid.symbols(14, 28)
    np.testing.assert_array_equal(sub.h, grid.h[14:28])


def test_autocorrelation_of_constant_is_one():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        ac = corrchan.autocorrelation(np.ones(100, dtype=complex), 5)
    np.testing.assert_allclose(ac, 1.0)
