import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mimolink import seeding
from mimolink.capacity import ergodic_capacity, instantaneous_capacity
from mimolink.errors import InvalidParameterError
from mimolink.linkctl import LinkConfig


def logdet_oracle(h, rho):
    m = np.eye(2) + rho / 2 * h @ h.conj().T
    return math.log2(np.linalg.det(m).real)


@pytest.mark.parametrize("rho", np.logspace(-2, 4, 25))
def test_identity_channel_closed_form(rho):
    eye = np.eye(2, dtype=complex)
    assert abs(instantaneous_capacity(eye, rho, "sm") - 2 * math.log2(1 + rho / 2)) <= 1e-12
    assert abs(instantaneous_capacity(eye, rho, "td") - math.log2(1 + rho)) <= 1e-12


@settings(max_examples=80, deadline=None)
@given(st.lists(st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False), min_size=4, max_size=4),
       st.floats(0, 1e3))
def test_sm_matches_log_det(entries, rho):
    h = np.array(entries).reshape(2, 2)
    assert instantaneous_capacity(h, rho, "sm") == pytest.approx(logdet_oracle(h, rho), abs=1e-9)


def test_td_never_exceeds_sm():
    r = seeding.derive(1, 1)
    h = r.standard_normal((1000, 2, 2)) + 1j * r.standard_normal((1000, 2, 2))
    assert np.all(instantaneous_capacity(h, 100.0, "td") <= instantaneous_capacity(h, 100.0, "sm") + 1e-12)


def test_negative_snr_rejected():
    with pytest.raises(InvalidParameterError):
        instantaneous_capacity(np.eye(2), -1.0, "sm")


def test_ergodic_iid_rayleigh_reference():
    # i.i.d. single-tap reference by brute-force log-det over independent draws
    cfg = LinkConfig(alpha=0.0, beta=0.0, snr_db=10.0)
    mean, stderr = ergodic_capacity(cfg, 20_000, seeding.derive(2, 2))
    r = seeding.derive(3, 3)
    h = (r.standard_normal((20_000, 2, 2)) + 1j * r.standard_normal((20_000, 2, 2))) / math.sqrt(2)
    ref = np.mean([logdet_oracle(x, 10.0) for x in h])
    assert abs(mean - ref) < 4 * stderr * math.sqrt(2)
    assert stderr < 0.01 * mean


def test_ergodic_grows_with_snr_and_los():
    rng = lambda: seeding.derive(4, 4)
    low, _ = ergodic_capacity(LinkConfig(snr_db=5.0), 2000, rng())
    high, _ = ergodic_capacity(LinkConfig(snr_db=20.0), 2000, rng())
    los, _ = ergodic_capacity(LinkConfig(snr_db=20.0, k_factor=6.0), 2000, rng())
    assert low < high < los


def test_subcarrier_method_close_to_flat():
    cfg = LinkConfig(snr_db=15.0, scenario="rich")
    flat, e1 = ergodic_capacity(cfg, 3000, seeding.derive(5, 5))
    sub, e2 = ergodic_capacity(cfg.with_(capacity_method="subcarrier"), 3000, seeding.derive(5, 5))
    assert abs(flat - sub) < 0.05 * flat


def test_minimum_samples():
    with pytest.raises(InvalidParameterError):
        ergodic_capacity(LinkConfig(), 50, seeding.derive(6))
