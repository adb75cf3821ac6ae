"""Instantaneous and ergodic Shannon capacity of the SM and TD effective channels."""

from dataclasses import dataclass
import math

import numpy as np

from mimolink import corrchan
from mimolink.errors import InvalidParameterError
from mimolink.phy import Mode

MIN_ERGODIC_SAMPLES = 100


@dataclass(frozen=True)
class CapacitySample:
    bits_per_s_per_hz: float
    mode: Mode
    snr_db: float


def instantaneous_capacity(h, snr_linear, mode):
    """Open-loop capacity in bit/s/Hz with equal power per transmit antenna.

    SM: ``log2 det(I + rho/2 H H^H)``; TD: ``log2(1 + rho/2 ||H||_F^2)``.
    ``h`` may carry leading batch dimensions.
    """
    if snr_linear < 0:
        raise InvalidParameterError("snr_linear must be >= 0")
    h = np.asarray(h, dtype=complex)
    mode = Mode(mode)
    half = snr_linear / 2.0
    if mode is Mode.TD:
        fro = np.sum(np.abs(h) ** 2, axis=(-1, -2))
        return np.log2(1.0 + half * fro)
    # det(I + c H H^H) = 1 + c ||H||_F^2 + c^2 |det H|^2 for 2x2
    fro = np.sum(np.abs(h) ** 2, axis=(-1, -2))
    det = h[..., 0, 0] * h[..., 1, 1] - h[..., 0, 1] * h[..., 1, 0]
    return np.log2(1.0 + half * fro + half**2 * np.abs(det) ** 2)


def ergodic_capacity(cfg, n_samples, rng, snr_db=None):
    """Monte Carlo mean and standard error of the capacity for ``cfg``.

    Each draw is an independent snapshot of all taps.  With
    ``cfg.capacity_method == "flat"`` the taps are summed into one narrowband
    matrix; ``"subcarrier"`` averages the capacity over the configured
    subcarriers instead.

    Returns
    -------
    mean, stderr : float
    """
    if n_samples < MIN_ERGODIC_SAMPLES:
        raise InvalidParameterError(f"n_samples must be >= {MIN_ERGODIC_SAMPLES}")
    snr_db = cfg.snr_db if snr_db is None else snr_db
    rho = 0.0 if snr_db == -math.inf else 10.0 ** (snr_db / 10.0)
    taps = corrchan.draw_snapshots(cfg.profile, cfg.fading, cfg.correlation, n_samples, rng)
    if cfg.capacity_method == "flat":
        c = instantaneous_capacity(taps.sum(axis=1), rho, cfg.mode)
    else:
        k = np.arange(cfg.n_subcarriers) * cfg.subcarrier_spacing_hz
        phase = np.exp(-2j * np.pi * np.outer(cfg.profile.delays, k))
        h = np.einsum("nlrt,lk->nkrt", taps, phase)
        c = instantaneous_capacity(h, rho, cfg.mode).mean(axis=1)
    mean = float(np.mean(c))
    stderr = float(np.std(c, ddof=1) / math.sqrt(n_samples))
    return mean, stderr
