"""Correlated multipath MIMO channel generation.

The 2x2 channel of every tap is coloured with the Kronecker spatial
correlation ``R = R_BS kron R_MS`` and faded in time by independent
sum-of-sinusoids Doppler processes.  A Rician line-of-sight term can be added
to the first tap.

Vectorisation convention: ``vec(H)[2*tx + rx] = H[rx, tx]``, i.e. the base
station (transmit) index is the outer index of the Kronecker product.
"""

from dataclasses import dataclass, field
from enum import Enum
import math
import warnings

import numpy as np

from mimolink.errors import DimensionError, InvalidParameterError

SPEED_OF_LIGHT = 2.99792458e8

N_SINUSOIDS = 32
MIN_STAT_SAMPLES = 10_000


# ---------------------------------------------------------------------------
# spatial correlation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CorrelationSpec:
    """Base-station (``alpha``) and mobile-station (``beta``) correlation."""

    alpha: complex = 0.0
    beta: complex = 0.0

    def __post_init__(self):
        for name in ("alpha", "beta"):
            value = complex(getattr(self, name))
            if not np.isfinite(value) or abs(value) > 1.0 + 1e-12:
                raise InvalidParameterError(f"|{name}| must be <= 1, got {value}")
            object.__setattr__(self, name, value)


def kronecker_correlation(spec):
    """Return the 4x4 spatial correlation ``R_BS kron R_MS``.

    Parameters
    ----------
    spec : CorrelationSpec

    Returns
    -------
    r : ndarray, shape (4, 4), complex
        Hermitian, unit diagonal.  Row 0 reads ``[1, beta, alpha, alpha*beta]``.
    """
    if not isinstance(spec, CorrelationSpec):
        spec = CorrelationSpec(*spec)
    a, b = spec.alpha, spec.beta
    r_bs = np.array([[1.0, a], [np.conj(a), 1.0]], dtype=complex)
    r_ms = np.array([[1.0, b], [np.conj(b), 1.0]], dtype=complex)
    return np.kron(r_bs, r_ms)


def correlation_root(r, tol=1e-10):
    """Colouring matrix ``L`` with ``L @ L.conj().T == r``.

    Cholesky is tried first.  Singular (PSD but not PD) matrices fall back to
    an eigendecomposition with negative eigenvalues clipped to zero.
    """
    r = np.asarray(r, dtype=complex)
    if r.ndim != 2 or r.shape[0] != r.shape[1]:
        raise InvalidParameterError(f"correlation matrix must be square, got shape {r.shape}")
    scale = max(1.0, float(np.max(np.abs(r))))
    if np.max(np.abs(r - r.conj().T)) > tol * scale:
        raise InvalidParameterError("correlation matrix is not Hermitian")
    try:
        return np.linalg.cholesky(r)
    except np.linalg.LinAlgError:
        pass
    w, v = np.linalg.eigh(0.5 * (r + r.conj().T))
    if w.min() < -1e-8 * scale:
        raise InvalidParameterError(f"correlation matrix is not PSD (min eigenvalue {w.min():.3g})")
    return v * np.sqrt(np.clip(w, 0.0, None))


def vec_to_matrix(v):
    """Map ``(..., 4)`` vectors to ``(..., 2, 2)`` rx-by-tx channel matrices."""
    v = np.asarray(v)
    return np.swapaxes(v.reshape(v.shape[:-1] + (2, 2)), -1, -2)


def matrix_to_vec(h):
    """Inverse of :func:`vec_to_matrix`."""
    h = np.asarray(h)
    return np.swapaxes(h, -1, -2).reshape(h.shape[:-2] + (4,))


# ---------------------------------------------------------------------------
# multipath profiles
# ---------------------------------------------------------------------------

class Scenario(str, Enum):
    POOR = "poor"
    RICH = "rich"


@dataclass(frozen=True)
class TapProfile:
    """One resolvable path.

    ``aoa_deg`` and ``angular_spread_deg`` are carried for documentation only;
    the correlation-based model does not use them.
    """

    delay: float
    power: float
    carries_los: bool = False
    aoa_deg: float | None = None
    angular_spread_deg: float | None = None

    def __post_init__(self):
        if not self.delay >= 0:
            raise InvalidParameterError(f"tap delay must be >= 0, got {self.delay}")
        if not self.power > 0:
            raise InvalidParameterError(f"tap power must be > 0, got {self.power}")


@dataclass(frozen=True)
class MultipathProfile:
    taps: tuple
    name: str = "custom"

    def __post_init__(self):
        taps = tuple(self.taps)
        object.__setattr__(self, "taps", taps)
        if not taps:
            raise InvalidParameterError("profile needs at least one tap")
        total = math.fsum(t.power for t in taps)
        if abs(total - 1.0) > 1e-12:
            raise InvalidParameterError(f"tap powers must sum to 1, got {total!r}")
        delays = [t.delay for t in taps]
        if any(b <= a for a, b in zip(delays, delays[1:])):
            raise InvalidParameterError("tap delays must be strictly increasing")
        if sum(t.carries_los for t in taps) > 1:
            raise InvalidParameterError("at most one tap may carry the LOS component")

    @property
    def delays(self):
        return np.array([t.delay for t in self.taps])

    @property
    def powers(self):
        return np.array([t.power for t in self.taps])

    @property
    def los_index(self):
        for i, t in enumerate(self.taps):
            if t.carries_los:
                return i
        return None

    def rms_delay_spread(self):
        p, d = self.powers, self.delays
        mean = np.sum(p * d)
        return float(np.sqrt(np.sum(p * d**2) - mean**2))


# tap count, delay span [s]
_SCENARIO_LAYOUT = {
    Scenario.POOR: (4, 2e-6),
    Scenario.RICH: (12, 5e-6),
}
# real alpha = beta; richer scattering decorrelates the antennas
_SCENARIO_CORRELATION = {
    Scenario.POOR: 0.7,
    Scenario.RICH: 0.3,
}
PDP_DECAY = 1e-6


def scenario_profile(kind):
    """4-tap rural (poor) or 12-tap urban-microcell (rich) profile.

    Delays are uniform over the scenario span and powers decay as
    ``exp(-delay / 1 us)``, renormalised to unit sum.  The first tap carries
    the LOS component when the fading is Rician.
    """
    kind = Scenario(kind)
    n_taps, span = _SCENARIO_LAYOUT[kind]
    delays = np.linspace(0.0, span, n_taps)
    powers = np.exp(-delays / PDP_DECAY)
    powers = powers / powers.sum()
    taps = tuple(
        TapProfile(delay=float(d), power=float(p), carries_los=(i == 0))
        for i, (d, p) in enumerate(zip(delays, powers))
    )
    return MultipathProfile(taps=taps, name=kind.value)


def scenario_correlation(kind):
    """Preset :class:`CorrelationSpec` paired with a scenario."""
    rho = _SCENARIO_CORRELATION[Scenario(kind)]
    return CorrelationSpec(rho, rho)


# ---------------------------------------------------------------------------
# fading and Doppler
# ---------------------------------------------------------------------------

class FadingKind(str, Enum):
    RAYLEIGH = "rayleigh"
    RICIAN = "rician"


class LosPowerMode(str, Enum):
    NORMALIZED = "normalized"
    ADDITIVE = "additive"


@dataclass(frozen=True)
class FadingSpec:
    kind: FadingKind = FadingKind.RAYLEIGH
    k_factor: float = 0.0
    los_power_mode: LosPowerMode = LosPowerMode.ADDITIVE

    def __post_init__(self):
        object.__setattr__(self, "kind", FadingKind(self.kind))
        object.__setattr__(self, "los_power_mode", LosPowerMode(self.los_power_mode))
        k = float(self.k_factor)
        if not (k >= 0 and math.isfinite(k)):
            raise InvalidParameterError(f"k_factor must be >= 0, got {self.k_factor}")
        if self.kind is FadingKind.RAYLEIGH and k != 0:
            raise InvalidParameterError("Rayleigh fading requires k_factor = 0")
        object.__setattr__(self, "k_factor", k)

    @classmethod
    def from_k(cls, k_factor, los_power_mode=LosPowerMode.ADDITIVE):
        """Rayleigh for ``k_factor == 0``, Rician otherwise."""
        kind = FadingKind.RICIAN if k_factor > 0 else FadingKind.RAYLEIGH
        return cls(kind, k_factor, los_power_mode)


@dataclass(frozen=True)
class DopplerSpec:
    speed: float = 0.0  # m/s
    carrier: float = 2e9  # Hz

    def __post_init__(self):
        if not self.speed >= 0:
            raise InvalidParameterError(f"speed must be >= 0, got {self.speed}")
        if not self.carrier > 0:
            raise InvalidParameterError(f"carrier must be > 0, got {self.carrier}")

    @classmethod
    def from_kmh(cls, speed_kmh, carrier=2e9):
        return cls(speed_kmh / 3.6, carrier)

    @property
    def max_doppler(self):
        return self.speed * self.carrier / SPEED_OF_LIGHT


def _fd(doppler):
    return doppler.max_doppler if isinstance(doppler, DopplerSpec) else float(doppler)


def fading_process(doppler, n, sample_period, rng, n_sinusoids=N_SINUSOIDS, t0=0.0):
    """Unit-power complex fading with a classical (Jakes) Doppler spectrum.

    Sum-of-sinusoids generator with ``n_sinusoids`` terms per quadrature
    branch; arrival angles are equally spaced over a quarter circle with a
    random common offset and each term has its own random phase.  The time
    autocorrelation approaches ``J0(2 pi fd tau)``.

    Parameters
    ----------
    doppler : DopplerSpec or float
        Mobility, or the maximum Doppler shift in Hz.
    n : int
        Number of samples.
    sample_period : float
        Seconds between samples.
    rng : numpy.random.Generator
    """
    if n < 1:
        raise InvalidParameterError("n must be >= 1")
    if not sample_period > 0:
        raise InvalidParameterError("sample_period must be > 0")
    m = int(n_sinusoids)
    theta = rng.uniform(-np.pi, np.pi)
    phi = rng.uniform(-np.pi, np.pi, m)
    psi = rng.uniform(-np.pi, np.pi, m)
    alpha = (2 * np.pi * np.arange(1, m + 1) - np.pi + theta) / (4 * m)
    wd = 2 * np.pi * _fd(doppler)
    t = t0 + np.arange(n) * sample_period
    xc = np.cos(np.outer(wd * np.cos(alpha), t) + phi[:, None]).sum(axis=0)
    xs = np.cos(np.outer(wd * np.sin(alpha), t) + psi[:, None]).sum(axis=0)
    return (xc + 1j * xs) / np.sqrt(m)


@dataclass(frozen=True, eq=False)
class TapGainSeries:
    """Time-evolving tap gains, ``gains[tap, sample]`` is a 2x2 rx-by-tx matrix."""

    gains: np.ndarray  # (n_taps, n_samples, 2, 2)
    sample_period: float
    delays: np.ndarray  # (n_taps,) seconds

    @property
    def n_taps(self):
        return self.gains.shape[0]

    @property
    def n_samples(self):
        return self.gains.shape[1]


def _los_matrix():
    return np.ones((2, 2), dtype=complex)


def _apply_los(scatter, power, fading):
    k = fading.k_factor
    if fading.los_power_mode is LosPowerMode.NORMALIZED:
        return np.sqrt(power / (k + 1)) * scatter + np.sqrt(power * k / (k + 1)) * _los_matrix()
    return np.sqrt(power) * scatter + np.sqrt(power * k) * _los_matrix()


def _check_rician(profile, fading):
    if fading.kind is FadingKind.RICIAN and profile.los_index is None:
        raise InvalidParameterError("Rician fading requested but no tap carries the LOS component")


def generate_channel(profile, fading, corr, doppler, n_samples, sample_period, rng, t0=0.0):
    """Draw a :class:`TapGainSeries` for ``n_samples`` instants.

    Each tap gets four independent fading processes (one per antenna pair),
    coloured by the Kronecker root and scaled by the tap power.  Tap/pair
    streams are spawned from ``rng`` in tap-major order.
    """
    _check_rician(profile, fading)
    root = correlation_root(kronecker_correlation(corr))
    n_taps = len(profile.taps)
    streams = rng.spawn(4 * n_taps)
    gains = np.empty((n_taps, n_samples, 2, 2), dtype=complex)
    for l, tap in enumerate(profile.taps):
        g = np.stack([
            fading_process(doppler, n_samples, sample_period, streams[4 * l + p], t0=t0)
            for p in range(4)
        ])
        scatter = vec_to_matrix((root @ g).T)
        if l == profile.los_index and fading.kind is FadingKind.RICIAN:
            gains[l] = _apply_los(scatter, tap.power, fading)
        else:
            gains[l] = np.sqrt(tap.power) * scatter
    return TapGainSeries(gains=gains, sample_period=float(sample_period), delays=profile.delays)


def draw_snapshots(profile, fading, corr, n_draws, rng):
    """Independent single-instant draws of every tap, shape ``(n_draws, n_taps, 2, 2)``.

    Uses the Gaussian marginal of the fading processes; the correlation and
    LOS handling match :func:`generate_channel`.
    """
    _check_rician(profile, fading)
    root = correlation_root(kronecker_correlation(corr))
    n_taps = len(profile.taps)
    g = (rng.standard_normal((n_draws, n_taps, 4)) + 1j * rng.standard_normal((n_draws, n_taps, 4))) / np.sqrt(2)
    scatter = vec_to_matrix(g @ root.T)
    out = np.sqrt(profile.powers)[None, :, None, None] * scatter
    los = profile.los_index
    if los is not None and fading.kind is FadingKind.RICIAN:
        out[:, los] = _apply_los(scatter[:, los], profile.taps[los].power, fading)
    return out


# ---------------------------------------------------------------------------
# frequency response
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ChannelGrid:
    """Per-OFDM-symbol, per-subcarrier 2x2 response, ``h[symbol, subcarrier, rx, tx]``."""

    h: np.ndarray
    subcarrier_spacing: float

    @property
    def n_symbols(self):
        return self.h.shape[0]

    @property
    def n_subcarriers(self):
        return self.h.shape[1]

    def symbols(self, start, stop):
        return ChannelGrid(self.h[start:stop], self.subcarrier_spacing)


def freq_response(series, n_symbols, n_subcarriers, subcarrier_spacing, symbol_period, start=0):
    """Evaluate ``h[s, k] = sum_l H_l(t_s) exp(-j 2 pi k df tau_l)``.

    OFDM symbol ``s`` is taken at sample ``start + s * step`` of the series,
    where ``step = symbol_period / series.sample_period`` must be an integer.
    """
    ratio = symbol_period / series.sample_period
    step = int(round(ratio))
    if step < 1 or abs(ratio - step) > 1e-9 * ratio:
        raise DimensionError("symbol_period must be an integer multiple of the series sample period")
    last = start + (n_symbols - 1) * step
    if n_symbols < 1 or start < 0 or last >= series.n_samples:
        raise DimensionError(
            f"series has {series.n_samples} samples, need index {last} for {n_symbols} symbols"
        )
    g = series.gains[:, start:last + 1:step]
    k = np.arange(n_subcarriers)
    phase = np.exp(-2j * np.pi * np.outer(series.delays, k * subcarrier_spacing))
    h = np.tensordot(g, phase, axes=(0, 0))  # (s, rx, tx, k)
    h = np.ascontiguousarray(np.moveaxis(h, -1, 1))
    return ChannelGrid(h=h, subcarrier_spacing=float(subcarrier_spacing))


# ---------------------------------------------------------------------------
# self-validation statistics
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ChannelStats:
    correlation: np.ndarray  # (4, 4) normalised second moments of vec(H_l / sqrt(p_l))
    tap_power: np.ndarray  # (n_taps,) mean per-entry power
    k_factor: float  # moment-method estimate on the first tap
    lags: np.ndarray  # seconds
    autocorrelation: np.ndarray  # real part, normalised to lag 0, first tap
    n_samples: int
    low_sample_warning: bool


def moment_k_factor(x):
    """Moment-method Rician K estimate from samples of a complex envelope.

    Uses ``Ga = E|x|^2`` and ``Gv = sqrt(E|x|^4 - Ga^2)``;
    ``K = sqrt(Ga^2 - Gv^2) / (Ga - sqrt(Ga^2 - Gv^2))``.
    """
    p = np.abs(np.asarray(x)) ** 2
    ga = p.mean()
    gv2 = np.mean(p**2) - ga**2
    d = ga**2 - gv2
    if d <= 0:
        return 0.0
    los = np.sqrt(d)
    return float(los / (ga - los))


def autocorrelation(x, max_lag):
    """Normalised time-average autocorrelation ``r(tau) / r(0)``, lags ``0..max_lag``.

    The mean is not removed, so a constant series gives 1 at every lag.
    """
    x = np.asarray(x, dtype=complex)
    n = x.size
    max_lag = min(max_lag, n - 1)
    nfft = 1 << int(np.ceil(np.log2(2 * n)))
    f = np.fft.fft(x, nfft)
    r = np.fft.ifft(f * np.conj(f))[:max_lag + 1] / (n - np.arange(max_lag + 1))
    # r[tau] = mean x[t+tau] conj(x[t]); zero-power series is flat by convention
    if abs(r[0]) == 0:
        return np.ones(max_lag + 1, dtype=complex)
    return r / r[0]


def estimate_statistics(series, max_lag=None):
    """Sample statistics of a :class:`TapGainSeries`.

    Fewer than ``MIN_STAT_SAMPLES`` samples sets ``low_sample_warning``
    instead of raising.
    """
    n = series.n_samples
    low = n < MIN_STAT_SAMPLES
    if low:
        warnings.warn(f"only {n} samples; statistics are unreliable", RuntimeWarning, stacklevel=2)
    tap_power = np.mean(np.abs(series.gains) ** 2, axis=(1, 2, 3))
    v = matrix_to_vec(series.gains) / np.sqrt(tap_power)[:, None, None]
    c = np.einsum("lti,ltj->ij", v, v.conj()) / (series.n_taps * n)
    d = np.sqrt(np.real(np.diag(c)))
    corr = c / np.outer(d, d)

    first = series.gains[0].reshape(n, 4)
    k = float(np.mean([moment_k_factor(first[:, i]) for i in range(4)]))

    if max_lag is None:
        max_lag = max(1, n // 10)
    ac = np.mean([autocorrelation(first[:, i], max_lag) for i in range(4)], axis=0)
    lags = np.arange(ac.size) * series.sample_period
    return ChannelStats(
        correlation=corr,
        tap_power=tap_power,
        k_factor=k,
        lags=lags,
        autocorrelation=np.real(ac),
        n_samples=n,
        low_sample_warning=low,
    )
