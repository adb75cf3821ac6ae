"""Subframe loop, HARQ retransmission and throughput-fraction accounting."""

from dataclasses import dataclass, fields, replace
from enum import Enum
import math

import numpy as np

from mimolink import corrchan
from mimolink.corrchan import (
    CorrelationSpec,
    DopplerSpec,
    FadingSpec,
    LosPowerMode,
    Scenario,
)
from mimolink.errors import InvalidParameterError, UndefinedAverageError
from mimolink.phy import (
    CRC_LEN,
    DetectorKind,
    Mode,
    apply_channel,
    crc24_attach,
    crc24_check,
    qam16_demap,
    qam16_map,
    sfbc_decode,
    sfbc_encode,
    sm_detect,
    sm_encode,
)

BITS_PER_SYMBOL = 4


class CsiPolicy(str, Enum):
    SUBFRAME_START = "subframe_start"
    PERFECT = "perfect"


@dataclass(frozen=True)
class LinkConfig:
    """One simulation operating point.

    ``alpha``/``beta`` default to the scenario preset when left as None.
    """

    mode: Mode = Mode.SM
    detector: DetectorKind = DetectorKind.MMSE
    snr_db: float = 20.0
    scenario: Scenario = Scenario.POOR
    k_factor: float = 0.0
    los_mode: LosPowerMode = LosPowerMode.ADDITIVE
    speed_kmh: float = 3.0
    carrier_hz: float = 2e9
    n_subcarriers: int = 72
    n_symbols: int = 14
    subcarrier_spacing_hz: float = 15e3
    subframe_s: float = 1e-3
    csi: CsiPolicy = CsiPolicy.SUBFRAME_START
    harq_enabled: bool = True
    max_retransmissions: int = 3
    alpha: complex | None = None
    beta: complex | None = None
    capacity_method: str = "flat"
    seed: int = 0

    def __post_init__(self):
        coerce = {
            "mode": Mode,
            "detector": DetectorKind,
            "scenario": Scenario,
            "los_mode": LosPowerMode,
            "csi": CsiPolicy,
        }
        for name, enum in coerce.items():
            value = getattr(self, name)
            try:
                object.__setattr__(self, name, enum(value))
            except ValueError:
                valid = ", ".join(e.value for e in enum)
                raise InvalidParameterError(f"{name} must be one of {{{valid}}}, got {value!r}") from None
        if math.isnan(self.snr_db):
            raise InvalidParameterError("snr_db must be a number")
        if not (self.k_factor >= 0 and math.isfinite(self.k_factor)):
            raise InvalidParameterError(f"k_factor must be >= 0, got {self.k_factor}")
        if not self.speed_kmh >= 0:
            raise InvalidParameterError(f"speed_kmh must be >= 0, got {self.speed_kmh}")
        if not self.carrier_hz > 0:
            raise InvalidParameterError(f"carrier_hz must be > 0, got {self.carrier_hz}")
        if self.n_subcarriers < 2 or self.n_subcarriers % 2:
            raise InvalidParameterError(f"n_subcarriers must be even and >= 2, got {self.n_subcarriers}")
        if self.n_symbols < 1:
            raise InvalidParameterError(f"n_symbols must be >= 1, got {self.n_symbols}")
        if not (self.subcarrier_spacing_hz > 0 and self.subframe_s > 0):
            raise InvalidParameterError("subcarrier_spacing_hz and subframe_s must be > 0")
        if self.max_retransmissions < 0:
            raise InvalidParameterError("max_retransmissions must be >= 0")
        if self.capacity_method not in ("flat", "subcarrier"):
            raise InvalidParameterError("capacity_method must be 'flat' or 'subcarrier'")
        if self.seed < 0:
            raise InvalidParameterError("seed must be >= 0")
        # validates |alpha|, |beta| <= 1
        self.correlation

    @property
    def profile(self):
        return corrchan.scenario_profile(self.scenario)

    @property
    def correlation(self):
        preset = corrchan.scenario_correlation(self.scenario)
        return CorrelationSpec(
            preset.alpha if self.alpha is None else self.alpha,
            preset.beta if self.beta is None else self.beta,
        )

    @property
    def fading(self):
        return FadingSpec.from_k(self.k_factor, self.los_mode)

    @property
    def doppler(self):
        return DopplerSpec.from_kmh(self.speed_kmh, self.carrier_hz)

    @property
    def symbol_period(self):
        return self.subframe_s / self.n_symbols

    @property
    def grid_dims(self):
        return (self.n_symbols, self.n_subcarriers)

    @property
    def tbs(self):
        return tbs_for_grid(self.grid_dims, self.mode)

    def with_(self, **changes):
        return replace(self, **changes)

    def to_dict(self):
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, Enum):
                value = value.value
            elif isinstance(value, complex):
                value = value.real if value.imag == 0 else [value.real, value.imag]
            out[f.name] = value
        return out

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InvalidParameterError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        kwargs = dict(data)
        for key in ("alpha", "beta"):
            if isinstance(kwargs.get(key), (list, tuple)):
                re, im = kwargs[key]
                kwargs[key] = complex(re, im)
        return cls(**kwargs)


def tbs_for_grid(grid_dims, mode):
    """Payload bits per subframe: every RE carries 16-QAM, minus the 24 CRC bits.

    SM carries two symbols per resource element, rate-1 SFBC one.
    """
    n_sym, n_sc = grid_dims
    if n_sc % 2:
        raise InvalidParameterError(f"n_subcarriers must be even, got {n_sc}")
    layers = 2 if Mode(mode) is Mode.SM else 1
    tbs = layers * n_sym * n_sc * BITS_PER_SYMBOL - CRC_LEN
    if tbs <= 0:
        raise InvalidParameterError(f"a {n_sym}x{n_sc} grid cannot fit a payload beside the CRC")
    return tbs


@dataclass(frozen=True)
class SubframeReport:
    index: int
    tbs: int  # 0 = no allocation
    crc_pass: bool
    harq_attempt: int = 1


@dataclass(frozen=True)
class ThroughputStats:
    delivered_bits: int
    offered_bits: int
    throughput_fraction: float
    n_subframes: int
    subframe_start: int
    subframe_stop: int


def throughput_fraction(reports):
    """Delivered over offered bits; subframes without allocation are ignored."""
    offered = sum(r.tbs for r in reports if r.tbs > 0)
    if offered == 0:
        raise UndefinedAverageError("no subframe in the window carries a transport block")
    delivered = sum(r.tbs for r in reports if r.tbs > 0 and r.crc_pass)
    return delivered / offered


def summarize(reports):
    """Fold a report list into :class:`ThroughputStats`."""
    delivered = sum(r.tbs for r in reports if r.tbs > 0 and r.crc_pass)
    offered = sum(r.tbs for r in reports if r.tbs > 0)
    return ThroughputStats(
        delivered_bits=delivered,
        offered_bits=offered,
        throughput_fraction=throughput_fraction(reports),
        n_subframes=len(reports),
        subframe_start=reports[0].index,
        subframe_stop=reports[-1].index,
    )


def _csi(cfg, channel):
    if cfg.csi is CsiPolicy.PERFECT:
        return channel.h
    return np.broadcast_to(channel.h[:1], channel.h.shape)


def transmit_receive(cfg, channel, payload, rng):
    """Push one transport block through the PHY; True if the CRC passes."""
    codeword = crc24_attach(payload)
    symbols = qam16_map(codeword)
    csi = _csi(cfg, channel)
    if cfg.mode is Mode.SM:
        tx = sm_encode(symbols, cfg.grid_dims)
        rx = apply_channel(tx, channel, cfg.snr_db, rng)
        est = sm_detect(rx, csi, cfg.detector, rx.noise_var)
        est = np.moveaxis(est, 0, -1).ravel()
    else:
        tx = sfbc_encode(symbols, cfg.grid_dims)
        rx = apply_channel(tx, channel, cfg.snr_db, rng)
        est = sfbc_decode(rx, csi).ravel()
    if np.isnan(est).any():
        return False
    return crc24_check(qam16_demap(est))


def run_subframe(cfg, channel, rng, payload=None, index=0, harq_attempt=1):
    """Simulate a single subframe on ``channel`` (a :class:`ChannelGrid`).

    A fresh random payload is drawn from ``rng`` unless one is supplied.
    """
    if channel.h.shape[:2] != cfg.grid_dims:
        raise InvalidParameterError(
            f"channel grid {channel.h.shape[:2]} does not match config {cfg.grid_dims}"
        )
    tbs = cfg.tbs
    if payload is None:
        payload = rng.integers(0, 2, tbs, dtype=np.uint8)
    ok = transmit_receive(cfg, channel, payload, rng)
    return SubframeReport(index=index, tbs=tbs, crc_pass=bool(ok), harq_attempt=harq_attempt)


def channel_for_window(cfg, n_subframes, rng):
    """Frequency response for ``n_subframes`` consecutive subframes."""
    n = n_subframes * cfg.n_symbols
    series = corrchan.generate_channel(
        cfg.profile, cfg.fading, cfg.correlation, cfg.doppler, n, cfg.symbol_period, rng
    )
    return corrchan.freq_response(
        series, n, cfg.n_subcarriers, cfg.subcarrier_spacing_hz, cfg.symbol_period
    )


def harq_run(cfg, n_subframes, rng, channel_rng=None):
    """Run ``n_subframes`` consecutive subframes with stop-and-wait HARQ.

    A failed TB is resent unchanged (fresh channel and noise, no combining)
    for up to ``max_retransmissions`` more subframes, then dropped.  Every
    consumed subframe counts as offered.

    The channel is drawn from ``channel_rng`` when given, otherwise from a
    stream spawned off ``rng``; payloads and noise always come from ``rng``.

    Returns
    -------
    stats : ThroughputStats
    reports : list of SubframeReport
    """
    if n_subframes < 1:
        raise InvalidParameterError("n_subframes must be >= 1")
    if channel_rng is None:
        channel_rng, link_rng = rng.spawn(2)
    else:
        link_rng = rng
    grid = channel_for_window(cfg, n_subframes, channel_rng)
    s = cfg.n_symbols
    reports = []
    payload, attempt = None, 1
    for i in range(n_subframes):
        if payload is None:
            payload = link_rng.integers(0, 2, cfg.tbs, dtype=np.uint8)
            attempt = 1
        report = run_subframe(cfg, grid.symbols(i * s, (i + 1) * s), link_rng, payload, i, attempt)
        reports.append(report)
        if report.crc_pass or not cfg.harq_enabled or attempt > cfg.max_retransmissions:
            payload = None
        else:
            attempt += 1
    return summarize(reports), reports
