"""Subframe transmit/receive chain: CRC-24A, 16-QAM, SM layering, SFBC, detection.

Grids are indexed ``[layer or rx antenna, ofdm_symbol, subcarrier]``; channel
grids are ``[ofdm_symbol, subcarrier, rx, tx]``.
"""

from dataclasses import dataclass
from enum import Enum
import functools
import math

import numpy as np

from mimolink.errors import DimensionError, InvalidParameterError

# ---------------------------------------------------------------------------
# CRC-24A
# ---------------------------------------------------------------------------

CRC24A_POLY = 0x1864CFB
CRC_LEN = 24


@functools.lru_cache(maxsize=16)
def _crc24_matrix(n):
    """24 x n GF(2) matrix mapping an n-bit message to its CRC-24A parity.

    Column ``j`` holds ``x^(n - 1 - j + 24) mod g(x)``.
    """
    cols = np.empty((n, CRC_LEN), dtype=np.float32)
    reg = 1 << CRC_LEN
    reg ^= CRC24A_POLY  # x^24 mod g
    shifts = np.arange(CRC_LEN - 1, -1, -1)
    for j in range(n - 1, -1, -1):
        cols[j] = (reg >> shifts) & 1
        reg <<= 1
        if reg & (1 << CRC_LEN):
            reg ^= CRC24A_POLY
    return np.ascontiguousarray(cols.T)


def _as_bits(bits):
    b = np.asarray(bits)
    if b.ndim != 1:
        raise InvalidParameterError("bit sequence must be one-dimensional")
    if b.size and not np.all((b == 0) | (b == 1)):
        raise InvalidParameterError("bit sequence may only contain 0 and 1")
    return b.astype(np.uint8)


def _crc24_parity(b):
    # float32 sums of at most n ones are exact for n < 2^24
    return (_crc24_matrix(b.size) @ b.astype(np.float32)).astype(np.int64) & 1


def crc24_remainder(bits):
    """``bits(x) * x^24 mod g(x)`` for CRC-24A, MSB first, as a 24-bit integer."""
    parity = _crc24_parity(_as_bits(bits))
    return int(parity @ (1 << np.arange(CRC_LEN - 1, -1, -1)))


def crc24_attach(bits):
    """Append the 24 CRC-24A parity bits to ``bits``."""
    b = _as_bits(bits)
    if b.size == 0:
        raise InvalidParameterError("cannot attach a CRC to an empty bit sequence")
    return np.concatenate([b, _crc24_parity(b).astype(np.uint8)])


def crc24_check(codeword):
    """True iff ``codeword`` (payload + parity) has a zero CRC-24A remainder."""
    b = _as_bits(codeword)
    if b.size <= CRC_LEN:
        raise InvalidParameterError(f"codeword must be longer than {CRC_LEN} bits, got {b.size}")
    return not _crc24_parity(b).any()


# ---------------------------------------------------------------------------
# 16-QAM
# ---------------------------------------------------------------------------

QAM16_SCALE = 1 / math.sqrt(10)
# Gray order: bit pair (b0 b1) -> amplitude level 00:+1 01:+3 10:-1 11:-3
_LEVELS = np.array([1.0, 3.0, -1.0, -3.0])
# amplitude index (-3,-1,+1,+3) -> bit pair
_LEVEL_BITS = np.array([[1, 1], [1, 0], [0, 0], [0, 1]], dtype=np.uint8)

QAM16_TABLE = np.array(
    [(_LEVELS[i >> 2] + 1j * _LEVELS[i & 3]) * QAM16_SCALE for i in range(16)]
)


def qam16_map(bits):
    """Gray-mapped 16-QAM.

    Each group ``b0 b1 b2 b3`` maps to ``(I + jQ) / sqrt(10)``; ``b0 b1``
    pick I and ``b2 b3`` pick Q from ``{00: 1, 01: 3, 10: -1, 11: -3}``.
    """
    b = _as_bits(bits)
    if b.size % 4:
        raise InvalidParameterError(f"16-QAM needs a multiple of 4 bits, got {b.size}")
    q = b.reshape(-1, 4)
    idx = (q[:, 0] << 3) | (q[:, 1] << 2) | (q[:, 2] << 1) | q[:, 3]
    return QAM16_TABLE[idx]


def _slice_axis(x):
    # thresholds at -2, 0, 2; boundary ties go to the smaller level
    return (x > -2).astype(np.intp) + (x > 0) + (x > 2)


def qam16_demap(symbols):
    """Hard minimum-distance 16-QAM demapper (inverse of :func:`qam16_map`)."""
    s = np.asarray(symbols, dtype=complex).ravel() / QAM16_SCALE
    ib = _LEVEL_BITS[_slice_axis(s.real)]
    qb = _LEVEL_BITS[_slice_axis(s.imag)]
    return np.concatenate([ib, qb], axis=1).ravel()


# ---------------------------------------------------------------------------
# layer mapping / SFBC
# ---------------------------------------------------------------------------

class Mode(str, Enum):
    SM = "sm"
    TD = "td"


class DetectorKind(str, Enum):
    ZF = "zf"
    MMSE = "mmse"


@dataclass(frozen=True, eq=False)
class LayerGrid:
    x: np.ndarray  # (2, n_symbols, n_subcarriers)
    mode: Mode


@dataclass(frozen=True, eq=False)
class RxGrid:
    y: np.ndarray  # (2, n_symbols, n_subcarriers)
    noise_var: float


SQRT2 = math.sqrt(2.0)


def sm_encode(symbols, grid_dims):
    """Spatial multiplexing: even symbols to layer 0, odd to layer 1, each scaled by 1/sqrt(2).

    Symbols fill the grid symbol-major, subcarrier-minor, two per resource element.
    """
    n_sym, n_sc = grid_dims
    s = np.asarray(symbols, dtype=complex).ravel()
    if s.size != 2 * n_sym * n_sc:
        raise DimensionError(f"SM needs {2 * n_sym * n_sc} symbols for a {n_sym}x{n_sc} grid, got {s.size}")
    x = s.reshape(n_sym, n_sc, 2).transpose(2, 0, 1) / SQRT2
    return LayerGrid(x=x, mode=Mode.SM)


def sfbc_encode(symbols, grid_dims):
    """Alamouti over adjacent subcarriers.

    For each pair ``(2k, 2k+1)`` carrying ``(s1, s2)``: layer 0 sends
    ``(s1, s2)/sqrt(2)`` and layer 1 sends ``(-s2*, s1*)/sqrt(2)``.
    """
    n_sym, n_sc = grid_dims
    if n_sc % 2:
        raise DimensionError(f"SFBC needs an even number of subcarriers, got {n_sc}")
    s = np.asarray(symbols, dtype=complex).ravel()
    if s.size != n_sym * n_sc:
        raise DimensionError(f"SFBC needs {n_sym * n_sc} symbols for a {n_sym}x{n_sc} grid, got {s.size}")
    s = s.reshape(n_sym, n_sc)
    x = np.empty((2, n_sym, n_sc), dtype=complex)
    x[0] = s
    x[1, :, 0::2] = -np.conj(s[:, 1::2])
    x[1, :, 1::2] = np.conj(s[:, 0::2])
    return LayerGrid(x=x / SQRT2, mode=Mode.TD)


# ---------------------------------------------------------------------------
# channel
# ---------------------------------------------------------------------------

def noise_variance(snr_db):
    """Per-receive-antenna noise power for unit total transmit power; 0 at +inf dB."""
    if math.isinf(snr_db) and snr_db > 0:
        return 0.0
    return 10.0 ** (-snr_db / 10.0)


def apply_channel(tx, h, snr_db, rng=None):
    """``y[:, s, k] = h[s, k] @ x[:, s, k] + n`` with CN(0, 10^(-snr_db/10)) noise.

    ``snr_db = inf`` disables the noise (``rng`` may then be None).
    """
    x = tx.x if isinstance(tx, LayerGrid) else np.asarray(tx)
    hh = h.h if hasattr(h, "h") else np.asarray(h)
    if hh.shape[:2] != x.shape[1:] or hh.shape[2:] != (2, 2) or x.shape[0] != 2:
        raise DimensionError(f"channel grid {hh.shape} does not match layer grid {x.shape}")
    y = np.einsum("skrt,tsk->rsk", hh, x)
    nv = noise_variance(snr_db)
    if nv > 0:
        noise = rng.standard_normal((2,) + y.shape) * math.sqrt(nv / 2)
        y = y + (noise[0] + 1j * noise[1])
    return RxGrid(y=y, noise_var=nv)


# ---------------------------------------------------------------------------
# detection
# ---------------------------------------------------------------------------

SINGULAR_TOL = 1e-12


def sm_detect(y, h_csi, kind=DetectorKind.MMSE, noise_var=0.0):
    """Linear SM detection with the 1/sqrt(2) layer power split undone.

    ZF: ``sqrt(2) (H^H H)^-1 H^H y``.
    MMSE: ``sqrt(2) (H^H H + 2 noise_var I)^-1 H^H y``, the factor 2 being the
    inverse per-layer transmit power.  Both coincide at ``noise_var = 0``.

    Returns
    -------
    x_hat : ndarray, shape (2, n_symbols, n_subcarriers)
        Estimates; NaN marks erased resource elements (singular channel
        under ZF, all-zero channel under MMSE).
    """
    kind = DetectorKind(kind)
    yy = y.y if isinstance(y, RxGrid) else np.asarray(y)
    h = h_csi.h if hasattr(h_csi, "h") else np.asarray(h_csi)
    if h.shape[:-2] != yy.shape[1:] or h.shape[-2:] != (2, 2):
        raise DimensionError(f"CSI {h.shape} does not match received grid {yy.shape}")
    if noise_var < 0:
        raise InvalidParameterError("noise_var must be >= 0")
    h00, h01, h10, h11 = h[..., 0, 0], h[..., 0, 1], h[..., 1, 0], h[..., 1, 1]
    y0, y1 = yy[0], yy[1]
    # H^H y and the Gram matrix H^H H, written out for 2x2
    z0 = np.conj(h00) * y0 + np.conj(h10) * y1
    z1 = np.conj(h01) * y0 + np.conj(h11) * y1
    g00 = h00.real**2 + h00.imag**2 + h10.real**2 + h10.imag**2
    g11 = h01.real**2 + h01.imag**2 + h11.real**2 + h11.imag**2
    g01 = np.conj(h00) * h01 + np.conj(h10) * h11
    reg = 0.0 if kind is DetectorKind.ZF else 2.0 * noise_var
    a00, a11 = g00 + reg, g11 + reg
    det = a00 * a11 - (g01.real**2 + g01.imag**2)
    energy = g00 + g11
    bad = energy == 0
    if reg == 0:
        bad |= det <= SINGULAR_TOL * energy**2
    det = np.where(bad, 1.0, det) / SQRT2
    est = np.stack([(a11 * z0 - g01 * z1) / det, (a00 * z1 - np.conj(g01) * z0) / det])
    est[:, bad] = np.nan
    return est


def sfbc_decode(y, h_csi):
    """Alamouti combining over subcarrier pairs with the pair-averaged channel.

    Parameters
    ----------
    y : RxGrid or ndarray, shape (2, n_symbols, n_subcarriers)
    h_csi : ChannelGrid or ndarray, shape (n_symbols, n_subcarriers, 2, 2)

    Returns
    -------
    s_hat : ndarray, shape (n_symbols, n_subcarriers)
        Estimates of ``(s1, s2)`` at each pair's two positions; NaN where the
        averaged channel is all zero.
    """
    yy = y.y if isinstance(y, RxGrid) else np.asarray(y)
    h = h_csi.h if hasattr(h_csi, "h") else np.asarray(h_csi)
    if h.shape[:-2] != yy.shape[1:] or yy.shape[-1] % 2:
        raise DimensionError(f"CSI {h.shape} does not match received grid {yy.shape}")
    hp = 0.5 * (h[:, 0::2] + h[:, 1::2])  # (S, K/2, rx, tx)
    h0, h1 = hp[..., 0], hp[..., 1]  # (S, K/2, rx)
    ya = np.moveaxis(yy[:, :, 0::2], 0, -1)
    yb = np.moveaxis(yy[:, :, 1::2], 0, -1)
    energy = np.sum(np.abs(hp) ** 2, axis=(-1, -2))
    s1 = np.sum(np.conj(h0) * ya + h1 * np.conj(yb), axis=-1)
    s2 = np.sum(np.conj(h0) * yb - h1 * np.conj(ya), axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        s1 = SQRT2 * s1 / energy
        s2 = SQRT2 * s2 / energy
    out = np.empty(yy.shape[1:], dtype=complex)
    out[:, 0::2] = s1
    out[:, 1::2] = s2
    out[~np.isfinite(out)] = np.nan
    return out
