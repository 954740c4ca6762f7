"""Synchronization strings with engineered periodic autocorrelation.

A string of length L = N1*L1 is built from N1 blocks of length L1. All
blocks share a common bias vector, which makes the cyclic autocorrelation
show secondary peaks of height c0 at every lag that is a multiple of L1,
while all other lags stay at the statistical noise floor ~1/sqrt(L). The
peak height is tuned by a single parameter lambda:

    c0 = lambda^2 / 3          for lambda <= 1
    c0 = 1 - 2 / (3*lambda)    for lambda > 1

This module also provides the exact cross-correlation oracles (direct
summation and an FFT-backed variant with the identical contract) used to
validate the fast two-stage search in :mod:`qsync.xcorr`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._validation import check_pm1, check_same_length
from .errors import InvalidParams

TEXT_MAGIC = "QSYNC1"
BINARY_MAGIC = b"QSYNB1"
_LINE_WIDTH = 80


def c0_from_lambda(lam: float) -> float:
    """Nominal secondary-peak height of the autocorrelation for a given lambda."""
    if lam < 0:
        raise InvalidParams(f"lambda must be >= 0, got {lam}")
    if lam <= 1.0:
        return lam * lam / 3.0
    return 1.0 - 2.0 / (3.0 * lam)


@dataclass(frozen=True)
class StringParams:
    """Construction parameters of a synchronization string.

    Attributes
    ----------
    L : total number of symbols, must equal N1 * L1
    N1 : number of blocks
    L1 : block length
    lam : non-negative peak-tuning parameter
    seed : 64-bit RNG seed (numpy PCG64)
    """

    L: int
    N1: int
    L1: int
    lam: float
    seed: int = 0

    def __post_init__(self):
        if self.N1 < 2 or self.L1 < 2:
            raise InvalidParams(f"need N1 >= 2 and L1 >= 2, got N1={self.N1}, L1={self.L1}")
        if self.L != self.N1 * self.L1:
            raise InvalidParams(f"L={self.L} != N1*L1={self.N1 * self.L1}")
        if self.lam < 0:
            raise InvalidParams(f"lambda must be >= 0, got {self.lam}")


@dataclass(frozen=True)
class SyncString:
    """A generated +/-1 synchronization string and its nominal peak height."""

    params: StringParams
    symbols: np.ndarray = field(repr=False)
    c0_nominal: float

    def __len__(self):
        return self.params.L


def generate_string(params: StringParams) -> SyncString:
    """Generate the +/-1 synchronization string for `params`.

    Draws L1 block-bias values x_u and one threshold value y per symbol,
    both uniform in [-1, 1), and sets symbol (u + j*L1) to
    sign(y[j, u] - lam * x[u]) with sign(0) = +1. Deterministic for a
    given seed: the generator is numpy's PCG64 and the draw order is
    fixed (x first, then y row-major by block).
    """
    L, N1, L1 = params.L, params.N1, params.L1
    rng = np.random.Generator(np.random.PCG64(params.seed))
    x = rng.uniform(-1.0, 1.0, L1)
    y = rng.uniform(-1.0, 1.0, (N1, L1))
    symbols = np.where(y - params.lam * x[None, :] >= 0.0, 1, -1).astype(np.int8)
    symbols = symbols.reshape(L)
    symbols.setflags(write=False)
    return SyncString(params=params, symbols=symbols, c0_nominal=c0_from_lambda(params.lam))


def naive_xcorr(a, b) -> np.ndarray:
    """All L lags of the cyclic cross-correlation x_m = (1/L) sum_n a[n+m] b[n].

    Direct summation, O(L^2). This is the ground-truth oracle; use
    :func:`fft_xcorr` for large L. `a` must be a +/-1 sequence, `b` any
    real sequence of the same length.
    """
    a = check_pm1(a, "a").astype(np.float64)
    b = np.asarray(b, dtype=np.float64)
    check_same_length(a, b)
    L = len(a)
    ext = np.concatenate([a, a[: L - 1]])
    # np.correlate slides b over ext without any FFT: entry m is sum_n ext[m+n]*b[n]
    return np.correlate(ext, b, mode="valid") / L


def fft_xcorr(a, b) -> np.ndarray:
    """FFT-backed variant of :func:`naive_xcorr` with the identical contract."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    check_same_length(a, b)
    L = len(a)
    return np.fft.irfft(np.fft.rfft(a) * np.conj(np.fft.rfft(b)), n=L) / L


def default_peak_tol(params: StringParams) -> float:
    # 4 sigma of the secondary-peak estimate (binomial variance of +/-1 sums)
    return 4.0 / np.sqrt(params.L1) * np.sqrt(params.N1 / (params.N1 - 1))


def default_offpeak_tol(params: StringParams) -> float:
    # Off-peak lags are sums of +/-1 products whose terms at offsets j*L1
    # share the block bias, so their variance is (1 + (N1-1)*c0^2)/L, not
    # the naive 1/L of independent signs. Six of those sigmas.
    c0 = c0_from_lambda(params.lam)
    return 6.0 * np.sqrt(1.0 + (params.N1 - 1) * c0 * c0) / np.sqrt(params.L)


@dataclass
class ShapeReport:
    """Result of verifying the peak structure of an autocorrelation."""

    lag0_exact: bool
    peaks_ok: bool
    offpeak_ok: bool
    worst_peak_lag: int
    worst_peak_dev: float
    worst_offpeak_lag: int
    worst_offpeak_value: float
    peak_tol: float
    offpeak_tol: float
    c0_measured: float

    @property
    def passed(self) -> bool:
        return self.lag0_exact and self.peaks_ok and self.offpeak_ok


def verify_autocorrelation_shape(
    s: SyncString, peak_tol: float | None = None, offpeak_tol: float | None = None
) -> ShapeReport:
    """Check x_0 = 1, |x_{j*L1} - c0| <= peak_tol and |off-peak| <= offpeak_tol.

    Never raises: all failures are carried in the report.
    """
    params = s.params
    if peak_tol is None:
        peak_tol = default_peak_tol(params)
    if offpeak_tol is None:
        offpeak_tol = default_offpeak_tol(params)

    a = s.symbols.astype(np.float64)
    lag0 = float(np.dot(a, a)) / params.L  # exact in float64 for L < 2**53
    x = fft_xcorr(a, a)

    peak_lags = np.arange(1, params.N1) * params.L1
    peak_dev = np.abs(x[peak_lags] - s.c0_nominal)
    worst_peak = int(np.argmax(peak_dev))

    off_mask = np.ones(params.L, dtype=bool)
    off_mask[0] = False
    off_mask[peak_lags] = False
    off_vals = np.abs(np.where(off_mask, x, 0.0))
    worst_off = int(np.argmax(off_vals))

    return ShapeReport(
        lag0_exact=(lag0 == 1.0),
        peaks_ok=bool(np.all(peak_dev <= peak_tol)),
        offpeak_ok=bool(off_vals[worst_off] <= offpeak_tol),
        worst_peak_lag=int(peak_lags[worst_peak]),
        worst_peak_dev=float(peak_dev[worst_peak]),
        worst_offpeak_lag=worst_off,
        worst_offpeak_value=float(off_vals[worst_off]),
        peak_tol=float(peak_tol),
        offpeak_tol=float(offpeak_tol),
        c0_measured=float(np.mean(x[peak_lags])),
    )


def save_string(s: SyncString, path) -> None:
    """Write the text format: `QSYNC1 L N1 L1 lambda seed` then +/- characters."""
    p = s.params
    chars = np.where(s.symbols > 0, "+", "-")
    body = "".join(chars.tolist())
    with open(path, "w") as f:
        f.write(f"{TEXT_MAGIC} {p.L} {p.N1} {p.L1} {p.lam!r} {p.seed}\n")
        for i in range(0, len(body), _LINE_WIDTH):
            f.write(body[i : i + _LINE_WIDTH])
            f.write("\n")


def load_string(path) -> SyncString:
    with open(path) as f:
        header = f.readline().split()
        if len(header) != 6 or header[0] != TEXT_MAGIC:
            raise InvalidParams(f"not a {TEXT_MAGIC} string file: {path}")
        params = StringParams(
            L=int(header[1]), N1=int(header[2]), L1=int(header[3]),
            lam=float(header[4]), seed=int(header[5]),
        )
        body = f.read().replace("\n", "")
    if len(body) != params.L or set(body) - {"+", "-"}:
        raise InvalidParams(f"string body corrupt: expected {params.L} +/- characters")
    symbols = np.where(np.frombuffer(body.encode(), dtype="S1") == b"+", 1, -1).astype(np.int8)
    symbols.setflags(write=False)
    return SyncString(params=params, symbols=symbols, c0_nominal=c0_from_lambda(params.lam))


def save_string_binary(s: SyncString, path) -> None:
    """Binary variant: same header, then one symbol per bit (bit 1 -> +1)."""
    p = s.params
    header = f"{BINARY_MAGIC.decode()} {p.L} {p.N1} {p.L1} {p.lam!r} {p.seed}\n"
    bits = (s.symbols > 0).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(header.encode())
        f.write(np.packbits(bits).tobytes())


def load_string_binary(path) -> SyncString:
    with open(path, "rb") as f:
        header = f.readline().split()
        if len(header) != 6 or header[0] != BINARY_MAGIC:
            raise InvalidParams(f"not a {BINARY_MAGIC.decode()} string file: {path}")
        params = StringParams(
            L=int(header[1]), N1=int(header[2]), L1=int(header[3]),
            lam=float(header[4]), seed=int(header[5]),
        )
        packed = np.frombuffer(f.read(), dtype=np.uint8)
    bits = np.unpackbits(packed)[: params.L]
    if len(bits) != params.L:
        raise InvalidParams(f"string body corrupt: expected {params.L} packed bits")
    symbols = np.where(bits == 1, 1, -1).astype(np.int8)
    symbols.setflags(write=False)
    return SyncString(params=params, symbols=symbols, c0_nominal=c0_from_lambda(params.lam))
