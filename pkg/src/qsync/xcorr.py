"""Two-stage cross-correlation maximum search for block-structured strings.

For a synchronization string with N1 periodic autocorrelation peaks
(:mod:`qsync.strings`), the lag m_opt that maximizes the cyclic
cross-correlation x_m between the known string and the received ternary
string can be found without evaluating all L lags:

  stage 1   Reshape both strings into L1 x N1 matrices and DFT each row
            (the "interleaved DFT" S). Column 0 of S is real, and the
            cyclic correlation of the two column-0 vectors equals the
            interleaved average (1/N1) sum_j x_{u+j*L1}. Its argmax gives
            u_opt = m_opt mod L1 with one length-L1 FFT correlation.

  stage 2   At the single row u_opt, the correlations X_{u_opt,j} of the
            remaining spectrum columns are computed by direct summation
            (O(L) total). A length-N1 DFT of that row reconstructs the
            exact correlation values x_{u_opt + j*L1}, whose argmax gives
            j_opt.

With N1 ~ log2(L) the total cost is O(L log log L) versus O(L log L) for
the full FFT correlation. Spectrum rows beyond the matrix (r + u >= L1)
are resolved through the extension relation
S[r + L1, j] = S[r, j] * exp(2*pi*i*j/N1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import (
    check_divisible,
    check_not_all_zero,
    check_pm1,
    check_same_length,
    check_ternary,
)
from .errors import DimensionMismatch, LengthMismatch
from .strings import SyncString

DEFAULT_DELTA_THRESHOLD = 10.0


@dataclass
class OpCounter:
    """Accumulates the arithmetic cost of executed operations.

    FFT calls are charged their standard radix-2 butterfly count,
    (n/2)*log2(n) complex multiply-adds (half for real-input transforms);
    direct summations are charged one multiply-add per term.
    """

    fft_butterflies: int = 0
    muladds: int = 0

    def add_fft(self, n: int, real: bool = False, count: int = 1):
        if n <= 1:
            return
        b = 0.5 * n * math.log2(n)
        if real:
            b *= 0.5
        b = int(round(b)) * count
        self.fft_butterflies += b
        self.muladds += b

    def add_muladds(self, k: int):
        self.muladds += int(k)


@dataclass
class ComplexityCounters:
    stage1: OpCounter = field(default_factory=OpCounter)
    stage2: OpCounter = field(default_factory=OpCounter)


@dataclass(frozen=True)
class InterleavedSpectrum:
    """Per-row DFT of a length-L sequence reshaped to L1 x N1.

    Entry [r, j] is sum_k s[r + k*L1] * exp(-2*pi*i*j*k/N1).
    """

    coefficients: np.ndarray = field(repr=False)
    source_length: int

    @property
    def l1(self) -> int:
        return self.coefficients.shape[0]

    @property
    def n1(self) -> int:
        return self.coefficients.shape[1]


def interleaved_dft(s, n1: int, counter: OpCounter | None = None) -> InterleavedSpectrum:
    """Interleaved DFT of a real sequence: reshape to L1 x N1, DFT each row."""
    s = np.asarray(s, dtype=np.float64)
    L = len(s)
    check_divisible(L, n1)
    l1 = L // n1
    rows = s.reshape(n1, l1).T  # [r, k] = s[r + k*l1]
    if counter is not None:
        counter.add_fft(n1, count=l1)
    coeff = np.fft.fft(rows, axis=1)
    coeff.setflags(write=False)
    return InterleavedSpectrum(coefficients=coeff, source_length=L)


def _check_compat(sa: InterleavedSpectrum, sb: InterleavedSpectrum):
    if sa.coefficients.shape != sb.coefficients.shape:
        raise DimensionMismatch(
            f"spectra have shapes {sa.coefficients.shape} and {sb.coefficients.shape}"
        )


def extension_phases(n1: int) -> np.ndarray:
    """Per-column phase factor exp(2*pi*i*j/N1) of the row-extension relation."""
    return np.exp(2j * np.pi * np.arange(n1) / n1)


def block_xcorr_column(sa: InterleavedSpectrum, sb: InterleavedSpectrum, j: int, u: int | None = None):
    """Column correlation X_{u,j} = (1/(L1*N1^2)) sum_r conj(S^A[r+u, j]) S^B[r, j].

    The 1/N1^2 on top of the 1/L1 row average compensates the two
    unnormalized row DFTs, so that a length-N1 DFT of the row X_{u, .}
    returns cross-correlation values directly (see
    :func:`lemma1_reconstruct`) and column 0 equals the interleaved
    average (1/N1) sum_j x_{u+j*L1}.

    With u=None returns the whole length-L1 column (via one FFT
    correlation for j=0, via zero-padded FFTs with the extension phase
    for j>0). With an explicit u returns the single complex value by
    direct summation; this is the O(L1) path the two-stage search uses
    for j>0.
    """
    _check_compat(sa, sb)
    l1, n1 = sa.l1, sa.n1
    scale = l1 * n1 * n1
    A = sa.coefficients[:, j]
    B = sb.coefficients[:, j]
    phase = np.exp(2j * np.pi * j / n1)

    if u is not None:
        if not 0 <= u < l1:
            raise ValueError(f"u must be in [0, {l1}), got {u}")
        rolled = np.roll(A, -u)
        if u:
            rolled[l1 - u :] *= phase  # wrapped rows pick up the extension phase
        return complex(np.vdot(rolled, B)) / scale

    if j == 0:
        a0, b0 = A.real, B.real
        return np.fft.irfft(np.fft.rfft(a0) * np.conj(np.fft.rfft(b0)), n=l1) / scale

    a_ext = np.concatenate([A, A * phase])
    b_pad = np.concatenate([B, np.zeros(l1, dtype=complex)])
    c = np.fft.ifft(np.conj(np.fft.fft(b_pad)) * np.fft.fft(a_ext))
    return np.conj(c[:l1]) / scale


def block_xcorr_full(sa: InterleavedSpectrum, sb: InterleavedSpectrum) -> np.ndarray:
    """All of X as an L1 x N1 matrix (diagnostic/oracle path, not the fast search)."""
    _check_compat(sa, sb)
    l1, n1 = sa.l1, sa.n1
    A, B = sa.coefficients, sb.coefficients
    a_ext = np.concatenate([A, A * extension_phases(n1)[None, :]], axis=0)
    b_pad = np.concatenate([B, np.zeros_like(B)], axis=0)
    c = np.fft.ifft(np.conj(np.fft.fft(b_pad, axis=0)) * np.fft.fft(a_ext, axis=0), axis=0)
    return np.conj(c[:l1]) / (l1 * n1 * n1)


def lemma1_reconstruct(x_row, return_complex: bool = False) -> np.ndarray:
    """Exact correlation values x_{u+j*L1} from the row X_{u, 0..N1-1}.

    The reconstruction is a plain length-N1 DFT; for real source strings
    the imaginary parts vanish to numerical precision, so the real part
    is returned unless `return_complex` is set.
    """
    vals = np.fft.fft(np.asarray(x_row, dtype=complex))
    return vals if return_complex else vals.real


@dataclass(frozen=True)
class OffsetResult:
    """Outcome of the two-stage offset search."""

    u_opt: int
    j_opt: int
    m_opt: int
    peak_value: float
    column0_peak: float
    distinguishability: float
    success: bool

    def csv_row(self) -> str:
        return (
            f"{self.m_opt},{self.u_opt},{self.j_opt},"
            f"{self.peak_value:.9g},{self.distinguishability:.6g},{int(self.success)}"
        )

    CSV_HEADER = "m_opt,u_opt,j_opt,peak,delta,success"


def _distinguishability(x0: np.ndarray, u_opt: int, peak: float, c0: float, n1: int) -> float:
    """Peak height in units of the off-peak correlation noise.

    The dispersion is measured on the stage-1 column-0 correlation
    (excluding the peak bin and its two cyclic neighbors). Because the
    N1 correlation values averaged into each X_{u,0} bin are positively
    correlated through the block structure, that dispersion relates to
    the full-correlation one by sqrt(c0 + (1-c0)/N1); dividing it back
    out makes the statistic match (peak - mean)/std of the full
    correlation, the quantity thresholded for success.
    """
    l1 = len(x0)
    mask = np.ones(l1, dtype=bool)
    mask[[u_opt, (u_opt - 1) % l1, (u_opt + 1) % l1]] = False
    rest = x0[mask]
    if rest.size < 2:
        return np.inf
    sd = rest.std() / np.sqrt(c0 + (1.0 - c0) / n1)
    if sd == 0.0:
        return np.inf if peak > rest.mean() else 0.0
    return float((peak - rest.mean()) / sd)


class OffsetSearch(BaseEstimator):
    """Two-stage offset estimator against a fixed synchronization string.

    Parameters
    ----------
    n1 : number of blocks; defaults to the SyncString's own N1 when
        fitting a SyncString, required when fitting a bare array.
    delta_threshold : minimum peak distinguishability for `success`.
    c0 : secondary autocorrelation peak height of the fitted string,
        used to standardize the distinguishability; defaults to the
        SyncString's nominal value (0 for a bare array, i.e. a string
        without engineered peaks).

    After `fit` the transmitted string's interleaved spectrum is cached,
    so repeated `predict`/`search` calls only pay for the received string.
    """

    def __init__(
        self,
        n1: int | None = None,
        delta_threshold: float = DEFAULT_DELTA_THRESHOLD,
        c0: float | None = None,
    ):
        self.n1 = n1
        self.delta_threshold = delta_threshold
        self.c0 = c0

    def fit(self, X, y=None):
        """Precompute the spectrum of the transmitted +/-1 string X."""
        if isinstance(X, SyncString):
            symbols = X.symbols
            n1 = self.n1 if self.n1 is not None else X.params.N1
            c0 = self.c0 if self.c0 is not None else X.c0_nominal
        else:
            symbols = check_pm1(X, "alice string")
            if self.n1 is None:
                raise ValueError("n1 is required when fitting a bare array")
            n1 = self.n1
            c0 = self.c0 if self.c0 is not None else 0.0
        self.n1_ = int(n1)
        self.c0_ = float(c0)
        self.spectrum_ = interleaved_dft(symbols, self.n1_)
        self.col0_rfft_ = np.fft.rfft(self.spectrum_.coefficients[:, 0].real)
        return self

    def search(self, b, counters: ComplexityCounters | None = None) -> OffsetResult:
        """Full two-stage search returning the complete OffsetResult."""
        spec = self.spectrum_
        l1, n1 = spec.l1, spec.n1
        b = check_ternary(b, "bob string")
        if len(b) != spec.source_length:
            raise LengthMismatch(
                f"bob string has length {len(b)}, expected {spec.source_length}"
            )
        check_not_all_zero(b, "bob string")
        c1 = counters.stage1 if counters is not None else None

        scale = l1 * n1 * n1
        sb = interleaved_dft(b, n1, counter=c1)
        b0 = sb.coefficients[:, 0].real
        if c1 is not None:
            c1.add_fft(l1, real=True)       # forward transform of column 0
            c1.add_muladds(l1 // 2 + 1)     # pointwise spectral product
            c1.add_fft(l1, real=True)       # inverse transform
        x0 = np.fft.irfft(self.col0_rfft_ * np.conj(np.fft.rfft(b0)), n=l1) / scale
        u_opt = int(np.argmax(x0))  # ties resolve to the smallest index

        if n1 == 1:
            x_row = np.array([x0[u_opt]], dtype=complex)
        else:
            rolled = np.roll(spec.coefficients, -u_opt, axis=0)
            if u_opt:
                rolled[l1 - u_opt :, :] *= extension_phases(n1)[None, :]
            rest = (np.conj(rolled[:, 1:]) * sb.coefficients[:, 1:]).sum(axis=0) / scale
            if counters is not None:
                counters.stage2.add_muladds((n1 - 1) * l1)
            x_row = np.concatenate([[x0[u_opt]], rest])
        if counters is not None:
            counters.stage2.add_fft(n1)
        x_vals = lemma1_reconstruct(x_row)
        j_opt = int(np.argmax(x_vals))
        peak = float(x_vals[j_opt])
        delta = _distinguishability(x0, u_opt, peak, self.c0_, n1)

        return OffsetResult(
            u_opt=u_opt,
            j_opt=j_opt,
            m_opt=u_opt + j_opt * l1,
            peak_value=peak,
            column0_peak=float(x0[u_opt]),
            distinguishability=delta,
            success=bool(delta >= self.delta_threshold),
        )

    def predict(self, b) -> int:
        """Estimated offset m_opt; the full result is kept in `result_`."""
        self.result_ = self.search(b)
        return self.result_.m_opt


def find_offset(
    alice,
    b,
    n1: int | None = None,
    delta_threshold: float = DEFAULT_DELTA_THRESHOLD,
    counters: ComplexityCounters | None = None,
) -> OffsetResult:
    """One-shot convenience wrapper around :class:`OffsetSearch`."""
    return OffsetSearch(n1=n1, delta_threshold=delta_threshold).fit(alice).search(b, counters)


def baseline_offset(alice, b, counter: OpCounter | None = None):
    """Full FFT-correlation argmax (the O(L log L) reference path).

    The transmitted string's transform counts as precomputed; only the
    receiver-side work is charged. Returns (argmax lag, correlation vector).
    """
    a = np.asarray(alice.symbols if isinstance(alice, SyncString) else alice, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    check_same_length(a, b, names=("alice string", "bob string"))
    L = len(a)
    a_hat = np.fft.rfft(a)
    if counter is not None:
        counter.add_fft(L, real=True)
        counter.add_muladds(L // 2 + 1)
        counter.add_fft(L, real=True)
    corr = np.fft.irfft(a_hat * np.conj(np.fft.rfft(b)), n=L) / L
    return int(np.argmax(corr)), corr


def default_n1(L: int) -> int:
    """Divisor of L closest to log2(L) (ties toward the smaller divisor)."""
    target = math.log2(L)
    best, best_dist = 1, abs(1 - target)
    for d in range(1, int(math.isqrt(L)) + 1):
        if L % d:
            continue
        for cand in (d, L // d):
            dist = abs(cand - target)
            if dist < best_dist or (dist == best_dist and cand < best):
                best, best_dist = cand, dist
    return best


@dataclass
class ComplexityReport:
    """Instrumented multiply-add totals for one (L, N1) probe instance."""

    L: int
    n1: int
    stage1_ops: int
    stage2_ops: int
    baseline_ops: int
    m_fast: int
    m_baseline: int

    @property
    def fast_ops(self) -> int:
        return self.stage1_ops + self.stage2_ops


def probe_instance(L: int, n1: int, seed: int = 0, eta: float = 0.02):
    """Synthetic search instance: a synchronization string (structured,
    when n1 allows one) against a randomly shifted copy with a fraction
    (1 - eta) of entries erased. Returns (alice, bob, true_shift)."""
    from .strings import StringParams, generate_string

    check_divisible(L, n1)
    rng = np.random.default_rng(seed)
    if n1 >= 2 and L // n1 >= 2:
        alice = generate_string(StringParams(L=L, N1=n1, L1=L // n1, lam=1.0, seed=seed))
        a = alice.symbols
    else:
        alice = a = rng.choice(np.array([-1, 1], dtype=np.int8), size=L)
    shift = int(rng.integers(L))
    b = np.roll(a, -shift).astype(np.int8)
    b[rng.random(L) >= eta] = 0
    if not b.any():
        b[0] = a[shift % L]
    return alice, b, shift


def complexity_probe(L: int, n1: int, seed: int = 0, eta: float = 0.02) -> ComplexityReport:
    """Run both search paths on one synthetic instance and report op counts.

    The counts depend only on (L, n1); the instance data just keeps the
    run honest.
    """
    alice, b, _ = probe_instance(L, n1, seed=seed, eta=eta)
    counters = ComplexityCounters()
    searcher = OffsetSearch(n1=n1).fit(alice)
    res = searcher.search(b, counters=counters)
    base_counter = OpCounter()
    m_base, _ = baseline_offset(alice, b, counter=base_counter)
    return ComplexityReport(
        L=L,
        n1=n1,
        stage1_ops=counters.stage1.muladds,
        stage2_ops=counters.stage2.muladds,
        baseline_ops=base_counter.muladds,
        m_fast=res.m_opt,
        m_baseline=m_base,
    )
