"""Pulse-period recovery from sparse detection timestamps.

The receiver sees a thinned, jittered view of a strictly periodic pulse
train whose period in the receiver clock, tau_B, differs from the
nominal transmitter period tau_A by an unknown fractional offset (and a
slow drift). Recovery proceeds in two steps:

1. :func:`coarse_period_fft` bins the arrival times at rate 4/tau_A into
   a binary sequence, takes one FFT of at most `n_samples` samples and
   reads the dominant peak near 1/tau_A. The estimate tau_0 carries a
   fractional error of a few parts in `n_samples`.

2. :func:`refine_period_lts` regresses the arrival-time residuals
   modulo the current period estimate against time. The slope of that
   line is (tau_B - tau_0)/tau_B, so each fit multiplies the period by
   1/(1 - slope). A least-trimmed-squares (LTS) line fit keeps the
   estimate robust against background counts. Because a fit over a
   window T pins the period only to ~sigma/(sqrt(D) T), the fit is
   repeated over geometrically growing windows (starting at the FFT
   sampling window) until the full acquisition is covered; after the
   first pass the residuals no longer wrap, and the final pass reaches
   the jitter floor over the whole window.

Slot indices follow by nearest-integer rounding of time differences
divided by the recovered period.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_timestamps
from .errors import (
    EstimateNotOk,
    FitDiverged,
    InsufficientInliers,
    NoPeak,
    TooFewDetections,
)

DEFAULT_N_SAMPLES = 1_000_000
DEFAULT_TRIM_FRACTION = 0.3
DEFAULT_SIGMA = 1e-10
INLIER_WINDOW_FRACTION = 1 / 8  # residuals within tau/8 of the slot center count as signal


@dataclass
class ArrivalTimes:
    """Receiver-side detection timestamps within one acquisition window."""

    timestamps: np.ndarray
    acquisition_window: float
    resolution: float = 81e-12

    def __post_init__(self):
        self.timestamps = check_timestamps(self.timestamps)


@dataclass
class PeriodEstimate:
    """Recovered period and residual statistics for one acquisition."""

    tau_b: float
    tau_guess: float
    slope: float
    rms_tie: float
    index_offsets: np.ndarray = field(repr=False)
    ok: bool
    inlier_fraction: float
    n_detections: int
    n_collisions: int


@dataclass
class TieSeries:
    """Time-interval-error values relative to one reference detection."""

    values: np.ndarray
    reference_detection: int = 0


@dataclass
class SlotAssignment:
    """Slot indices after dropping detections that collide in one slot."""

    indices: np.ndarray
    kept: np.ndarray
    n_collisions: int


def coarse_period_fft(
    times,
    tau_a: float,
    n_samples: int = DEFAULT_N_SAMPLES,
    search_halfwidth: float = 0.1,
    min_detections: int = 100,
    peak_factor: float = 5.0,
) -> float:
    """First period guess from one FFT of the binarized arrival times.

    The arrival times are OR-binned at sampling rate 4/tau_a over a
    window of `n_samples` bins, and the spectral peak within
    +/- `search_halfwidth` of the expected frequency 1/tau_a is taken.

    Raises TooFewDetections if fewer than `min_detections` arrivals fall
    in the sampling window, NoPeak if the peak does not clear
    `peak_factor` times the median magnitude in the search band.
    """
    t = check_timestamps(times)
    dt = tau_a / 4.0
    t_samp = n_samples * dt
    rel = t - t[0] if t.size else t
    sel = rel[rel < t_samp]
    if sel.size < min_detections:
        raise TooFewDetections(
            f"{sel.size} detections in the {t_samp:.3g} s sampling window, "
            f"need {min_detections}"
        )
    seq = np.zeros(n_samples)
    seq[(sel / dt).astype(np.int64)] = 1.0
    spectrum = np.abs(np.fft.rfft(seq))

    k0 = n_samples / 4.0  # bin of 1/tau_a
    k_lo = max(1, int(np.floor(k0 * (1.0 - search_halfwidth))))
    k_hi = min(len(spectrum) - 1, int(np.ceil(k0 * (1.0 + search_halfwidth))))
    band = spectrum[k_lo : k_hi + 1]
    peak_k = k_lo + int(np.argmax(band))
    floor = float(np.median(band))
    if spectrum[peak_k] <= 0 or spectrum[peak_k] < peak_factor * floor:
        raise NoPeak(
            f"spectral peak {spectrum[peak_k]:.3g} below {peak_factor} x median {floor:.3g}"
        )
    return t_samp / peak_k


def _centered_residuals(rel: np.ndarray, tau: float) -> np.ndarray:
    """Arrival-time residuals mod tau, recentered about the circular mean
    so the signal cluster sits near zero, in [-tau/2, tau/2)."""
    raw = np.mod(rel, tau)
    phase = 2.0 * np.pi * raw / tau
    center = np.angle(np.mean(np.exp(1j * phase))) * tau / (2.0 * np.pi)
    return np.mod(raw - center + tau / 2.0, tau) - tau / 2.0


def _ols_line(x: np.ndarray, y: np.ndarray):
    mx, my = x.mean(), y.mean()
    vx = np.sum((x - mx) ** 2)
    if vx == 0.0:
        return my, 0.0
    b = np.sum((x - mx) * (y - my)) / vx
    return my - b * mx, b


def lts_line(x, y, h: int, seed: int = 0, n_starts: int = 8, max_iter: int = 30):
    """Least-trimmed-squares line fit: minimize the sum of the h smallest
    squared residuals (FAST-LTS concentration steps from random 2-point
    starts plus the plain OLS start).

    Returns (intercept, slope, inlier_index_array).
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = len(x)
    if n < 4 or h < 2:
        raise InsufficientInliers(f"{n} points with h={h} is not enough for an LTS fit")
    h = min(h, n)
    rng = np.random.default_rng(seed)

    def concentrate(a, b):
        best = (np.inf, a, b, None)
        for _ in range(max_iter):
            res2 = (y - (a + b * x)) ** 2
            idx = np.argpartition(res2, h - 1)[:h]
            a, b = _ols_line(x[idx], y[idx])
            obj = float(np.sum((y[idx] - (a + b * x[idx])) ** 2))
            if obj >= best[0] - 1e-30:
                if obj < best[0]:
                    best = (obj, a, b, idx)
                break
            best = (obj, a, b, idx)
        return best

    candidates = [_ols_line(x, y)]
    for _ in range(n_starts):
        i, j = rng.choice(n, size=2, replace=False)
        if x[i] == x[j]:
            continue
        b = (y[j] - y[i]) / (x[j] - x[i])
        candidates.append((y[i] - b * x[i], b))

    best = (np.inf, 0.0, 0.0, None)
    for a0, b0 in candidates:
        res = concentrate(a0, b0)
        if res[0] < best[0]:
            best = res
    if best[3] is None:
        raise InsufficientInliers("LTS concentration failed to converge on any start")
    return best[1], best[2], np.sort(best[3])


def _bootstrap_slope(rel: np.ndarray, tau: float, n_samples: int) -> float:
    """Rough residual slope from binned circular phases.

    Bins are narrow enough that the worst-case post-FFT slope moves the
    phase by well under one period per bin, so sequentially unwrapping
    the per-bin mean phases is safe even with background present.
    """
    s_cap = 16.0 / n_samples
    span = rel[-1] - rel[0]
    if span <= 0:
        return 0.0
    w = tau / (8.0 * s_cap)
    n_bins = max(4, int(np.ceil(span / w)))
    n_bins = min(n_bins, max(2, len(rel) // 3))
    edges = np.linspace(rel[0], rel[-1] + 1e-18, n_bins + 1)
    which = np.digitize(rel, edges) - 1
    phases = np.exp(2j * np.pi * np.mod(rel, tau) / tau)
    theta, centers, weights = [], [], []
    for k in range(n_bins):
        z = phases[which == k]
        if z.size == 0:
            continue
        theta.append(np.angle(z.mean()))
        centers.append(0.5 * (edges[k] + edges[k + 1]))
        weights.append(z.size)
    if len(theta) < 3:
        return 0.0
    theta = np.unwrap(np.array(theta))
    centers = np.array(centers)
    weights = np.sqrt(np.array(weights, dtype=np.float64))
    coeffs = np.polyfit(centers - centers.mean(), theta, 1, w=weights)
    return float(coeffs[0] * tau / (2.0 * np.pi))


def refine_period_lts(
    times,
    tau_0: float,
    trim_fraction: float = DEFAULT_TRIM_FRACTION,
    sigma: float = DEFAULT_SIGMA,
    n_samples: int = DEFAULT_N_SAMPLES,
    seed: int = 0,
) -> PeriodEstimate:
    """Refine a coarse period estimate by robust regression of the
    modular arrival-time residuals against time.

    `tau_0` must come from :func:`coarse_period_fft` (or a previous
    acquisition): the starting wrap rate must be a small fraction of a
    period per sampling window. The fit window starts at the FFT
    sampling window and grows by 4x per pass until the full span of
    `times` is covered; each pass fits an LTS line keeping the best
    (1 - trim_fraction) fraction of points and updates
    tau <- tau / (1 - slope).

    The result's `ok` flag requires rms_tie <= 3*sigma, with rms_tie
    computed over in-slot residuals (within tau/8 of the slot center)
    across the whole window.
    """
    t = check_timestamps(times)
    if t.size < 10:
        raise InsufficientInliers(f"{t.size} detections is not enough to refine a period")
    if tau_0 <= 0:
        raise FitDiverged(f"tau_0 must be positive, got {tau_0}")
    rel = t - t[0]
    span = rel[-1]
    t_samp = n_samples * tau_0 / 4.0

    tau = tau_0 / (1.0 - _bootstrap_slope(rel[rel <= min(t_samp, span)], tau_0, n_samples))
    if not np.isfinite(tau) or abs((tau - tau_0) / tau_0) >= 0.5:
        raise FitDiverged(f"bootstrap slope moved the period from {tau_0} to {tau}")

    window = min(t_samp, span)
    while True:
        pts = rel[rel <= window]
        res = _centered_residuals(pts, tau)
        h = int(np.ceil((1.0 - trim_fraction) * len(pts)))
        _, slope, _ = lts_line(pts - pts.mean(), res, h, seed=seed)
        if abs(slope) >= 0.5:
            raise FitDiverged(f"LTS slope {slope} out of range")
        tau = tau / (1.0 - slope)
        if window >= span:
            break
        window = min(4.0 * window, span)

    slope_total = (tau - tau_0) / tau
    if abs(slope_total) >= 1e-3:
        raise FitDiverged(
            f"refined period {tau} is implausibly far from the guess {tau_0}"
        )

    res = _centered_residuals(rel, tau)
    inlier = np.abs(res) <= tau * INLIER_WINDOW_FRACTION
    if np.count_nonzero(inlier) < 4:
        raise InsufficientInliers("fewer than 4 in-slot detections after refinement")
    te = res[inlier] - res[inlier].mean()
    rms_tie = float(np.sqrt(np.mean(te**2)))
    inlier_fraction = float(np.mean(inlier))

    indices = np.rint(rel / tau).astype(np.int64)
    kept = np.ones(len(indices), dtype=bool)
    kept[1:] = np.diff(indices) > 0
    n_collisions = int(np.count_nonzero(~kept))

    return PeriodEstimate(
        tau_b=float(tau),
        tau_guess=float(tau_0),
        slope=float(slope_total),
        rms_tie=rms_tie,
        index_offsets=indices[kept],
        ok=bool(rms_tie <= 3.0 * sigma),
        inlier_fraction=inlier_fraction,
        n_detections=int(t.size),
        n_collisions=n_collisions,
    )


def residual_rms(times, tau: float) -> float:
    """rms of in-slot residuals for a given period (diagnostic helper)."""
    t = check_timestamps(times)
    res = _centered_residuals(t - t[0], tau)
    inlier = np.abs(res) <= tau * INLIER_WINDOW_FRACTION
    if not np.any(inlier):
        return float(tau)
    te = res[inlier] - res[inlier].mean()
    return float(np.sqrt(np.mean(te**2)))


def assign_slots(times, est: PeriodEstimate) -> SlotAssignment:
    """Slot index per detection relative to the first one, by rounding
    time differences by tau_B. Later detections falling into an occupied
    slot are dropped and counted."""
    if not est.ok:
        raise EstimateNotOk("slot assignment requires a period estimate with ok=True")
    t = check_timestamps(times)
    rel = t - t[0]
    indices = np.rint(rel / est.tau_b).astype(np.int64)
    kept = np.ones(len(indices), dtype=bool)
    kept[1:] = np.diff(indices) > 0
    return SlotAssignment(
        indices=indices[kept], kept=kept, n_collisions=int(np.count_nonzero(~kept))
    )


def tie_series(times, indices, tau: float, reference: int = 0) -> TieSeries:
    """TIE values (t_b - t_ref) - (n_b - n_ref)*tau for given slot indices."""
    t = check_timestamps(times)
    n = np.asarray(indices, dtype=np.int64)
    values = (t - t[reference]) - (n - n[reference]) * tau
    return TieSeries(values=values, reference_detection=reference)


def drift_guard(est: PeriodEstimate, drift_rate: float, t_acq: float, sigma: float) -> float:
    """Largest acquisition window (halving from t_acq) for which the
    period change within a window stays below 10 sigma.

    `drift_rate` is the observed d(tau_B)/dt, e.g. the difference of two
    consecutive period estimates divided by the acquisition time. The
    guarded quantity is |drift_rate| * T^2 / tau_B.
    """
    t = float(t_acq)
    if drift_rate == 0.0:
        return t
    for _ in range(60):
        if abs(drift_rate) * t * t / est.tau_b <= 10.0 * sigma:
            return t
        t /= 2.0
    return t


class PeriodRecovery(BaseEstimator, TransformerMixin):
    """Estimator interface around coarse + LTS period recovery.

    Parameters mirror :func:`coarse_period_fft` and
    :func:`refine_period_lts`. `fit` accepts the 1-D array of detection
    timestamps; `transform` maps timestamps to slot indices relative to
    the first detection.
    """

    def __init__(
        self,
        tau_a: float,
        sigma: float = DEFAULT_SIGMA,
        n_samples: int = DEFAULT_N_SAMPLES,
        trim_fraction: float = DEFAULT_TRIM_FRACTION,
        search_halfwidth: float = 0.1,
        min_detections: int = 100,
        peak_factor: float = 5.0,
        seed: int = 0,
    ):
        self.tau_a = tau_a
        self.sigma = sigma
        self.n_samples = n_samples
        self.trim_fraction = trim_fraction
        self.search_halfwidth = search_halfwidth
        self.min_detections = min_detections
        self.peak_factor = peak_factor
        self.seed = seed

    def fit(self, X, y=None, tau_guess: float | None = None):
        """Recover the period from timestamps X. A `tau_guess` (e.g. the
        previous acquisition's estimate) skips the FFT stage."""
        t = check_timestamps(X)
        if tau_guess is None:
            tau_guess = coarse_period_fft(
                t,
                self.tau_a,
                n_samples=self.n_samples,
                search_halfwidth=self.search_halfwidth,
                min_detections=self.min_detections,
                peak_factor=self.peak_factor,
            )
        self.tau_guess_ = float(tau_guess)
        self.estimate_ = refine_period_lts(
            t,
            self.tau_guess_,
            trim_fraction=self.trim_fraction,
            sigma=self.sigma,
            n_samples=self.n_samples,
            seed=self.seed,
        )
        self.tau_b_ = self.estimate_.tau_b
        self.slope_ = self.estimate_.slope
        self.rms_tie_ = self.estimate_.rms_tie
        self.ok_ = self.estimate_.ok
        return self

    def transform(self, X) -> np.ndarray:
        """Slot index of each timestamp relative to the first, without
        collision dropping (use :func:`assign_slots` for that)."""
        t = check_timestamps(X)
        return np.rint((t - t[0]) / self.tau_b_).astype(np.int64)
