"""End-to-end synchronization runs, parameter sweeps and benchmarks.

A run processes detections in acquisition windows of T_acq seconds.
Every window gets a period estimate; the first window additionally
drives the offset search (rising edge -> ternary receiver string ->
two-stage correlation), which is computed exactly once per run. Later
windows reuse the offset and chain their period guess from the previous
window, falling back to the FFT stage only when the chained refinement
fails. When consecutive estimates reveal a drift that violates the
10-sigma window bound, or a window's residuals fail the rms criterion,
the acquisition window is halved.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .errors import (
    ConfigInvalid,
    DegenerateInput,
    EstimateNotOk,
    FitDiverged,
    InsufficientInliers,
    NoEdge,
    NoPeak,
    QSyncError,
    SyncFailed,
    TooFewDetections,
)
from .period import (
    PeriodEstimate,
    coarse_period_fft,
    drift_guard,
    refine_period_lts,
)
from .simulate import (
    ChannelConfig,
    ClockPair,
    build_bob_string,
    first_guess_rising_edge,
    simulate,
)
from .strings import StringParams, SyncString, generate_string
from .xcorr import OffsetResult, OffsetSearch, complexity_probe, default_n1

_RECOVERABLE = (TooFewDetections, NoPeak, NoEdge, FitDiverged, InsufficientInliers,
                DegenerateInput, EstimateNotOk)


@dataclass
class RunConfig:
    """Everything one synchronization run needs, simulation included."""

    # synchronization string
    L: int = 1_000_000
    n1: int = 10
    lam: float = 1.0
    string_seed: int = 7
    # clocks
    tau_a: float = 20e-9
    fractional_offset: float = 0.0
    drift_rate: float = 0.0
    jitter_sigma: float = 1e-10
    t0: float = 0.0
    # channel
    eta: float = 1e-3
    qber: float = 0.0
    background_rate: float = 0.0
    z_basis_prob: float = 0.9
    duration: float = 1.0
    seed: int = 1
    resolution: float = 81e-12
    # analysis
    t_acq: float = 1.0
    n_samples: int = 1_000_000
    trim_fraction: float = 0.3
    sigma: float = 1e-10
    delta_threshold: float = 10.0
    eta_hint: float = 0.0  # detections per slot for the edge search; 0 = derive

    _ALIASES = {"lambda": "lam", "tauA": "tau_a", "tau_A": "tau_a", "Tacq": "t_acq", "N1": "n1"}

    @classmethod
    def from_mapping(cls, mapping: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        kwargs = {}
        for key, value in mapping.items():
            name = cls._ALIASES.get(key, key)
            if name not in known:
                raise ConfigInvalid(f"unknown config key: {key}")
            kwargs[name] = value
        return cls(**kwargs)

    def clock(self) -> ClockPair:
        return ClockPair(
            tau_a=self.tau_a,
            fractional_offset=self.fractional_offset,
            drift_rate=self.drift_rate,
            jitter_sigma=self.jitter_sigma,
            t0=self.t0,
        )

    def channel(self) -> ChannelConfig:
        return ChannelConfig(
            eta=self.eta,
            duration=self.duration,
            seed=self.seed,
            qber=self.qber,
            background_rate=self.background_rate,
            z_basis_prob=self.z_basis_prob,
            resolution=self.resolution,
        )

    def string_params(self) -> StringParams:
        if self.L % self.n1:
            raise ConfigInvalid(f"L={self.L} not divisible by n1={self.n1}")
        return StringParams(
            L=self.L, N1=self.n1, L1=self.L // self.n1, lam=self.lam, seed=self.string_seed
        )

    def detection_rate_hint(self) -> float:
        if self.eta_hint:
            return self.eta_hint
        return self.eta + self.eta * (1.0 - self.z_basis_prob) / self.z_basis_prob


@dataclass
class RunReport:
    """Everything a run learned, plus bookkeeping the tests assert on."""

    period_estimates: list = field(default_factory=list)
    window_starts: list = field(default_factory=list)
    offset: OffsetResult | None = None
    first_guess_slot: int | None = None
    offset_lift: int | None = None  # m_opt lifted to a signed offset
    synchronized: bool = False
    alignment_accuracy: float | None = None
    timings: dict = field(default_factory=dict)
    offset_search_calls: int = 0
    coarse_fft_calls: int = 0
    failure: str | None = None

    PERIOD_CSV_HEADER = "window,start_s,tau_b,tau_guess,slope,rms_tie,inlier_fraction,ok"

    def period_csv_rows(self):
        for i, (start, est) in enumerate(zip(self.window_starts, self.period_estimates)):
            yield (
                f"{i},{start:.9g},{est.tau_b:.17g},{est.tau_guess:.17g},"
                f"{est.slope:.9g},{est.rms_tie:.9g},{est.inlier_fraction:.6g},{int(est.ok)}"
            )


def simulate_run(config: RunConfig):
    """Generate the string and simulate one transmission for `config`."""
    alice = generate_string(config.string_params())
    sim = simulate(config.clock(), config.channel(), alice)
    return alice, sim


def _recover_window(times, config: RunConfig, tau_guess, report: RunReport) -> PeriodEstimate:
    """Period recovery for one window, chaining from `tau_guess` when given."""
    if tau_guess is None:
        report.coarse_fft_calls += 1
        tau_guess = coarse_period_fft(
            times, config.tau_a, n_samples=config.n_samples
        )
        chained = False
    else:
        chained = True
    try:
        return refine_period_lts(
            times,
            tau_guess,
            trim_fraction=config.trim_fraction,
            sigma=config.sigma,
            n_samples=config.n_samples,
        )
    except (FitDiverged, InsufficientInliers):
        if not chained:
            raise
    report.coarse_fft_calls += 1
    tau_guess = coarse_period_fft(times, config.tau_a, n_samples=config.n_samples)
    return refine_period_lts(
        times,
        tau_guess,
        trim_fraction=config.trim_fraction,
        sigma=config.sigma,
        n_samples=config.n_samples,
    )


def run_sync(
    config: RunConfig,
    detections=None,
    alice: SyncString | None = None,
    truth=None,
) -> RunReport:
    """Execute one full synchronization run.

    Without `detections` the run simulates its own data from `config`
    (and scores alignment accuracy against the hidden truth). With
    `detections` (an object carrying `times` and `outcomes`) the caller
    must supply the transmitted `alice` string; `truth` is an optional
    (emitted_index, is_background) pair for scoring.

    Raises SyncFailed, with the partial report attached, when a stage
    errors out. An unsuccessful offset search (low distinguishability)
    does not raise; it returns a report with synchronized=False.
    """
    report = RunReport()
    t_start = time.perf_counter()
    if detections is None:
        alice, sim = simulate_run(config)
        detections = sim
        if truth is None:
            truth = (sim.truth_index, sim.is_background)
    elif alice is None:
        raise ConfigInvalid("running from recorded detections requires the alice string")
    report.timings["simulate"] = time.perf_counter() - t_start

    times = np.asarray(detections.times, dtype=np.float64)
    if times.size == 0:
        raise SyncFailed("no detections", report)

    searcher = OffsetSearch(n1=config.n1, delta_threshold=config.delta_threshold).fit(alice)
    L = alice.params.L

    t_period = t_offset = 0.0
    t_acq_cur = config.t_acq
    cursor = times[0]
    t_end = times[-1]
    prev_est = None
    prev_start = None
    window_slices = []
    min_window = config.t_acq / 64.0

    while cursor < t_end:
        lo = np.searchsorted(times, cursor, side="left")
        hi = np.searchsorted(times, cursor + t_acq_cur, side="left")
        if hi - lo < 30:
            break  # unusable tail
        w_times = times[lo:hi]
        tic = time.perf_counter()
        try:
            est = _recover_window(
                w_times, config, prev_est.tau_b if prev_est else None, report
            )
        except _RECOVERABLE as exc:
            report.failure = f"period recovery: {exc}"
            report.timings["period"] = t_period + time.perf_counter() - tic
            raise SyncFailed(report.failure, report) from exc
        t_period += time.perf_counter() - tic

        if not est.ok and t_acq_cur > min_window:
            t_acq_cur = max(t_acq_cur / 2.0, min_window)
            continue  # retry the same cursor with a shorter window

        report.period_estimates.append(est)
        report.window_starts.append(float(cursor - times[0]))
        window_slices.append((lo, hi, est))

        if prev_est is not None:
            dtau_dt = (est.tau_b - prev_est.tau_b) / (cursor - prev_start)
            recommended = drift_guard(est, dtau_dt, t_acq_cur, config.sigma)
            if recommended < t_acq_cur:
                t_acq_cur = max(recommended, min_window)
        prev_est, prev_start = est, cursor
        cursor = times[hi] if hi < len(times) else t_end

    if not window_slices:
        report.failure = "no window with enough detections"
        raise SyncFailed(report.failure, report)

    # offset recovery on the first window, retried once with twice the data
    tic = time.perf_counter()
    first_lo, first_hi, first_est = window_slices[0]
    rate_hint = config.detection_rate_hint()
    offset = None
    for attempt in range(2):
        hi = first_hi
        est = first_est
        if attempt == 1:
            hi = np.searchsorted(times, times[0] + 2.0 * config.t_acq, side="left")
            if hi <= first_hi:
                break  # no extra data to retry with
            try:
                est = refine_period_lts(
                    times[first_lo:hi],
                    first_est.tau_b,
                    trim_fraction=config.trim_fraction,
                    sigma=config.sigma,
                    n_samples=config.n_samples,
                )
            except _RECOVERABLE:
                break
        try:
            edge = first_guess_rising_edge(times[first_lo:hi], est.tau_b, rate_hint)
            window = _Window(times[first_lo:hi], np.asarray(detections.outcomes)[first_lo:hi])
            bob = build_bob_string(window, est, edge, L)
            report.offset_search_calls += 1
            offset = searcher.search(bob.values)
        except _RECOVERABLE as exc:
            report.failure = f"offset recovery: {exc}"
            report.timings["offset"] = time.perf_counter() - tic
            raise SyncFailed(report.failure, report) from exc
        report.offset = offset
        report.first_guess_slot = edge
        if offset.success:
            break
    t_offset = time.perf_counter() - tic

    report.timings["period"] = t_period
    report.timings["offset"] = t_offset
    report.offset_lift = offset.m_opt if offset.m_opt <= L // 2 else offset.m_opt - L
    report.synchronized = bool(
        offset.success and all(e.ok for e in report.period_estimates)
    )
    if not report.synchronized and report.failure is None:
        report.failure = "offset distinguishability below threshold" if not offset.success \
            else "a window failed the rms criterion"

    if truth is not None:
        report.alignment_accuracy = _alignment_accuracy(
            times, window_slices, report, truth
        )
    return report


@dataclass
class _Window:
    times: np.ndarray
    outcomes: np.ndarray


def _alignment_accuracy(times, window_slices, report: RunReport, truth) -> float:
    """Fraction of non-background detections (in processed windows) whose
    reconstructed absolute index matches the emitted one."""
    truth_index, is_background = truth
    truth_index = np.asarray(truth_index)
    is_background = np.asarray(is_background)

    base = 0
    prev_t = prev_slot = None
    correct = total = 0
    for lo, hi, est in window_slices:
        w_times = times[lo:hi]
        rel = np.rint((w_times - w_times[0]) / est.tau_b).astype(np.int64)
        if prev_t is not None:
            base = prev_slot + int(np.rint((w_times[0] - prev_t) / est.tau_b))
        slots = base + rel
        n_abs = report.offset_lift + (slots - report.first_guess_slot)
        signal = ~is_background[lo:hi]
        correct += int(np.count_nonzero(n_abs[signal] == truth_index[lo:hi][signal]))
        total += int(np.count_nonzero(signal))
        prev_t, prev_slot = w_times[-1], slots[-1]
    return correct / total if total else float("nan")


@dataclass
class SweepGrid:
    """Grid of the robustness sweep: QBER values against detected sync bits."""

    qbers: list
    bits: list
    repetitions: int = 10
    background_rate: float = 200.0

    def __post_init__(self):
        if not self.qbers or not self.bits:
            raise ConfigInvalid("sweep grid needs at least one qber and one bits value")
        if any(b <= 0 for b in self.bits) or any(q < 0 for q in self.qbers):
            raise ConfigInvalid("sweep grid values must be positive")
        if self.repetitions < 1:
            raise ConfigInvalid("repetitions must be >= 1")


@dataclass
class SweepCell:
    qber: float
    bits: float
    success_fraction: float

    def csv_row(self) -> str:
        return f"{self.qber:g},{self.bits:g},{self.success_fraction:.3f}"

    CSV_HEADER = "qber,bits,success_fraction"


def run_sweep(grid: SweepGrid, base: RunConfig) -> list[SweepCell]:
    """Run `repetitions` seeded end-to-end syncs per (qber, bits) cell.

    A repetition counts as success when the run reports synchronized=True
    and, since the truth is known, every non-background detection got the
    correct absolute index. Failures (raised or reported) are data.
    """
    cells = []
    for ci, qber in enumerate(grid.qbers):
        for bi, bits in enumerate(grid.bits):
            eta = float(bits) / base.L
            wins = 0
            for rep in range(grid.repetitions):
                cfg = replace(
                    base,
                    eta=eta,
                    qber=float(qber),
                    background_rate=grid.background_rate,
                    seed=base.seed + 7919 * (ci * len(grid.bits) + bi) + rep,
                )
                try:
                    report = run_sync(cfg)
                except SyncFailed:
                    continue
                except QSyncError:
                    continue
                if report.synchronized and (
                    report.alignment_accuracy is None or report.alignment_accuracy >= 0.999
                ):
                    wins += 1
            cells.append(
                SweepCell(
                    qber=float(qber),
                    bits=float(bits),
                    success_fraction=wins / grid.repetitions,
                )
            )
    return cells


def required_bits(cells: list[SweepCell], qber: float, level: float = 0.9):
    """Smallest bits value whose cell at `qber` reaches `level`, else None."""
    ok = [c.bits for c in cells if c.qber == qber and c.success_fraction >= level]
    return min(ok) if ok else None


@dataclass
class BenchRow:
    L: int
    n1: int
    stage1_ops: int
    stage2_ops: int
    baseline_ops: int
    wall_ns: int

    def csv_row(self) -> str:
        return (
            f"{self.L},{self.n1},{self.stage1_ops},{self.stage2_ops},"
            f"{self.baseline_ops},{self.wall_ns}"
        )

    CSV_HEADER = "L,N1,stage1_ops,stage2_ops,baseline_ops,wall_ns"


def run_bench(L_values, n1_policy="log", seed: int = 0, eta: float = 0.01) -> list[BenchRow]:
    """Instrumented op counts plus wall time of the fast search per L.

    `n1_policy` is either "log" (divisor of L nearest log2 L) or an
    integer used for every L. Alice-side preparation is excluded from
    the timing, matching the op-count convention.
    """
    from .xcorr import probe_instance

    rows = []
    for L in L_values:
        n1 = default_n1(L) if n1_policy == "log" else int(n1_policy)
        probe = complexity_probe(L, n1, seed=seed, eta=eta)

        alice, b, _ = probe_instance(L, n1, seed=seed, eta=eta)
        searcher = OffsetSearch(n1=n1).fit(alice)
        tic = time.perf_counter_ns()
        searcher.search(b)
        wall_ns = time.perf_counter_ns() - tic
        rows.append(
            BenchRow(
                L=L,
                n1=n1,
                stage1_ops=probe.stage1_ops,
                stage2_ops=probe.stage2_ops,
                baseline_ops=probe.baseline_ops,
                wall_ns=int(wall_ns),
            )
        )
    return rows
