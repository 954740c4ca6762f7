"""Seeded simulator of the transmitter-channel-receiver chain.

Pulses are emitted strictly periodically in the transmitter clock; the
receiver clock runs at a fractional offset that may drift linearly, so
the emission time of pulse n in receiver units is

    t_n = t0 + n*tau_A*(1 + offset) + 0.5*drift*(n*tau_A)^2

Each pulse is detected in the sifted (Z) basis with probability eta --
eta is defined directly as the sifted transmittance, so the unsifted
X-basis detections arrive on top of it at rate eta*(1-z)/z. Detected
bits flip with probability qber, every detection gets Gaussian timing
jitter, and background counts arrive as a Poisson process with uniform
outcomes. Timestamps are quantized to the receiver's time resolution.

Everything is drawn from one numpy PCG64 generator, so a given
(clock, channel, string) triple reproduces bit-identical output.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigInvalid, EstimateNotOk, NoEdge
from .period import PeriodEstimate
from .strings import SyncString

OUTCOME_LABELS = ("Z0", "Z1", "X0", "X1")
OUTCOME_CODES = {label: i for i, label in enumerate(OUTCOME_LABELS)}
# bit/symbol convention: Z0 -> +1, Z1 -> -1, X outcomes carry no bit
OUTCOME_SYMBOLS = np.array([1, -1, 0, 0], dtype=np.int8)


@dataclass(frozen=True)
class ClockPair:
    """Transmitter/receiver clock relation in receiver time units."""

    tau_a: float
    fractional_offset: float = 0.0
    drift_rate: float = 0.0  # d(fractional offset)/dt, per second
    jitter_sigma: float = 0.0
    t0: float = 0.0

    def __post_init__(self):
        if self.tau_a <= 0:
            raise ConfigInvalid(f"tau_a must be positive, got {self.tau_a}")
        if self.jitter_sigma < 0:
            raise ConfigInvalid(f"jitter_sigma must be >= 0, got {self.jitter_sigma}")

    def emission_times(self, n: np.ndarray) -> np.ndarray:
        """Receiver-frame emission time of pulse indices n (first-order
        drift integration)."""
        a = self.tau_a * (1.0 + self.fractional_offset)
        b = 0.5 * self.drift_rate * self.tau_a * self.tau_a
        n = np.asarray(n, dtype=np.float64)
        return self.t0 + a * n + b * n * n


@dataclass(frozen=True)
class ChannelConfig:
    """Loss, error and background model of one simulated run."""

    eta: float
    duration: float
    seed: int = 0
    qber: float = 0.0
    background_rate: float = 0.0
    mu: float = 1.0  # mean photon number, bookkeeping only: detection is Bernoulli(eta)
    z_basis_prob: float = 0.9
    resolution: float = 81e-12  # timestamp quantization step; 0 disables

    def __post_init__(self):
        if not 0.0 < self.eta <= 1.0:
            raise ConfigInvalid(f"eta must be in (0, 1], got {self.eta}")
        if not 0.0 <= self.qber <= 0.5:
            raise ConfigInvalid(f"qber must be in [0, 0.5], got {self.qber}")
        if self.background_rate < 0:
            raise ConfigInvalid(f"background_rate must be >= 0, got {self.background_rate}")
        if not 0.0 < self.z_basis_prob <= 1.0:
            raise ConfigInvalid(f"z_basis_prob must be in (0, 1], got {self.z_basis_prob}")
        if self.duration <= 0:
            raise ConfigInvalid(f"duration must be positive, got {self.duration}")
        if self.resolution < 0:
            raise ConfigInvalid(f"resolution must be >= 0, got {self.resolution}")


@dataclass
class SimOutput:
    """Detections plus the hidden truth needed to score a recovery."""

    times: np.ndarray = field(repr=False)
    outcomes: np.ndarray = field(repr=False)  # codes into OUTCOME_LABELS
    truth_index: np.ndarray = field(repr=False)  # emitted pulse index, -1 for background
    is_background: np.ndarray = field(repr=False)
    emitted_symbol: np.ndarray = field(repr=False)  # +/-1 sent bit, 0 for background
    sync_string: SyncString
    clock: ClockPair
    config: ChannelConfig
    n_pulses: int

    def __len__(self):
        return len(self.times)


@dataclass
class BobString:
    """Ternary receiver string over L slots plus the write-collision report."""

    values: np.ndarray = field(repr=False)
    n_written: int
    n_collisions: int


def _thinned_indices(rng: np.random.Generator, n_pulses: int, p: float) -> np.ndarray:
    """Indices of detected pulses: Bernoulli(p) thinning drawn as geometric gaps."""
    if p >= 1.0:
        return np.arange(n_pulses, dtype=np.int64)
    if p <= 0.0 or n_pulses == 0:
        return np.empty(0, dtype=np.int64)
    chunks = []
    last = -1
    while last < n_pulses:
        size = max(1024, int(1.2 * p * (n_pulses - last)) + 16)
        gaps = rng.geometric(p, size)
        idx = last + np.cumsum(gaps)
        chunks.append(idx)
        last = int(idx[-1])
    idx = np.concatenate(chunks)
    return idx[idx < n_pulses]


def _pulse_count(clock: ClockPair, duration: float) -> int:
    """Number of pulses emitted before `duration` under the clock model."""
    a = clock.tau_a * (1.0 + clock.fractional_offset)
    b = 0.5 * clock.drift_rate * clock.tau_a * clock.tau_a
    span = duration - clock.t0
    if span <= 0:
        return 0
    if b == 0.0:
        m = int(span / a) + 1
    else:
        disc = a * a + 4.0 * b * span
        if disc <= 0:
            return 0
        m = int((-a + np.sqrt(disc)) / (2.0 * b)) + 1
    while m > 0 and clock.emission_times(m - 1) >= duration:
        m -= 1
    while clock.emission_times(m) < duration:
        m += 1
    return m


def simulate(clock: ClockPair, chan: ChannelConfig, s: SyncString) -> SimOutput:
    """Run one transmission: the sync string followed by random payload bits.

    Requires the sync string to fit in the run (duration >= L * tau_a).
    Returns detections sorted by (quantized) timestamp together with the
    per-detection truth.
    """
    L = s.params.L
    if chan.duration < L * clock.tau_a:
        raise ConfigInvalid(
            f"duration {chan.duration} too short for the {L}-symbol string "
            f"({L * clock.tau_a:.6g} s)"
        )
    rng = np.random.Generator(np.random.PCG64(chan.seed))
    n_pulses = _pulse_count(clock, chan.duration)

    p_sift = chan.eta
    p_x = min(1.0 - p_sift, p_sift * (1.0 - chan.z_basis_prob) / chan.z_basis_prob)
    p_det = p_sift + p_x

    idx = _thinned_indices(rng, n_pulses, p_det)
    n_det = len(idx)
    t_sig = clock.emission_times(idx) + clock.jitter_sigma * rng.standard_normal(n_det)

    sifted = rng.random(n_det) < (p_sift / p_det)
    emitted = np.empty(n_det, dtype=np.int8)
    in_sync = idx < L
    emitted[in_sync] = s.symbols[idx[in_sync]]
    n_payload = int(np.count_nonzero(~in_sync))
    emitted[~in_sync] = (2 * rng.integers(0, 2, n_payload) - 1).astype(np.int8)

    flips = rng.random(n_det) < chan.qber
    measured = np.where(flips, -emitted, emitted)
    outcomes = np.where(measured > 0, OUTCOME_CODES["Z0"], OUTCOME_CODES["Z1"]).astype(np.int8)
    x_out = (OUTCOME_CODES["X0"] + rng.integers(0, 2, n_det)).astype(np.int8)
    outcomes[~sifted] = x_out[~sifted]

    n_bg = rng.poisson(chan.background_rate * chan.duration)
    t_bg = rng.uniform(0.0, chan.duration, n_bg)
    out_bg = rng.integers(0, 4, n_bg).astype(np.int8)

    times = np.concatenate([t_sig, t_bg])
    outcomes = np.concatenate([outcomes, out_bg])
    truth = np.concatenate([idx, np.full(n_bg, -1, dtype=np.int64)])
    is_bg = np.concatenate([np.zeros(n_det, dtype=bool), np.ones(n_bg, dtype=bool)])
    emitted = np.concatenate([emitted, np.zeros(n_bg, dtype=np.int8)])

    if chan.resolution > 0:
        times = np.rint(times / chan.resolution) * chan.resolution
    order = np.argsort(times, kind="stable")

    return SimOutput(
        times=times[order],
        outcomes=outcomes[order],
        truth_index=truth[order],
        is_background=is_bg[order],
        emitted_symbol=emitted[order],
        sync_string=s,
        clock=clock,
        config=chan,
        n_pulses=n_pulses,
    )


def first_guess_rising_edge(
    times,
    tau_b: float,
    eta_hint: float,
    window_slots: int | None = None,
) -> int:
    """First slot (relative to the first detection) where the windowed
    detection rate exceeds half the expected signal rate.

    `eta_hint` is the expected number of detections per slot once the
    signal is on. On background-free data the returned slot is within
    ~2/eta of the true signal start.
    """
    t = np.asarray(times, dtype=np.float64)
    if t.size == 0:
        raise NoEdge("no detections")
    slots = np.rint((t - t[0]) / tau_b).astype(np.int64)
    if window_slots is None:
        window_slots = max(8, int(round(4.0 / eta_hint)))
    # at least four counts so an isolated background clump cannot fake an edge
    threshold = max(0.5 * eta_hint * window_slots, 4.0)
    ends = np.searchsorted(slots, slots + window_slots, side="left")
    counts = ends - np.arange(len(slots))
    hits = np.nonzero(counts >= threshold)[0]
    if hits.size == 0:
        raise NoEdge(
            f"windowed rate never reached {threshold:.3g} detections per {window_slots} slots"
        )
    return int(slots[hits[0]])


def build_bob_string(detections, est: PeriodEstimate, first_guess_slot: int, L: int) -> BobString:
    """Ternary receiver string over L slots starting at `first_guess_slot`.

    Z-basis detections write +1 (Z0) or -1 (Z1) into their slot; X-basis
    detections occupy their slot with 0; empty slots stay 0. When several
    detections land in one slot the first (earliest) one wins and the
    rest are counted as collisions.

    `detections` is any object with `times` and `outcomes` attributes
    (a SimOutput or a loaded detection record).
    """
    if not est.ok:
        raise EstimateNotOk("bob string construction requires a period estimate with ok=True")
    t = np.asarray(detections.times, dtype=np.float64)
    codes = np.asarray(detections.outcomes, dtype=np.int8)
    slots = np.rint((t - t[0]) / est.tau_b).astype(np.int64) - first_guess_slot
    in_window = (slots >= 0) & (slots < L)
    slots = slots[in_window]
    symbols = OUTCOME_SYMBOLS[codes[in_window]]

    q, first = np.unique(slots, return_index=True)  # first occurrence wins
    values = np.zeros(L, dtype=np.int8)
    values[q] = symbols[first]
    return BobString(
        values=values,
        n_written=int(np.count_nonzero(values)),
        n_collisions=int(len(slots) - len(q)),
    )
