"""Clock synchronization for pulse-train receivers.

Period recovery from sparse detection timestamps, fast two-stage
time-offset recovery on block-structured synchronization strings, and a
seeded channel simulator to exercise both.
"""

from .errors import (
    ConfigInvalid,
    DegenerateInput,
    DimensionMismatch,
    EstimateNotOk,
    FitDiverged,
    InsufficientInliers,
    InvalidParams,
    LengthMismatch,
    LengthNotDivisible,
    NoEdge,
    NoPeak,
    QSyncError,
    SyncFailed,
    TooFewDetections,
)
from .period import (
    ArrivalTimes,
    PeriodEstimate,
    PeriodRecovery,
    SlotAssignment,
    TieSeries,
    assign_slots,
    coarse_period_fft,
    drift_guard,
    refine_period_lts,
    residual_rms,
    tie_series,
)
from .pipeline import (
    BenchRow,
    RunConfig,
    RunReport,
    SweepCell,
    SweepGrid,
    required_bits,
    run_bench,
    run_sweep,
    run_sync,
    simulate_run,
)
from .simulate import (
    BobString,
    ChannelConfig,
    ClockPair,
    SimOutput,
    build_bob_string,
    first_guess_rising_edge,
    simulate,
)
from .strings import (
    ShapeReport,
    StringParams,
    SyncString,
    c0_from_lambda,
    fft_xcorr,
    generate_string,
    load_string,
    load_string_binary,
    naive_xcorr,
    save_string,
    save_string_binary,
    verify_autocorrelation_shape,
)
from .xcorr import (
    ComplexityCounters,
    ComplexityReport,
    InterleavedSpectrum,
    OffsetResult,
    OffsetSearch,
    OpCounter,
    baseline_offset,
    block_xcorr_column,
    block_xcorr_full,
    complexity_probe,
    default_n1,
    find_offset,
    interleaved_dft,
    lemma1_reconstruct,
)

__version__ = "0.1.0"
