import numpy as np
import pytest

from qsync import (
    InvalidParams,
    LengthMismatch,
    StringParams,
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


def make(L, n1, lam, seed=0):
    return generate_string(StringParams(L=L, N1=n1, L1=L // n1, lam=lam, seed=seed))


def test_params_validation():
    with pytest.raises(InvalidParams):
        StringParams(L=10, N1=3, L1=3, lam=1.0)
    with pytest.raises(InvalidParams):
        StringParams(L=4, N1=2, L1=2, lam=-0.5)
    with pytest.raises(InvalidParams):
        StringParams(L=6, N1=1, L1=6, lam=1.0)
    with pytest.raises(InvalidParams):
        StringParams(L=4, N1=4, L1=1, lam=1.0)


def test_c0_formula_branches():
    assert c0_from_lambda(0.0) == 0.0
    assert c0_from_lambda(1.0) == pytest.approx(1.0 / 3.0)
    assert c0_from_lambda(0.5) == pytest.approx(0.25 / 3.0)
    # above 1 the formula switches branch
    assert c0_from_lambda(3.0) == pytest.approx(1.0 - 2.0 / 9.0)
    assert make(1000, 5, 3.0).c0_nominal == pytest.approx(0.7777777778)


def test_generation_is_deterministic():
    a = make(1200, 6, 1.0, seed=42)
    b = make(1200, 6, 1.0, seed=42)
    assert np.array_equal(a.symbols, b.symbols)
    c = make(1200, 6, 1.0, seed=43)
    assert not np.array_equal(a.symbols, c.symbols)


def test_symbols_are_pm1_int8():
    s = make(600, 3, 0.7, seed=1)
    assert s.symbols.dtype == np.int8
    assert set(np.unique(s.symbols)) <= {-1, 1}


def test_peaks_near_one_third_seed42():
    # L=1200, N1=6, lambda=1, seed=42: mean of the five secondary peaks of
    # the direct-summation autocorrelation lands within 0.06 of 1/3
    s = make(1200, 6, 1.0, seed=42)
    x = naive_xcorr(s.symbols, s.symbols)
    peaks = x[np.arange(1, 6) * 200]
    assert abs(peaks.mean() - 1.0 / 3.0) < 0.06


def test_lambda_zero_kills_peaks():
    s = make(20000, 10, 0.0, seed=3)
    x = fft_xcorr(s.symbols, s.symbols)
    peaks = x[np.arange(1, 10) * 2000]
    assert np.all(np.abs(peaks) < 6.0 / np.sqrt(20000))


def test_lag0_exactly_one():
    for seed in range(5):
        s = make(512, 4, 1.0, seed=seed)
        assert naive_xcorr(s.symbols, s.symbols)[0] == 1.0


def test_cyclic_shift_recovered():
    s = make(480, 4, 1.0, seed=7)
    shifted = np.roll(s.symbols, -97)  # b_n = a_{n+97}
    x = naive_xcorr(s.symbols, shifted)
    assert int(np.argmax(x)) == 97


def test_fft_variant_matches_direct():
    rng = np.random.default_rng(5)
    for _ in range(5):
        a = rng.choice([-1, 1], 256).astype(np.int8)
        b = rng.uniform(-1, 1, 256)
        assert np.allclose(naive_xcorr(a, b), fft_xcorr(a, b), atol=1e-12)


def test_autocorrelation_symmetry():
    s = make(300, 3, 1.0, seed=9)
    x = naive_xcorr(s.symbols, s.symbols)
    assert np.allclose(x[1:], x[1:][::-1], atol=1e-12)


def test_length_mismatch_rejected():
    with pytest.raises(LengthMismatch):
        naive_xcorr(np.ones(8, dtype=np.int8), np.ones(9))


def test_non_pm1_rejected():
    with pytest.raises(ValueError):
        naive_xcorr(np.array([1, 0, -1, 1]), np.ones(4))


def test_shape_report_passes_on_generated():
    s = make(10000, 10, 1.0, seed=2)
    report = verify_autocorrelation_shape(s)
    assert report.lag0_exact and report.peaks_ok and report.offpeak_ok
    assert report.passed


def test_shape_report_fails_on_constant():
    s = make(1000, 5, 1.0, seed=0)
    object.__setattr__(s, "symbols", np.ones(1000, dtype=np.int8))
    report = verify_autocorrelation_shape(s)
    assert not report.passed  # all lags equal 1: no peak structure


def test_shape_high_lambda_peaks():
    s = make(50000, 10, 3.0, seed=4)
    report = verify_autocorrelation_shape(s, peak_tol=0.03)
    assert report.peaks_ok
    assert report.c0_measured == pytest.approx(1.0 - 2.0 / 9.0, abs=0.02)


def test_peak_statistics_over_seeds():
    # mean of the secondary peaks stays within 4/(sqrt(N1-1) sqrt(L1)) of 1/3
    n1, l1 = 10, 1000
    bound = 4.0 / np.sqrt(n1 - 1) / np.sqrt(l1)
    hits = 0
    for seed in range(20):
        s = make(n1 * l1, n1, 1.0, seed=seed)
        x = fft_xcorr(s.symbols, s.symbols)
        mean_peak = x[np.arange(1, n1) * l1].mean()
        hits += abs(mean_peak - 1.0 / 3.0) <= bound
    assert hits >= 19


def test_offpeak_bound_over_seeds():
    # six sigmas of the construction's off-peak noise; the variance carries
    # a (1 + (N1-1)*c0^2) factor from the shared block bias
    n1, l1 = 10, 1000
    L = n1 * l1
    bound = 6.0 * np.sqrt(1.0 + (n1 - 1) / 9.0) / np.sqrt(L)
    hits = 0
    for seed in range(20):
        s = make(L, n1, 1.0, seed=seed)
        x = fft_xcorr(s.symbols, s.symbols)
        mask = np.ones(L, dtype=bool)
        mask[0] = False
        mask[np.arange(1, n1) * l1] = False
        hits += np.max(np.abs(x[mask])) < bound
    assert hits >= 19


def test_offpeak_noise_level_matches_model():
    # empirical off-peak standard deviation is sqrt(1 + (N1-1)*c0^2)/sqrt(L),
    # not the naive 1/sqrt(L) of independent signs
    n1, l1 = 10, 2000
    L = n1 * l1
    stds = []
    for seed in range(5):
        s = make(L, n1, 1.0, seed=seed)
        x = fft_xcorr(s.symbols, s.symbols)
        mask = np.ones(L, dtype=bool)
        mask[0] = False
        mask[np.arange(1, n1) * l1] = False
        stds.append(x[mask].std() * np.sqrt(L))
    assert np.mean(stds) == pytest.approx(np.sqrt(2.0), rel=0.05)


def test_text_file_roundtrip(tmp_path):
    s = make(1200, 6, 1.0, seed=42)
    path = tmp_path / "s.qsync"
    save_string(s, path)
    head = path.read_text().splitlines()[0]
    assert head == "QSYNC1 1200 6 200 1.0 42"
    back = load_string(path)
    assert back.params == s.params
    assert np.array_equal(back.symbols, s.symbols)
    assert back.c0_nominal == s.c0_nominal


def test_binary_file_roundtrip(tmp_path):
    s = make(1048, 4, 0.5, seed=17)  # length not a multiple of 8
    path = tmp_path / "s.qsyncb"
    save_string_binary(s, path)
    back = load_string_binary(path)
    assert back.params == s.params
    assert np.array_equal(back.symbols, s.symbols)


def test_load_rejects_corrupt(tmp_path):
    path = tmp_path / "bad"
    path.write_text("QSYNC1 8 2 4 1.0 0\n++--\n")  # body too short
    with pytest.raises(InvalidParams):
        load_string(path)
