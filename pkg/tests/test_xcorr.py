import numpy as np
import pytest
from sklearn.base import clone

from qsync import (
    DegenerateInput,
    DimensionMismatch,
    LengthMismatch,
    LengthNotDivisible,
    OffsetSearch,
    StringParams,
    baseline_offset,
    block_xcorr_column,
    block_xcorr_full,
    complexity_probe,
    default_n1,
    find_offset,
    generate_string,
    interleaved_dft,
    lemma1_reconstruct,
    naive_xcorr,
)
from qsync.xcorr import extension_phases


def spectrum_by_summation(s, n1):
    """Direct evaluation of the interleaved DFT definition."""
    s = np.asarray(s, dtype=float)
    l1 = len(s) // n1
    out = np.zeros((l1, n1), dtype=complex)
    for r in range(l1):
        for j in range(n1):
            out[r, j] = sum(
                s[r + k * l1] * np.exp(-2j * np.pi * j * k / n1) for k in range(n1)
            )
    return out


def test_interleaved_dft_constant():
    spec = interleaved_dft(np.ones(16), 4)
    assert np.allclose(spec.coefficients[:, 0], 4.0)
    assert np.allclose(spec.coefficients[:, 1:], 0.0)


def test_interleaved_dft_single_tap():
    # s[r + k*L1] nonzero only for k=1 -> row DFT is a pure phase
    n1, l1 = 3, 4
    s = np.zeros(n1 * l1)
    s[l1 : 2 * l1] = 1.0
    spec = interleaved_dft(s, n1)
    expected = np.exp(-2j * np.pi * np.arange(n1) / n1)
    assert np.allclose(spec.coefficients, np.tile(expected, (l1, 1)))


def test_interleaved_dft_matches_summation():
    rng = np.random.default_rng(0)
    s = rng.choice([-1, 1], 240)
    spec = interleaved_dft(s, 6)
    ref = spectrum_by_summation(s, 6)
    assert np.max(np.abs(spec.coefficients - ref)) < 1e-9 * np.max(np.abs(ref))


def test_interleaved_dft_divisibility():
    with pytest.raises(LengthNotDivisible):
        interleaved_dft(np.ones(10), 3)


def test_extension_relation():
    # S[r+L1, j] evaluated from the definition on the doubled index range
    # equals S[r, j] * exp(2*pi*i*j/N1)
    rng = np.random.default_rng(1)
    n1, l1 = 5, 8
    s = rng.choice([-1, 1], n1 * l1).astype(float)
    spec = interleaved_dft(s, n1).coefficients
    L = n1 * l1
    for r in range(l1):
        for j in range(n1):
            ext = sum(
                s[(r + l1 + k * l1) % L] * np.exp(-2j * np.pi * j * k / n1)
                for k in range(n1)
            )
            assert abs(ext - spec[r, j] * extension_phases(n1)[j]) < 1e-12


def test_block_xcorr_self_power_nonnegative():
    rng = np.random.default_rng(2)
    s = rng.choice([-1, 1], 120)
    spec = interleaved_dft(s, 4)
    col = block_xcorr_column(spec, spec, 0)
    assert col[0] >= 0.0


def test_block_xcorr_single_value_matches_column():
    rng = np.random.default_rng(3)
    a = interleaved_dft(rng.choice([-1, 1], 240), 6)
    b = interleaved_dft(rng.choice([-1, 1], 240), 6)
    for j in (0, 1, 5):
        col = np.asarray(block_xcorr_column(a, b, j), dtype=complex)
        for u in (0, 1, 17, 39):
            assert abs(block_xcorr_column(a, b, j, u=u) - col[u]) < 1e-12


def test_block_xcorr_shift_argmax():
    # exact cyclic shift by 137 shows up in the column-0 correlation at 137 mod 40
    s = generate_string(StringParams(L=240, N1=6, L1=40, lam=1.0, seed=11))
    b = np.roll(s.symbols, -137)
    sa = interleaved_dft(s.symbols, 6)
    sb = interleaved_dft(b, 6)
    col = block_xcorr_column(sa, sb, 0)
    assert int(np.argmax(col)) == 137 % 40 == 17


def test_interleaved_average_identity():
    # column 0 equals the interleaved average of the plain cross-correlation
    rng = np.random.default_rng(4)
    a = rng.choice([-1, 1], 240).astype(np.int8)
    b = rng.choice([-1, 1], 240).astype(np.int8)
    col = block_xcorr_column(interleaved_dft(a, 6), interleaved_dft(b, 6), 0)
    x = naive_xcorr(a, b).reshape(6, 40).T  # [u, j]
    assert np.max(np.abs(col - x.mean(axis=1))) < 1e-9


def test_dimension_mismatch():
    a = interleaved_dft(np.ones(24), 4)
    b = interleaved_dft(np.ones(24), 6)
    with pytest.raises(DimensionMismatch):
        block_xcorr_column(a, b, 0)


def test_lemma1_single_block_identity():
    row = np.array([0.37 + 0j])
    assert lemma1_reconstruct(row)[0] == pytest.approx(0.37)


def test_lemma1_full_reconstruction():
    # every (u, j): DFT of the block-correlation row reproduces the
    # direct-summation cross-correlation
    rng = np.random.default_rng(5)
    a = rng.choice([-1, 1], 240).astype(np.int8)
    b = rng.choice([-1, 1], 240).astype(np.int8)
    X = block_xcorr_full(interleaved_dft(a, 6), interleaved_dft(b, 6))
    rec = np.fft.fft(X, axis=1).real
    ref = naive_xcorr(a, b).reshape(6, 40).T
    assert np.max(np.abs(rec - ref)) < 1e-9
    imag = np.abs(np.fft.fft(X, axis=1).imag)
    assert np.max(imag) < 1e-9


def test_lemma1_inverse_roundtrip():
    rng = np.random.default_rng(6)
    a = rng.choice([-1, 1], 240).astype(np.int8)
    b = rng.choice([-1, 1], 240).astype(np.int8)
    X = block_xcorr_full(interleaved_dft(a, 6), interleaved_dft(b, 6))
    x = np.fft.fft(X, axis=1)
    back = np.fft.ifft(x, axis=1)  # X_{u,k} = (1/N1) sum_j e^{+2 pi i jk/N1} x
    assert np.max(np.abs(back - X)) < 1e-9


def test_find_offset_identity():
    s = generate_string(StringParams(L=1024, N1=4, L1=256, lam=1.0, seed=8))
    res = find_offset(s, s.symbols)
    assert res.m_opt == 0
    assert res.peak_value == pytest.approx(1.0, abs=1e-9)
    assert res.success


def test_find_offset_shift_erasures_flips():
    s = generate_string(StringParams(L=4096, N1=16, L1=256, lam=1.0, seed=9))
    rng = np.random.default_rng(10)
    m0 = 2741
    bob = np.roll(s.symbols, -m0).astype(np.int8)
    keep = rng.random(4096) < 0.25
    bob[~keep] = 0
    flip = keep & (rng.random(4096) < 0.1)
    bob[flip] = -bob[flip]
    res = find_offset(s, bob)
    assert res.m_opt == m0
    assert res.u_opt == m0 % 256 and res.j_opt == m0 // 256
    naive = naive_xcorr(s.symbols, bob)
    assert res.peak_value == pytest.approx(naive[m0], abs=1e-12)


def test_find_offset_rejects_bad_input():
    s = generate_string(StringParams(L=256, N1=4, L1=64, lam=1.0, seed=1))
    with pytest.raises(DegenerateInput):
        find_offset(s, np.zeros(256, dtype=np.int8))
    with pytest.raises(ValueError):
        find_offset(s, np.full(256, 2, dtype=np.int8))  # rejected, not clamped
    with pytest.raises(LengthMismatch):
        find_offset(s, np.ones(255, dtype=np.int8))


def test_find_offset_tie_breaks_to_smallest():
    # alternating string: correlation ties at every even lag; both stages
    # must resolve to the smallest index
    a = np.tile([1, -1], 4).astype(np.int8)
    res = find_offset(a, a, n1=2)
    assert res.m_opt == 0 and res.u_opt == 0 and res.j_opt == 0


def test_find_offset_reports_best_m_on_failure():
    # heavy erasure: distinguishability below threshold, but m_opt is
    # still reported with success=False
    s = generate_string(StringParams(L=1024, N1=4, L1=256, lam=1.0, seed=12))
    rng = np.random.default_rng(13)
    bob = np.roll(s.symbols, -100).astype(np.int8)
    bob[rng.random(1024) < 0.99] = 0
    res = find_offset(s, bob, delta_threshold=10.0)
    assert not res.success
    assert 0 <= res.m_opt < 1024


def test_offset_search_estimator_api():
    s = generate_string(StringParams(L=512, N1=4, L1=128, lam=1.0, seed=3))
    est = OffsetSearch(delta_threshold=8.0)
    assert clone(est).get_params() == est.get_params()
    est.fit(s)
    assert est.n1_ == 4 and est.c0_ == pytest.approx(1.0 / 3.0)
    bob = np.roll(s.symbols, -77).astype(np.int8)
    assert est.predict(bob) == 77
    assert est.result_.success
    # bare arrays need an explicit n1
    with pytest.raises(ValueError):
        OffsetSearch().fit(np.asarray(s.symbols))


def test_complexity_degenerate_n1_matches_baseline():
    r = complexity_probe(2**10, 1, seed=1)
    assert r.stage2_ops == 0
    assert abs(r.fast_ops - r.baseline_ops) <= 0.05 * r.baseline_ops


def test_complexity_fast_below_baseline():
    r = complexity_probe(2**12, 8, seed=2, eta=0.25)
    assert r.fast_ops < r.baseline_ops
    assert r.m_fast == r.m_baseline


def test_complexity_stage_scaling():
    # doubling L at fixed N1: stage 2 cost doubles, stage 1 slightly more
    r1 = complexity_probe(2**12, 8, seed=3)
    r2 = complexity_probe(2**13, 8, seed=3)
    assert r2.stage2_ops == pytest.approx(2 * r1.stage2_ops, rel=0.01)
    growth = r2.stage1_ops / r1.stage1_ops
    assert 2.0 < growth < 2.0 * (1.0 + 1.0 / np.log2(2**12 / 8)) + 0.05


def test_default_n1_near_log2():
    assert default_n1(2**16) == 16
    assert default_n1(2**20) == 16  # nearest power-of-two divisor of 2^20 to 20
    assert default_n1(1000) == 10  # log2(1000) ~ 9.97


def test_baseline_matches_naive():
    rng = np.random.default_rng(14)
    a = rng.choice([-1, 1], 512).astype(np.int8)
    b = np.roll(a, -333).astype(np.int8)
    b[rng.random(512) < 0.5] = 0
    m, corr = baseline_offset(a, b)
    ref = naive_xcorr(a, b)
    assert np.allclose(corr, ref, atol=1e-12)
    assert m == int(np.argmax(ref))
