import numpy as np
import pytest

from qsync import RunConfig, load_string, load_string_binary, simulate_run
from qsync.cli import main
from qsync.io import load_detections, load_truth, save_detections, save_ternary


def test_gen_string_roundtrip(tmp_path, capsys):
    out = tmp_path / "alice.qs"
    rc = main(["gen-string", "--L", "1200", "--N1", "6", "--lambda", "1.0",
               "--seed", "42", "--out", str(out)])
    assert rc == 0
    s = load_string(out)
    assert s.params.L == 1200 and s.params.N1 == 6 and s.params.seed == 42
    assert "c0=0.333333" in capsys.readouterr().out


def test_gen_string_binary(tmp_path):
    out = tmp_path / "alice.qsb"
    assert main(["gen-string", "--L", "1000", "--N1", "4", "--lambda", "0.5",
                 "--seed", "3", "--out", str(out), "--binary"]) == 0
    s = load_string_binary(out)
    assert s.params.lam == 0.5 and len(s.symbols) == 1000


def test_simulate_writes_csvs(tmp_path, capsys):
    prefix = tmp_path / "run"
    rc = main(["simulate", "--L", "10000", "--N1", "10", "--eta", "0.01",
               "--duration", "0.0003", "--seed", "5", "--jitter_sigma", "0",
               "--out", str(prefix)])
    assert rc == 0
    det = load_detections(f"{prefix}.csv")
    times, idx, is_bg = load_truth(f"{prefix}.truth.csv")
    assert len(det) == len(times) > 0
    assert np.all(np.diff(det.times) >= 0)


def test_period_cli(tmp_path, capsys):
    cfg = RunConfig(L=10000, n1=10, eta=5e-3, duration=2e-3, t_acq=2e-3,
                    n_samples=200_000, fractional_offset=2e-4,
                    jitter_sigma=1e-10, seed=9)
    _, sim = simulate_run(cfg)
    path = tmp_path / "det.csv"
    save_detections(path, sim)
    rc = main(["period", "--in", str(path), "--tauA", "20e-9", "--Tacq", "1.0",
               "--sigma", "1e-10", "--trim", "0.3", "--n-samples", "200000"])
    assert rc == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "tau_b,tau_guess,slope,rms_tie,inlier_fraction,ok"
    fields = out[1].split(",")
    assert float(fields[0]) == pytest.approx(20e-9 * (1 + 2e-4), rel=1e-6)
    assert fields[5] == "1"


def test_xcorr_cli(tmp_path, capsys):
    alice_path = tmp_path / "alice.qs"
    main(["gen-string", "--L", "4096", "--N1", "16", "--lambda", "1.0",
          "--seed", "11", "--out", str(alice_path)])
    s = load_string(alice_path)
    rng = np.random.default_rng(12)
    bob = np.roll(s.symbols, -777).astype(np.int8)
    bob[rng.random(4096) > 0.3] = 0
    bob_path = tmp_path / "bob.csv"
    save_ternary(bob_path, bob)
    capsys.readouterr()
    rc = main(["xcorr", "--alice", str(alice_path), "--bob", str(bob_path),
               "--threshold", "10"])
    assert rc == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "m_opt,u_opt,j_opt,peak,delta,success"
    fields = out[1].split(",")
    assert int(fields[0]) == 777
    assert fields[5] == "1"


def test_sync_cli_success_exit_code(tmp_path):
    rc = main(["sync", "--L", "100000", "--N1", "10", "--eta", "0.01",
               "--duration", "0.005", "--Tacq", "0.005", "--n_samples", "400000",
               "--fractional_offset", "5e-4", "--seed", "21",
               "--out", str(tmp_path / "windows.csv")])
    assert rc == 0
    lines = (tmp_path / "windows.csv").read_text().splitlines()
    assert lines[0].startswith("window,start_s,tau_b")
    assert len(lines) >= 2


def test_sync_cli_failure_exit_code(capsys):
    rc = main(["sync", "--L", "100000", "--N1", "10", "--eta", "2e-5",
               "--duration", "0.005", "--Tacq", "0.005", "--n_samples", "400000",
               "--seed", "21"])
    assert rc == 2


def test_sync_cli_from_files(tmp_path):
    cfg = RunConfig(L=100_000, n1=10, eta=1e-2, duration=5e-3, t_acq=5e-3,
                    n_samples=400_000, fractional_offset=5e-4,
                    jitter_sigma=1e-10, seed=21)
    alice, sim = simulate_run(cfg)
    from qsync import save_string
    from qsync.io import save_truth

    save_detections(tmp_path / "d.csv", sim)
    save_truth(tmp_path / "t.csv", sim)
    save_string(alice, tmp_path / "a.qs")
    rc = main(["sync", "--in", str(tmp_path / "d.csv"), "--alice", str(tmp_path / "a.qs"),
               "--truth", str(tmp_path / "t.csv"), "--L", "100000", "--N1", "10",
               "--eta", "0.01", "--duration", "0.005", "--Tacq", "0.005",
               "--n_samples", "400000"])
    assert rc == 0


def test_config_file_and_override(tmp_path, capsys):
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text(
        "# desk-scale run\nL=100000\nn1=10\neta=0.01\nduration=0.005\n"
        "t_acq=0.005\nn_samples=400000\nfractional_offset=5e-4\nseed=21\n"
    )
    rc = main(["sync", "--config", str(cfg_file), "--seed", "22"])
    assert rc == 0


def test_sweep_cli(tmp_path):
    out = tmp_path / "sweep.csv"
    rc = main(["sweep", "--qber", "0.02", "--bits", "10,1000", "--reps", "2",
               "--background", "0", "--L", "1000000", "--N1", "10",
               "--seed", "60", "--out", str(out)])
    assert rc == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "qber,bits,success_fraction"
    rows = {float(r.split(",")[1]): float(r.split(",")[2]) for r in lines[1:]}
    assert rows[1000.0] >= 0.5
    assert rows[10.0] == 0.0


def test_bench_cli(tmp_path):
    out = tmp_path / "bench.csv"
    rc = main(["bench", "--L", "1024,4096", "--n1", "log", "--out", str(out)])
    assert rc == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "L,N1,stage1_ops,stage2_ops,baseline_ops,wall_ns"
    assert len(lines) == 3


def test_cli_reports_errors(capsys):
    rc = main(["period", "--in", "/nonexistent/file.csv"])
    assert rc == 2 or rc != 0
