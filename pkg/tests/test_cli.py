import json

import numpy as np
import pytest

from sh2d.cli import main
from sh2d.config import parse_config
from sh2d.fields import read_snapshot

TINY = (
    "model.mu = 0.4\n"
    "grid.nx = 16\n"
    "grid.ny = 16\n"
    "grid.lx = 12.0\n"
    "grid.ly = 12.0\n"
    "step.t_end = 2.0\n"
    "step.series_stride = 4\n"
    "step.snapshot_stride = 20\n"
    "ic.amplitude = 1.2\n"
)


@pytest.fixture
def tiny_cfg(tmp_path):
    p = tmp_path / "tiny.cfg"
    p.write_text(TINY)
    return p


def test_simulate_writes_run_directory(tiny_cfg, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["simulate", str(tiny_cfg), "--out", str(out)]) == 0
    run = out / "tiny"
    assert (run / "series.csv").exists()
    assert (run / "final.sh2d").exists()
    assert (run / "reports.txt").exists()
    manifest = json.loads((run / "manifest.json").read_text())
    assert "series.csv" in manifest["outputs"]
    assert all(len(v) == 64 for v in manifest["outputs"].values())
    # canonical echo must parse back to the same configuration
    echoed = parse_config((run / "config.txt").read_text())
    assert echoed["ic.amplitude"] == 1.2
    assert "ok" in capsys.readouterr().out


def test_simulate_is_reproducible(tiny_cfg, tmp_path):
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    assert main(["simulate", str(tiny_cfg), "--out", str(out1)]) == 0
    assert main(["simulate", str(tiny_cfg), "--out", str(out2)]) == 0
    m1 = json.loads((out1 / "tiny" / "manifest.json").read_text())["outputs"]
    m2 = json.loads((out2 / "tiny" / "manifest.json").read_text())["outputs"]
    assert m1 == m2


def test_simulate_set_overrides(tiny_cfg, tmp_path):
    out = tmp_path / "out"
    assert main(["simulate", str(tiny_cfg), "--out", str(out), "--set", "model.mu=0.2"]) == 0
    echoed = parse_config((out / "tiny" / "config.txt").read_text())
    assert echoed["model.mu"] == 0.2


def test_simulate_parallel_workers(tmp_path):
    cfgs = []
    for i, mu in enumerate((0.3, 0.5)):
        p = tmp_path / f"c{i}.cfg"
        p.write_text(TINY.replace("0.4", str(mu), 1))
        cfgs.append(str(p))
    out = tmp_path / "out"
    assert main(["simulate", *cfgs, "--out", str(out), "--workers", "2"]) == 0
    assert (out / "c0" / "series.csv").exists()
    assert (out / "c1" / "series.csv").exists()


def test_config_error_exits_two(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("model.mu = 0.4\nmodel.oops = 1\n")
    assert main(["simulate", str(bad), "--out", str(tmp_path / "o")]) == 2
    missing = tmp_path / "missing.cfg"
    assert main(["simulate", str(missing), "--out", str(tmp_path / "o")]) == 2


def test_verify_bounds_roundtrip(tiny_cfg, tmp_path):
    out = tmp_path / "out"
    main(["simulate", str(tiny_cfg), "--out", str(out)])
    assert main(["verify-bounds", "--run", str(out / "tiny")]) == 0


def test_verify_bounds_detects_tampering(tiny_cfg, tmp_path):
    out = tmp_path / "out"
    main(["simulate", str(tiny_cfg), "--out", str(out)])
    series = out / "tiny" / "series.csv"
    lines = series.read_text().splitlines()
    cols = lines[3].split(",")
    cols[1] = "99.0"  # push one l2 sample far above the envelope
    lines[3] = ",".join(cols)
    series.write_text("\n".join(lines) + "\n")
    assert main(["verify-bounds", "--run", str(out / "tiny")]) == 1


def test_final_snapshot_matches_config(tiny_cfg, tmp_path):
    out = tmp_path / "out"
    main(["simulate", str(tiny_cfg), "--out", str(out)])
    f, t = read_snapshot(out / "tiny" / "final.sh2d")
    assert t == pytest.approx(2.0)
    assert f.grid.nx == 16 and f.grid.lx == 12.0
    rows = np.loadtxt(out / "tiny" / "series.csv", delimiter=",", skiprows=1)
    from sh2d.fields import l2_norm

    assert l2_norm(f) == pytest.approx(rows[-1, 1], rel=1e-12)


def test_lyapunov_command(tmp_path, capsys):
    cfg = tmp_path / "ly.cfg"
    cfg.write_text(
        TINY + "lyapunov.m = 3\nlyapunov.t_span = 1.0\nlyapunov.reorth_period = 5\n"
    )
    out = tmp_path / "out"
    assert main(["lyapunov", str(cfg), "--out", str(out)]) == 0
    run = out / "ly-lyapunov"
    report = json.loads((run / "report.json").read_text())
    assert len(report["exponents"]) == 3
    assert report["T"] == pytest.approx(1.0)
    lines = (run / "exponents.csv").read_text().splitlines()
    assert lines[0] == "t,lambda_1,lambda_2,lambda_3,trace"
    assert "lambda_1=" in capsys.readouterr().out


def test_lyapunov_rejects_decaying_regime(tmp_path, capsys):
    cfg = tmp_path / "ly.cfg"
    cfg.write_text(TINY.replace("model.mu = 0.4", "model.mu = -0.4"))
    assert main(["lyapunov", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "mu" in capsys.readouterr().err


def test_theory_command(capsys):
    assert main(["theory", "--mu", "0.5", "--a", "1", "--b", "1"]) == 0
    out = capsys.readouterr().out
    assert "nonlocal_bound" in out
    assert "2" in out
    assert main(["theory"]) == 2


def test_bench_command(tmp_path, capsys):
    csv = tmp_path / "bench.csv"
    code = main(
        [
            "bench-nonlocal",
            "--sizes",
            "8,12",
            "--strategies",
            "circular",
            "--repeats",
            "1",
            "--csv",
            str(csv),
        ]
    )
    assert code == 0
    lines = csv.read_text().splitlines()
    assert lines[0] == "strategy,n,median_ns,max_dev"
    assert len(lines) == 3
    assert main(["bench-nonlocal", "--sizes", "7"]) == 2


def test_out_root_from_environment(tiny_cfg, tmp_path, monkeypatch):
    monkeypatch.setenv("SH2D_OUT", str(tmp_path / "envout"))
    assert main(["simulate", str(tiny_cfg)]) == 0
    assert (tmp_path / "envout" / "tiny" / "series.csv").exists()
