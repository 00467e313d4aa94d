import json
import subprocess
import sys

import pytest

from oprenewal.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_NUMERIC, EXIT_OK, main

SMALL = ["--alpha", "1.3333333333333333", "--grid", "32", "--horizon", "256",
         "--tail-horizon", "4096"]


def data_rows(path):
    return [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]


def test_alpha_below_one_is_config_error(tmp_path, capsys):
    assert main(["--output-dir", str(tmp_path), "build", "--map", "lsv", "--alpha", "0.5"]) \
        == EXIT_CONFIG
    assert "alpha < 1: finite measure, out of scope" in capsys.readouterr().err


def test_missing_alpha_and_bad_grid(tmp_path):
    assert main(["--output-dir", str(tmp_path), "build"]) == EXIT_CONFIG
    assert main(["--output-dir", str(tmp_path), "build", "--alpha", "1.5", "--grid", "48"]) \
        == EXIT_CONFIG


def test_constants_pareto(tmp_path, capsys):
    assert main(["--output-dir", str(tmp_path), "constants", "--beta", "0.85"]) == EXIT_OK
    body = json.loads((tmp_path / "constants-beta0.85.json").read_text())
    assert body["header"]["tool"] == "oprenewal"
    assert body["d_beta_j"]["1"] == pytest.approx(0.10155, abs=5e-6)
    assert main(["--output-dir", str(tmp_path), "constants", "--beta", "1"]) == EXIT_CONFIG


def test_build_cache_hit_and_corruption(tmp_path, capsys):
    args = ["--output-dir", str(tmp_path), "build", *SMALL]
    assert main(args) == EXIT_OK
    assert capsys.readouterr().out.startswith("built")
    assert main(args) == EXIT_OK
    assert capsys.readouterr().out.startswith("cache hit")
    (cache,) = (tmp_path / "cache").glob("*.oprn")
    cache.write_bytes(cache.read_bytes()[:-7])
    with pytest.warns(RuntimeWarning, match="corrupted cache"):
        assert main(args) == EXIT_OK
    assert capsys.readouterr().out.startswith("built")


def test_verify_exit_codes(tmp_path):
    base = ["--output-dir", str(tmp_path), "verify", *SMALL]
    assert main(base + ["--suite", "first-order"]) == EXIT_OK
    assert main(base + ["--suite", "small-beta"]) == EXIT_NUMERIC
    assert main(base + ["--suite", "nonsense"]) == EXIT_CONFIG
    reports = sorted(tmp_path.glob("verify-*-first-order.json"))
    assert reports and json.loads(reports[0].read_text())["pass"] is True


def test_verify_failure_writes_reports(tmp_path):
    # beta = 1 on a coarse horizon: the Cesaro limit is still 10% off
    out = tmp_path / "fail"
    rc = main(["--output-dir", str(out), "verify", "--alpha", "1", "--grid", "32",
               "--horizon", "256", "--tail-horizon", "4096", "--suite", "dual-ergodicity"])
    assert rc == EXIT_FAIL
    assert list(out.glob("verify-*-dual-ergodicity.csv"))


def test_montecarlo_thread_independent(tmp_path):
    rows = []
    for threads in ("1", "2"):
        out = tmp_path / threads
        assert main(["--output-dir", str(out), "montecarlo", *SMALL, "--law", "arcsine",
                     "--n", "1000", "--samples", "6000", "--seed", "5",
                     "--threads", threads]) == EXIT_OK
        rows.append(data_rows(out / "montecarlo-arcsine-n1000-s5.csv"))
    assert rows[0] == rows[1]
    assert rows[0][0] == "seed,n,value" and len(rows[0]) == 6001


def test_config_file_and_env(tmp_path, monkeypatch):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("alpha = 1.3333333333333333\ngrid = 32\nhorizon = 256\n"
                   "tail_horizon = 4096\n")
    monkeypatch.setenv("OUTPUT_DIR", str(tmp_path / "env"))
    assert main(["--config", str(cfg), "tails"]) == EXIT_OK
    assert list((tmp_path / "env").glob("tails-*.csv"))
    cfg.write_text("alpha = 1.5\nbogus = 1\n")
    assert main(["--config", str(cfg), "tails"]) == EXIT_CONFIG


def test_custom_table(tmp_path, capsys):
    table = tmp_path / "lsv2.py"
    table.write_text(
        "ALPHA = 2.0\n"
        "BRANCHES = [\n"
        "    dict(lo=0.0, hi=0.5, forward=lambda x: x * (1 + 4 * x ** 2),\n"
        "         derivative=lambda x: 1 + 12 * x ** 2),\n"
        "    dict(lo=0.5, hi=1.0, forward=lambda x: 2 * x - 1,\n"
        "         derivative=lambda x: 2.0 + 0 * x, inverse=lambda t: 0.5 * (t + 1)),\n"
        "]\n")
    rc = main(["--output-dir", str(tmp_path / "o"), "tails", "--map", "custom",
               "--table", str(table), "--grid", "32", "--horizon", "256",
               "--tail-horizon", "4096"])
    assert rc == EXIT_OK
    assert "beta=0.5 " in capsys.readouterr().out


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "oprenewal", "--help"], capture_output=True,
                       text=True)
    assert r.returncode == 0 and "verify" in r.stdout


def test_scalar_suite_needs_no_map(tmp_path, capsys):
    rc = main(["--output-dir", str(tmp_path), "verify", "--suite", "scalar",
               "--scalar-n", "100000"])
    out = capsys.readouterr().out
    assert "scalar-first-order" in out and "karamata" in out
    assert not (tmp_path / "cache").exists()
    assert rc in (EXIT_OK, EXIT_FAIL)


def test_spectral_oracle_suite(tmp_path, capsys):
    rc = main(["--output-dir", str(tmp_path), "verify", *SMALL, "--suite", "spectral",
               "--oracle-n", "5"])
    assert rc == EXIT_OK
    assert "PASS oracle" in capsys.readouterr().out


def test_mittag_leffler_degenerate(tmp_path, capsys):
    rc = main(["--output-dir", str(tmp_path), "montecarlo", "--alpha", "1", "--grid", "32",
               "--horizon", "256", "--tail-horizon", "4096", "--law", "mittag-leffler",
               "--n", "2000", "--samples", "2000"])
    assert rc == EXIT_OK
    assert "degenerate(1)" in capsys.readouterr().out
