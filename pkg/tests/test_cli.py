"""Command line entry points: run, summarize, report.

Runs here are tiny (a few units of the 1D bouncing particle) so the
whole module stays fast; long-horizon behavior lives elsewhere.
"""

import os

import numpy as np
import pytest

from varimpact.cli import (EXIT_IO, EXIT_OK, EXIT_STEP_FAILURE, EXIT_USAGE,
                           RunConfig, main, parse_method_token,
                           parse_trace_csv, run, summarize_files)
from varimpact.errors import ConfigurationError


def test_parse_method_token_forms():
    assert parse_method_token("gvi") == ("gvi", "gvi", None)
    assert parse_method_token("gvi-verlet") == ("gvi-verlet", "gvi", "verlet")
    assert parse_method_token("GVI-Midpoint") == ("gvi-midpoint", "gvi",
                                                  "midpoint")
    # the direct families carry a rule word in the family name itself
    assert parse_method_token("direct-midpoint") == ("direct-midpoint",
                                                     "direct-midpoint", None)
    assert parse_method_token("direct-endpoint") == ("direct-endpoint",
                                                     "direct-endpoint", None)
    assert parse_method_token("collision-verlet") == ("collision-verlet",
                                                      "collision", "verlet")
    with pytest.raises(ConfigurationError):
        parse_method_token("rk4")


def test_run_writes_trace_summary_and_rows(tmp_path):
    out = tmp_path / "out"
    code, written = run(RunConfig("particle1d", ["gvi"], duration=2.0,
                                  out=str(out)))
    assert code == EXIT_OK
    names = {os.path.basename(p) for p in written}
    assert names == {"particle1d_gvi.csv", "summary.txt", "summary.csv"}
    cols = parse_trace_csv(str(out / "particle1d_gvi.csv"))
    # duration 2.0 at the recommended h=1e-2: 200 steps + the initial row
    assert len(cols["t"]) == 201
    assert cols["t"][0] == 0.0
    assert cols["t"][-1] == pytest.approx(2.0)
    assert set(cols) == {"t", "q_0", "p_0", "H", "H_mod", "J", "g_min",
                         "f_max", "event"}
    assert np.abs(cols["H"] - 9.8).max() <= 1e-10


def test_run_is_deterministic(tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    for out in (a, b):
        run(RunConfig("particle1d", ["gvi"], duration=1.0, out=str(out)))
    ta = (a / "particle1d_gvi.csv").read_bytes()
    tb = (b / "particle1d_gvi.csv").read_bytes()
    assert ta == tb


def test_run_multiple_methods_and_summary_columns(tmp_path):
    out = tmp_path / "out"
    code, written = run(RunConfig("particle1d", ["gvi", "direct-endpoint"],
                                  duration=1.0, out=str(out)))
    assert code == EXIT_OK
    rows = summarize_files([str(out / "particle1d_gvi.csv"),
                            str(out / "particle1d_direct-endpoint.csv")])
    assert [r["trace"] for r in rows] == ["particle1d_gvi.csv",
                                         "particle1d_direct-endpoint.csv"]
    for r in rows:
        assert set(r) == {"trace", "rows", "H_drift", "H_envelope", "J_drift",
                          "J_envelope", "g_min", "f_max", "failure_t"}
        assert r["failure_t"] == ""
    assert float(rows[0]["H_drift"]) <= 1e-10


def test_run_exit_code_on_step_failure(tmp_path):
    # the sampled-energy collision run on the hopper dies mid-run; the
    # trace is still written and the exit code says so
    out = tmp_path / "out"
    cfg = RunConfig("pogo", [("collision", "collision", None,
                              {"energy": "verlet-numerical"})],
                    duration=600.0, out=str(out))
    code, written = run(cfg)
    assert code == EXIT_STEP_FAILURE
    cols = parse_trace_csv(str(out / "pogo_collision.csv"))
    assert cols["event"][-1] == 3.0
    rows = summarize_files([str(out / "pogo_collision.csv")])
    assert rows[0]["failure_t"] != ""


def test_main_run_and_summarize(tmp_path, capsys):
    out = tmp_path / "out"
    code = main(["run", "--scenario", "particle1d", "--method",
                 "gvi,collision", "--duration", "1.0", "--out", str(out)])
    assert code == EXIT_OK
    code = main(["summarize", str(out / "particle1d_gvi.csv"),
                 "--csv", str(tmp_path / "sum.csv")])
    assert code == EXIT_OK
    text = capsys.readouterr().out
    assert "H_envelope" in text and "particle1d_gvi.csv" in text
    header = (tmp_path / "sum.csv").read_text().splitlines()[0]
    assert header.startswith("trace,rows,H_drift")


def test_main_report_subcommand(tmp_path):
    out = tmp_path / "out"
    main(["run", "--scenario", "particle1d", "--method", "gvi",
          "--duration", "1.0", "--out", str(out)])
    code = main(["report", str(out / "particle1d_gvi.csv"),
                 "--out", str(tmp_path / "figs")])
    assert code == EXIT_OK
    made = set(os.listdir(tmp_path / "figs"))
    assert {"report_H.png", "report_J.png", "report_g_min.png",
            "report_summary.txt"} <= made


def test_main_config_file_and_flag_precedence(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text(
        "[run]\n"
        "scenario = particle1d\n"
        "method = gvi\n"
        "duration = 1.0\n"
        f"out = {tmp_path / 'from_file'}\n"
        "[scenario]\n"
        "q0 = 2.0\n")
    code = main(["run", "--config", str(ini)])
    assert code == EXIT_OK
    cols = parse_trace_csv(str(tmp_path / "from_file" / "particle1d_gvi.csv"))
    assert cols["q_0"][0] == 2.0
    assert cols["H"][0] == pytest.approx(19.6)
    # a flag beats the file for the same key
    code = main(["run", "--config", str(ini), "--out",
                 str(tmp_path / "from_flag"), "--set", "q0=3.0"])
    assert code == EXIT_OK
    cols = parse_trace_csv(str(tmp_path / "from_flag" / "particle1d_gvi.csv"))
    assert cols["q_0"][0] == 3.0


def test_main_method_options_from_config(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text(
        "[run]\n"
        "scenario = particle1d\n"
        "method = gvi\n"
        "duration = 0.5\n"
        f"out = {tmp_path / 'o'}\n"
        "[method.gvi]\n"
        "reflection = moreau\n")
    assert main(["run", "--config", str(ini)]) == EXIT_OK


def test_main_usage_errors(tmp_path, capsys):
    assert main(["run", "--scenario", "particle1d", "--method", "rk4",
                 "--duration", "1.0"]) == EXIT_USAGE
    assert main(["run", "--method", "gvi", "--duration", "1.0"]) == EXIT_USAGE
    assert main(["run", "--scenario", "particle1d", "--method", "gvi",
                 "--duration", "1.0", "--tol", "eps_wild=1"]) == EXIT_USAGE
    capsys.readouterr()


def test_main_io_errors(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "missing.ini")]) == EXIT_IO
    assert main(["summarize", str(tmp_path / "missing.csv")]) == EXIT_IO
    bad = tmp_path / "bad.csv"
    bad.write_text("t,H\n0.0,oops\n")
    assert main(["summarize", str(bad)]) == EXIT_IO
    capsys.readouterr()


def test_seventeen_digit_round_trip(tmp_path):
    out = tmp_path / "out"
    run(RunConfig("oscillator", ["gvi"], duration=0.5, out=str(out)))
    cols = parse_trace_csv(str(out / "oscillator_gvi.csv"))
    # full-precision write: the stored H0 equals the library value bit-for-bit
    from varimpact.scenarios import build_scenario
    from varimpact.sysmodel import hamiltonian
    sys, s0, _ = build_scenario("oscillator")
    assert cols["H"][0] == hamiltonian(sys, s0)
