"""Command-line front end.

Subcommands:

  run        execute a scenario under one or more methods, write one trace
             CSV per method plus summary files
  summarize  tabulate drift/envelope statistics from trace CSVs
  report     render figures (energy, momentum, feasibility) from trace
             CSVs alongside the summary

Trace CSV schema (bit-exact contract): header
`t,q_0..q_{n-1},p_0..p_{n-1},H,H_mod,J,g_min,f_max,event`, floats with 17
significant digits, event as integer code.

Exit codes: 0 success, 2 usage, 3 step failure during a run, 4 I/O or
parse failure.
"""

import argparse
import configparser
import os
import sys as _sys

import numpy as np

from .cones import DEFAULT_TOL
from .diagnostics import run_trace, scalar_angular_momentum
from .errors import ConfigurationError, VarimpactError
from .integrators import EVENT_STEP_FAILURE, METHOD_FAMILIES, IntegratorConfig
from .quadrature import MIDPOINT, VERLET, Quadrature
from .scenarios import ScenarioSpec, build_scenario, override_keys

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_STEP_FAILURE = 3
EXIT_IO = 4

_SUMMARY_COLUMNS = ("trace", "rows", "H_drift", "H_envelope", "J_drift",
                    "J_envelope", "g_min", "f_max", "failure_t")


def _g17(x):
    return f"{float(x):.17g}"


class RunConfig:
    """Everything one `run` invocation needs."""

    def __init__(self, scenario, methods, duration, h=None, out=".",
                 decimate=1, seed=None, tolerances=None):
        if duration is None or duration <= 0:
            raise ConfigurationError("duration must be positive")
        if not methods:
            raise ConfigurationError("at least one method is required")
        if isinstance(scenario, str):
            scenario = ScenarioSpec(scenario)
        self.scenario = scenario
        # entries normalize to (token, family, rule_or_None, options)
        self.methods = []
        for m in methods:
            if isinstance(m, str):
                m = parse_method_token(m)
            m = tuple(m)
            if len(m) == 3:
                m = m + ({},)
            self.methods.append(m)
        self.duration = float(duration)
        self.h = h
        self.out = out
        self.decimate = int(decimate)
        self.seed = seed
        self.tolerances = tolerances if tolerances is not None else DEFAULT_TOL


def parse_method_token(token):
    tok = token.strip().lower()
    rule = None
    # a full family name wins over suffix stripping, so the direct
    # discretizations (whose names end in a rule word) parse whole
    if tok not in METHOD_FAMILIES:
        for suffix, r in (("-verlet", VERLET), ("-midpoint", MIDPOINT)):
            if tok.endswith(suffix):
                rule = r
                tok = tok[: -len(suffix)]
                break
    if tok not in METHOD_FAMILIES:
        raise ConfigurationError(f"unknown method {token!r}")
    return token.strip().lower(), tok, rule


def _method_config(family, rule, h, options, tol):
    kwargs = {}
    for key in ("reflection", "energy"):
        if key in options:
            kwargs[key] = options[key]
    for key in ("alpha", "beta", "gamma"):
        if key in options:
            kwargs[key] = float(options[key])
    if "imex" in options:
        kwargs["imex"] = str(options["imex"]).strip().lower() in (
            "1", "true", "yes", "on")
    return IntegratorConfig(family, Quadrature(rule, h), tolerances=tol,
                            **kwargs)


def trace_to_csv_lines(trace, dim):
    header = (["t"] + [f"q_{i}" for i in range(dim)]
              + [f"p_{i}" for i in range(dim)]
              + ["H", "H_mod", "J", "g_min", "f_max", "event"])
    lines = [",".join(header)]
    for state, rec in trace:
        vals = [rec.t]
        vals.extend(state.q)
        vals.extend(state.p)
        vals.append(rec.H)
        vals.append(np.nan if rec.H_modified is None else rec.H_modified)
        vals.append(scalar_angular_momentum(rec))
        vals.append(rec.g_min)
        vals.append(rec.f_max_abs)
        row = [_g17(v) for v in vals]
        row.append(str(int(rec.event)))
        lines.append(",".join(row))
    return lines


def run(config):
    """Execute a RunConfig.  Returns (exit_code, list of written paths)."""
    spec = config.scenario
    if config.seed is not None and "seed" in override_keys(spec.name):
        spec.overrides.setdefault("seed", config.seed)
    sys, state0, rec_cfg = build_scenario(spec)
    h = config.h if config.h is not None else rec_cfg.quadrature.h
    n_steps = int(round(config.duration / h))
    if n_steps < 1:
        raise ConfigurationError("duration shorter than one step")

    written = []
    any_failure = False
    os.makedirs(config.out, exist_ok=True)
    for token, family, rule, options in config.methods:
        rule_eff = rule if rule is not None else rec_cfg.quadrature.rule
        cfg = _method_config(family, rule_eff, h, options, config.tolerances)
        meta = {"scenario": spec.name, "method": token, "h": h,
                "seed": config.seed}
        trace = run_trace(sys, cfg, state0, n_steps, config.decimate, meta)
        if trace.failure is not None:
            any_failure = True
        path = os.path.join(config.out, f"{spec.name}_{token}.csv")
        with open(path, "w") as fh:
            fh.write("\n".join(trace_to_csv_lines(trace, sys.dim)) + "\n")
        written.append(path)

    table = summarize_files(written)
    txt = os.path.join(config.out, "summary.txt")
    with open(txt, "w") as fh:
        fh.write(format_summary_text(table) + "\n")
    csvp = os.path.join(config.out, "summary.csv")
    with open(csvp, "w") as fh:
        fh.write(format_summary_csv(table) + "\n")
    written.extend([txt, csvp])
    return (EXIT_STEP_FAILURE if any_failure else EXIT_OK), written


def parse_trace_csv(path):
    """Read one trace CSV into a dict of named float columns."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise VarimpactError(f"{path}: empty trace")
    names = lines[0].split(",")
    cols = {n: [] for n in names}
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != len(names):
            raise VarimpactError(
                f"{path}: parse error at line {lineno}: expected "
                f"{len(names)} fields, found {len(parts)}")
        for n, text in zip(names, parts):
            try:
                cols[n].append(float(text))
            except ValueError:
                raise VarimpactError(
                    f"{path}: parse error at line {lineno}: bad float {text!r}")
    return {n: np.array(v) for n, v in cols.items()}


def _series_stats(x):
    if x.size == 0 or not np.any(np.isfinite(x)):
        return np.nan, np.nan
    drift = float(np.nanmax(np.abs(x - x[0])))
    mean = float(np.nanmean(x))
    env = float(np.nanmax(x) - np.nanmin(x))
    if mean != 0.0 and np.isfinite(mean):
        env = env / abs(mean)
    return drift, env

def summarize_files(paths):
    """Per-trace summary rows: drift/envelope for H and J, worst residuals,
    failure time (empty when the run completed)."""
    rows = []
    for path in paths:
        cols = parse_trace_csv(path)
        for need in ("t", "H", "J", "g_min", "f_max", "event"):
            if need not in cols:
                raise VarimpactError(f"{path}: missing column {need!r}")
        H_drift, H_env = _series_stats(cols["H"])
        J_drift, J_env = _series_stats(cols["J"])
        g = cols["g_min"]
        f = cols["f_max"]
        fail = cols["t"][cols["event"] == EVENT_STEP_FAILURE]
        rows.append({
            "trace": os.path.basename(path),
            "rows": str(len(cols["t"])),
            "H_drift": f"{H_drift:.10g}",
            "H_envelope": f"{H_env:.10g}",
            "J_drift": f"{J_drift:.10g}",
            "J_envelope": f"{J_env:.10g}",
            "g_min": f"{np.nanmin(g):.10g}" if np.any(np.isfinite(g)) else "nan",
            "f_max": f"{np.nanmax(f):.10g}" if np.any(np.isfinite(f)) else "nan",
            "failure_t": f"{fail[0]:.10g}" if fail.size else "",
        })
    return rows


def format_summary_text(rows):
    widths = {c: max(len(c), max((len(r[c]) for r in rows), default=0))
              for c in _SUMMARY_COLUMNS}
    out = ["  ".join(c.ljust(widths[c]) for c in _SUMMARY_COLUMNS)]
    for r in rows:
        out.append("  ".join(r[c].ljust(widths[c]) for c in _SUMMARY_COLUMNS))
    return "\n".join(out)


def format_summary_csv(rows):
    out = [",".join(_SUMMARY_COLUMNS)]
    for r in rows:
        out.append(",".join(r[c] for c in _SUMMARY_COLUMNS))
    return "\n".join(out)


def _build_arg_parser():
    ap = argparse.ArgumentParser(prog="varimpact")
    sub = ap.add_subparsers(dest="command", required=True)

    rp = sub.add_parser("run", help="run a scenario under one or more methods")
    rp.add_argument("--config", help="INI config file; flags override it")
    rp.add_argument("--scenario")
    rp.add_argument("--method", help="comma-separated method tokens")
    rp.add_argument("--h", type=float)
    rp.add_argument("--duration", type=float)
    rp.add_argument("--out")
    rp.add_argument("--decimate", type=int)
    rp.add_argument("--seed", type=int)
    rp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    dest="overrides", help="scenario parameter override")
    rp.add_argument("--tol", action="append", default=[], metavar="KEY=VALUE",
                    help="tolerance override (eps_active, eps_tangent, eps_solver)")

    sp = sub.add_parser("summarize", help="summarize trace CSVs")
    sp.add_argument("traces", nargs="+")
    sp.add_argument("--csv", help="also write the summary as CSV here")

    pp = sub.add_parser("report", help="render figures from trace CSVs")
    pp.add_argument("traces", nargs="+")
    pp.add_argument("--out", default=".")
    return ap


def _parse_kv(items, what):
    out = {}
    for item in items:
        if "=" not in item:
            raise ConfigurationError(f"bad {what} {item!r}: expected KEY=VALUE")
        key, val = item.split("=", 1)
        out[key.strip()] = val.strip()
    return out


def _load_config_file(path):
    cp = configparser.ConfigParser()
    read = cp.read(path)
    if not read:
        raise VarimpactError(f"cannot read config file {path!r}")
    return cp

def _assemble_run_config(args):
    file_run = {}
    file_scenario = {}
    file_tol = {}
    method_sections = {}
    if args.config:
        cp = _load_config_file(args.config)
        if cp.has_section("run"):
            file_run = dict(cp.items("run"))
        if cp.has_section("scenario"):
            file_scenario = dict(cp.items("scenario"))
        if cp.has_section("tolerances"):
            file_tol = dict(cp.items("tolerances"))
        for section in cp.sections():
            if section.startswith("method."):
                method_sections[section[len("method."):]] = dict(cp.items(section))

    def pick(flag_value, key, cast=None):
        if flag_value is not None:
            return flag_value
        if key in file_run:
            return cast(file_run[key]) if cast else file_run[key]
        return None

    scenario_name = pick(args.scenario, "scenario")
    if scenario_name is None:
        raise ConfigurationError("a scenario is required (--scenario)")
    methods_text = pick(args.method, "method")
    if methods_text is None:
        raise ConfigurationError("at least one method is required (--method)")
    duration = pick(args.duration, "duration", float)
    if duration is None:
        raise ConfigurationError("a duration is required (--duration)")
    h = pick(args.h, "h", float)
    out = pick(args.out, "out") or "."
    decimate = pick(args.decimate, "decimate", int) or 1
    seed = pick(args.seed, "seed", int)

    overrides = dict(file_scenario)
    overrides.update(_parse_kv(args.overrides, "--set"))
    spec = ScenarioSpec(scenario_name, overrides)

    tol_map = dict(file_tol)
    tol_map.update(_parse_kv(args.tol, "--tol"))
    tol = DEFAULT_TOL
    if tol_map:
        known = {"eps_active", "eps_tangent", "eps_solver"}
        bad = set(tol_map) - known
        if bad:
            raise ConfigurationError(f"unknown tolerance keys {sorted(bad)}")
        tol = DEFAULT_TOL.replace(**{k: float(v) for k, v in tol_map.items()})

    methods = []
    for raw in methods_text.split(","):
        token, family, rule = parse_method_token(raw)
        methods.append((token, family, rule, method_sections.get(token, {})))

    return RunConfig(spec, methods, duration, h=h, out=out, decimate=decimate,
                     seed=seed, tolerances=tol)


def main(argv=None):
    ap = _build_arg_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return e.code if e.code is not None else EXIT_USAGE
    try:
        if args.command == "run":
            config = _assemble_run_config(args)
            code, _ = run(config)
            return code
        if args.command == "summarize":
            table = summarize_files(args.traces)
            print(format_summary_text(table))
            if args.csv:
                with open(args.csv, "w") as fh:
                    fh.write(format_summary_csv(table) + "\n")
            return EXIT_OK
        if args.command == "report":
            from .reporting import render_report
            paths = render_report(args.traces, args.out)
            for p in paths:
                print(p)
            return EXIT_OK
    except ConfigurationError as e:
        print(f"error: {e}", file=_sys.stderr)
        return EXIT_USAGE
    except (VarimpactError, OSError) as e:
        print(f"error: {e}", file=_sys.stderr)
        return EXIT_IO
    return EXIT_USAGE


if __name__ == "__main__":
    _sys.exit(main())
