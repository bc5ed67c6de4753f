"""Command-line front end: ``lbtcoex {analytic,simulate,validate}``.

Exit codes: 0 success, 1 tolerance or convergence failure, 2 usage or
configuration error (in which case no output file is written).
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .analytic import SWEEP_COLUMNS, ModelParams, UplinkMode, default_detection, solve_fixed_point, sweep
from .sim.bridge import run_saturated
from .sim.config import ConfigError, load_config, parse_overrides
from .sim.engine import run
from .sim.metrics import metrics_csv, metrics_summary, to_csv

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

# analytic keys besides the ModelParams fields
ANALYTIC_EXTRA = {"sensing": "ENERGY_DETECTION", "ed_mu": 1, "ed_tnr_db": 5.0}
VALIDATE_DEFAULTS = {"n_cat4": 2, "n_wifi": 0, "n_slots": 1_000_000, "w0": 16, "m": 4, "seed": 0}
VALIDATE_COLUMNS = ("class", "nodes", "p_tx_sim", "p_tx_analytic", "rel_error")


def parse_q_grid(text: str) -> list[float]:
    """``START:STOP:STEP`` inclusive of STOP (to rounding), or a single value."""
    try:
        parts = [float(x) for x in text.split(":")]
    except ValueError:
        raise ConfigError(f"bad --q-grid {text!r}") from None
    if len(parts) == 1:
        return parts
    if len(parts) != 3 or parts[2] <= 0 or parts[1] < parts[0]:
        raise ConfigError("--q-grid must be START:STOP:STEP with STEP > 0 and STOP >= START")
    start, stop, step = parts
    n = int(round((stop - start) / step))
    if start + n * step > stop + 1e-9:
        n -= 1
    return [round(start + i * step, 12) for i in range(n + 1)]


def _read_json(path):
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    return data


def _typed(key, value, like):
    if isinstance(like, bool):
        return str(value).lower() in ("1", "true", "yes") if isinstance(value, str) else bool(value)
    try:
        return type(like)(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key} expects {type(like).__name__}, got {value!r}") from None


def analytic_params(path=None, overrides=None) -> ModelParams:
    defaults = {f.name: f.default for f in dataclasses.fields(ModelParams)
                if f.name not in ("detection", "q") and f.default is not dataclasses.MISSING}
    defaults["uplink_mode"] = "SUL"
    allowed = {**defaults, **ANALYTIC_EXTRA}
    data = {**_read_json(path), **parse_overrides(overrides)}
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    vals = {k: _typed(k, data.get(k, v), v) for k, v in allowed.items()}
    sensing = vals.pop("sensing")
    mu, tnr = vals.pop("ed_mu"), vals.pop("ed_tnr_db")
    if sensing not in ("IDEAL", "ENERGY_DETECTION"):
        raise ConfigError("sensing must be IDEAL or ENERGY_DETECTION")
    try:
        det = None if sensing == "IDEAL" else default_detection(mu, tnr)
        return ModelParams(detection=det, **vals)
    except ValueError as e:
        raise ConfigError(str(e)) from None


def validate_settings(path=None, overrides=None, seed=None) -> dict:
    data = {**_read_json(path), **parse_overrides(overrides)}
    unknown = sorted(set(data) - set(VALIDATE_DEFAULTS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    out = {k: _typed(k, data.get(k, v), v) for k, v in VALIDATE_DEFAULTS.items()}
    if seed is not None:
        out["seed"] = seed
    if out["n_cat4"] < 0 or out["n_wifi"] < 0 or out["n_cat4"] + out["n_wifi"] < 1 or out["n_slots"] < 1:
        raise ConfigError("validate needs at least one node and one slot")
    return out


def _emit(text: str, out):
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def cmd_analytic(args) -> int:
    params = analytic_params(args.config, args.set)
    grid = parse_q_grid(args.q_grid)
    try:
        rows = sweep(params, grid)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    _emit(to_csv([dataclasses.asdict(r) for r in rows], SWEEP_COLUMNS), args.out)
    bad = [r.q for r in rows if not r.converged]
    if bad:
        print(f"fixed point did not converge at q = {bad}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_simulate(args) -> int:
    overrides = list(args.set or [])
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    cfg = load_config(args.config, overrides)
    if cfg.sim_duration_s == 0:
        print("warning: sim_duration_s is 0, metrics are empty", file=sys.stderr)
    m = run(cfg)
    _emit(metrics_csv(m), args.out)
    if args.out is not None:
        Path(args.out).with_suffix(".json").write_text(metrics_summary(m, cfg.to_dict()))
    return EXIT_OK


def cmd_validate(args) -> int:
    s = validate_settings(args.config, args.set, args.seed)
    if args.tolerance < 0:
        raise ConfigError("--tolerance must be >= 0")
    sim = run_saturated(s["n_cat4"], s["n_wifi"], n_slots=s["n_slots"], w0=s["w0"], m=s["m"], seed=s["seed"])
    sol = solve_fixed_point(ModelParams(q=1.0, w0=s["w0"], m=s["m"], n_wifi=s["n_wifi"], n_enb=s["n_cat4"],
                                        n_ue=0, detection=None, uplink_mode=UplinkMode.SUL))
    rows = []
    for cls, n, p_sim, p_ana in (("cat4", s["n_cat4"], sim.p_tx_cat4, sol.p_tx_cat4),
                                 ("wifi", s["n_wifi"], sim.p_tx_wifi, sol.p_tx_wifi)):
        if n == 0:
            continue
        rows.append({"class": cls, "nodes": n, "p_tx_sim": p_sim, "p_tx_analytic": p_ana,
                     "rel_error": abs(p_sim - p_ana) / p_ana})
    _emit(to_csv(rows, VALIDATE_COLUMNS), args.out)
    for r in rows:
        verdict = "ok" if r["rel_error"] <= args.tolerance else "FAIL"
        print(f"{r['class']}: sim {r['p_tx_sim']:.6g} analytic {r['p_tx_analytic']:.6g} "
              f"rel error {r['rel_error']:.3%} ({verdict})", file=sys.stderr)
    if not sol.converged:
        print("fixed point did not converge", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK if all(r["rel_error"] <= args.tolerance for r in rows) else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lbtcoex", description="LTE-U/MulteFire and WiFi coexistence toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--out", help="output CSV path (default: stdout)")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")

    a = sub.add_parser("analytic", help="fixed-point sweep over q")
    common(a)
    a.add_argument("--q-grid", default="0.05:1.0:0.05", help="START:STOP:STEP")
    a.set_defaults(func=cmd_analytic)

    s = sub.add_parser("simulate", help="run one scenario; writes CSV and a .json summary")
    common(s)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_simulate)

    v = sub.add_parser("validate", help="saturated state machines vs the analytic fixed point")
    common(v)
    v.add_argument("--seed", type=int)
    v.add_argument("--tolerance", type=float, default=0.02)
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    if getattr(args, "seed", None) is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be a 64-bit unsigned integer", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
