"""Command-line front end.

Subcommands ``clt``, ``dynamics``, ``protocol``, ``ghz`` and ``show-config``
read defaults, merge an optional YAML file and then command-line flags, run
the computation and write CSV or JSON. Exit codes: 0 success, 1 usage or
configuration error, 2 closed-form/oracle inconsistency, 3 capacity.
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import math
import sys
from dataclasses import replace

import numpy as np
import yaml

from . import __version__
from . import mean_field as mf
from . import protocol as pr
from . import spin_chain as sc
from .errors import CapacityError, ClosedFormUndefinedError, ConvergenceError

FORMAT_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_INCONSISTENT, EXIT_CAPACITY = 0, 1, 2, 3

CLT_COLUMNS = ("N", "beta", "observable", "finite_value_re", "finite_value_im", "limit_value", "abs_error",
               "provenance")
DYNAMICS_COLUMNS = ("N", "t", "observable", "exact_value", "tau_bar_pred", "tau_tilde_pred", "err_bar",
                    "err_tilde", "provenance")

DEFAULTS = {
    "format_version": FORMAT_VERSION,
    "seed": 20240601,
    "clt": {
        "n_list": [10, 100, 1000, 10000],
        "beta": [1.0],
        "observables": ["x", "z"],
        "bloch": [0.0, 0.0, 1.0],
    },
    "dynamics": {
        "n_list": [64, 128, 256],
        "t_grid": [0.0, mf.counterexample_time()],
        "couplings": [1.0, 0.0, 1.0],
        "max_excitations": 24,
        "bcs_n": [2, 3, 4, 5],
    },
    "protocol": {
        "s": 1.0,
        "gamma": 1.0,
        "couplings": [1.0, 0.0, 10.0],
        "c_t": 0.0,
        "t_grid": None,
        "measure": "abelian",
        "d": 1.0,
        "a": 1.0,
        "sweep": False,
        "depth_scan": False,
        "stability_maps": 100,
    },
}


class ConfigError(ValueError):
    pass


# -- configuration -------------------------------------------------------------

def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        if key not in base:
            raise ConfigError(f"unknown configuration key {path + key!r}")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"{path + key!r} must be a mapping")
            out[key] = _merge(base[key], val, f"{path}{key}.")
        else:
            out[key] = val
    return out


def _floats(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"cannot parse number list {text!r}") from exc


def _ints(text: str) -> list:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"cannot parse integer list {text!r}") from exc


def load_config(args) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as fh:
                data = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc.strerror}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML in {args.config}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a mapping")
        cfg = _merge(cfg, data)
    if cfg.get("format_version") != FORMAT_VERSION:
        raise ConfigError(f"unsupported format_version {cfg.get('format_version')!r}")
    cmd = getattr(args, "command", None)
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        cfg["seed"] = args.seed
    section = cfg.get(cmd) if cmd in ("clt", "dynamics", "protocol") else None
    if section is not None:
        if args.n_list is not None and "n_list" in section:
            section["n_list"] = _ints(args.n_list)
        if args.t_grid is not None and "t_grid" in section:
            section["t_grid"] = _floats(args.t_grid)
        if args.beta is not None and "beta" in section:
            section["beta"] = _floats(args.beta)
        if args.couplings is not None and "couplings" in section:
            section["couplings"] = _floats(args.couplings)
        if args.measure is not None and "measure" in section:
            section["measure"] = args.measure
        if args.d is not None and "d" in section:
            section["d"] = args.d
        if args.a is not None and "a" in section:
            section["a"] = args.a
        if getattr(args, "c_t", None) is not None and "c_t" in section:
            section["c_t"] = args.c_t
        if getattr(args, "sweep", False) and "sweep" in section:
            section["sweep"] = True
        if getattr(args, "depth_scan", False) and "depth_scan" in section:
            section["depth_scan"] = True
        if getattr(args, "max_excitations", None) is not None and "max_excitations" in section:
            section["max_excitations"] = args.max_excitations
    _validate(cfg)
    return cfg


def _validate(cfg: dict):
    if not isinstance(cfg["seed"], int) or cfg["seed"] < 0:
        raise ConfigError("seed must be a nonnegative integer")
    clt = cfg["clt"]
    for key in ("n_list", "beta", "observables"):
        if not clt[key]:
            raise ConfigError(f"clt.{key} must be nonempty")
    if any(o not in ("x", "y", "z") for o in clt["observables"]):
        raise ConfigError("clt.observables must be drawn from x, y, z")
    if any(int(n) < 0 for n in clt["n_list"]):
        raise ConfigError("clt.n_list entries must be nonnegative")
    dyn = cfg["dynamics"]
    for key in ("n_list", "t_grid"):
        if not dyn[key]:
            raise ConfigError(f"dynamics.{key} must be nonempty")
    if any(int(n) < 1 for n in dyn["n_list"]) or any(float(t) < 0 for t in dyn["t_grid"]):
        raise ConfigError("dynamics.n_list must be positive and t_grid nonnegative")
    for sec in ("dynamics", "protocol"):
        if len(cfg[sec]["couplings"]) != 3:
            raise ConfigError(f"{sec}.couplings needs three values a_x,a_y,a_z")
    prot = cfg["protocol"]
    if prot["measure"] not in pr.MEASUREMENTS:
        raise ConfigError(f"protocol.measure must be one of {pr.MEASUREMENTS}")
    if prot["t_grid"] is not None and not prot["t_grid"]:
        raise ConfigError("protocol.t_grid must be nonempty when given")


# -- output helpers -------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def to_csv(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row[c]) for c in columns])
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def to_json(payload: dict) -> str:
    return json.dumps(_jsonable(payload), sort_keys=True, indent=2) + "\n"


def _emit(text: str, out: str | None):
    if out is None:
        sys.stdout.write(text)
        return
    try:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise ConfigError(f"cannot write {out}: {exc.strerror}") from exc


def _envelope(kind: str, cfg: dict, body: dict) -> dict:
    return {"schema": f"mesofluct.{kind}", "version": FORMAT_VERSION, "package_version": __version__,
            "seed": cfg["seed"], **body}


# -- commands ------------------------------------------------------------------

def clt_rows(cfg: dict) -> list:
    c = cfg["clt"]
    omega = sc.SingleSiteState.from_bloch(c["bloch"])
    rows = []
    for axis in c["observables"]:
        obs = sc.pauli_observables(axis)
        for beta in c["beta"]:
            limit = sc.limit_char_fn(omega, obs, [beta])
            for n in c["n_list"]:
                val = sc.finite_N_char_fn(sc.FluctuationSpec(omega, obs, int(n)), [beta])
                rows.append({
                    "N": int(n), "beta": float(beta), "observable": f"sigma_{axis}",
                    "finite_value_re": val.real, "finite_value_im": val.imag,
                    "limit_value": limit.real, "abs_error": abs(val - limit),
                    "provenance": "finite=oracle;limit=closed-form",
                })
    rows.sort(key=lambda r: (r["beta"], r["N"], r["observable"]))
    return rows


def cmd_clt(cfg: dict, fmt: str) -> tuple:
    rows = clt_rows(cfg)
    if fmt == "json":
        return to_json(_envelope("clt", cfg, {"columns": list(CLT_COLUMNS), "rows": rows})), EXIT_OK
    return to_csv(CLT_COLUMNS, rows), EXIT_OK


def dynamics_rows(cfg: dict) -> list:
    d = cfg["dynamics"]
    rows = []
    for n in d["bcs_n"]:
        rows.append({"N": int(n), "t": None, "observable": "bcs_commutator_norm",
                     "exact_value": mf.bcs_commutator_check(int(n)), "tau_bar_pred": None,
                     "tau_tilde_pred": None, "err_bar": None, "err_tilde": None,
                     "provenance": "exact-dynamics"})
    meso = mf.meso_variance_curve(d["couplings"], d["n_list"], d["t_grid"], d["max_excitations"])
    for r in sorted(meso, key=lambda r: (r.N, r.t, mf.MESO_OBSERVABLES.index(r.observable))):
        rows.append({"N": r.N, "t": r.t, "observable": f"var_{r.observable}", "exact_value": r.exact,
                     "tau_bar_pred": r.tau_bar, "tau_tilde_pred": r.tau_tilde, "err_bar": r.err_bar,
                     "err_tilde": r.err_tilde, "provenance": "exact=exact-dynamics;pred=oracle"})
    return rows


def cmd_dynamics(cfg: dict, fmt: str) -> tuple:
    rows = dynamics_rows(cfg)
    if fmt == "json":
        d = cfg["dynamics"]
        rates = {}
        for t in d["t_grid"]:
            if t > 0:
                meso = [r for r in mf.meso_variance_curve(d["couplings"], d["n_list"], [t], d["max_excitations"])]
                rates[_fmt(t)] = mf.fitted_rate(meso, "S_y")
        body = {"columns": list(DYNAMICS_COLUMNS), "rows": rows, "fitted_rate_S_y": rates}
        return to_json(_envelope("dynamics", cfg, body)), EXIT_OK
    return to_csv(DYNAMICS_COLUMNS, rows), EXIT_OK


def _protocol_params(p: dict) -> list:
    ax, ay, az = (float(v) for v in p["couplings"])
    base = pr.ProtocolParams(s=float(p["s"]), gamma=float(p["gamma"]), a_x=ax, a_y=ay, a_z=az,
                             measurement=p["measure"], d=float(p["d"]), a=float(p["a"]))
    if p["t_grid"] is not None:
        return [replace(base, t=float(t)) for t in p["t_grid"]]
    return [base.with_ct(float(p["c_t"]))]


def cmd_protocol(cfg: dict, fmt: str) -> tuple:
    if fmt != "json":
        raise ConfigError("protocol output is JSON only")
    p = cfg["protocol"]
    try:
        params_list = _protocol_params(p)
    except (ValueError, ClosedFormUndefinedError) as exc:
        raise ConfigError(str(exc)) from exc
    reports, diffs = [], []
    for k, params in enumerate(params_list):
        try:
            clouds, rep = pr.run(params)
        except ClosedFormUndefinedError as exc:
            clouds, rep = pr.run(params, closed_form=False)
            rep.notes.append(f"closed form skipped: {exc}")
        entry = rep.to_dict()
        entry["schematic_hamiltonian_rates"] = pr.schematic_hamiltonian_rates(params)
        if params.measurement != "none" and p["stability_maps"]:
            stab = pr.stability_probe(clouds, seed=cfg["seed"] + k, n_maps=int(p["stability_maps"]))
            entry["stability"] = {"seed": stab.seed, "n_maps": stab.n_maps, "invariant": stab.invariant,
                                  "reference_verdict": stab.reference_verdict,
                                  "witness_min": stab.witness_min, "witness_max": stab.witness_max,
                                  "provenance": "oracle"}
        reports.append(entry)
        if not rep.consistent:
            diffs.append({"index": k, "t": params.t,
                          "mismatches": {n: c for n, c in rep.comparisons.items()
                                         if c["gating"] and c["abs_diff"] >= pr.CONSISTENCY_TOL},
                          "corrected": rep.corrected})
    body = {"reports": reports}
    if p["sweep"]:
        body["abelian_sweep"] = dict(pr.abelian_sweep(), provenance="closed-form+oracle")
    if p["depth_scan"]:
        ax, ay, az = (float(v) for v in p["couplings"])
        base = pr.ProtocolParams(s=float(p["s"]), a_x=ax, a_y=ay or 1.0, a_z=az, d=float(p["d"]), a=float(p["a"]))
        rows = pr.pure_depth_scan(base, 0.5, np.logspace(-1, -3, 10))
        body["pure_depth_scan"] = {"c_t": 0.5, "rows": rows, "provenance": "oracle",
                                   "monotone": all(b["sum"] < a["sum"] for a, b in zip(rows, rows[1:]))}
    if diffs:
        body["diff"] = diffs
    code = EXIT_INCONSISTENT if diffs else EXIT_OK
    return to_json(_envelope("protocol", cfg, body)), code


def cmd_ghz(cfg: dict, fmt: str) -> tuple:
    if fmt != "json":
        raise ConfigError("ghz output is JSON only")
    rep = pr.ghz_demo().to_dict()
    rep["provenance"] = "oracle"
    return to_json(_envelope("ghz", cfg, {"report": rep})), EXIT_OK


def cmd_show_config(cfg: dict, fmt: str) -> tuple:
    if fmt == "json":
        return to_json(cfg), EXIT_OK
    return yaml.safe_dump(_jsonable(cfg), sort_keys=True), EXIT_OK


COMMANDS = {"clt": cmd_clt, "dynamics": cmd_dynamics, "protocol": cmd_protocol, "ghz": cmd_ghz,
            "show-config": cmd_show_config}
DEFAULT_FORMAT = {"clt": "csv", "dynamics": "csv", "protocol": "json", "ghz": "json", "show-config": "yaml"}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="YAML configuration file")
    common.add_argument("--out", metavar="PATH", help="output file (default: stdout)")
    common.add_argument("--seed", type=int, help="seed for the random local maps")
    common.add_argument("--n-list", help="comma-separated N values")
    common.add_argument("--t-grid", help="comma-separated times")
    common.add_argument("--beta", help="comma-separated beta values")
    common.add_argument("--couplings", metavar="AX,AY,AZ", help="coupling constants")
    common.add_argument("--measure", choices=pr.MEASUREMENTS)
    common.add_argument("--d", type=float, help="measurement resolution")
    common.add_argument("--a", type=float, help="initial laser width parameter")
    common.add_argument("--format", choices=("csv", "json", "yaml"))
    parser = argparse.ArgumentParser(prog="mesofluct", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("clt", parents=[common], help="finite chain vs Gaussian limit")
    p = sub.add_parser("dynamics", parents=[common], help="finite-N dynamics vs mesoscopic predictions")
    p.add_argument("--max-excitations", type=int, help="Dicke truncation (spin flips per ensemble)")
    p = sub.add_parser("protocol", parents=[common], help="measurement protocol witness reports")
    p.add_argument("--c-t", type=float, help="evaluate at cos(s t a_x) = C_T (ignored with --t-grid)")
    p.add_argument("--sweep", action="store_true", help="add the abelian parameter sweep")
    p.add_argument("--depth-scan", action="store_true", help="add the pure-measurement a_x scan")
    sub.add_parser("ghz", parents=[common], help="three-qubit analogue")
    sub.add_parser("show-config", parents=[common], help="print the merged configuration")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    fmt = args.format or DEFAULT_FORMAT[args.command]
    try:
        cfg = load_config(args)
        if fmt == "yaml" and args.command != "show-config":
            raise ConfigError("yaml output is only available for show-config")
        if fmt == "csv" and args.command == "show-config":
            raise ConfigError("show-config prints yaml or json")
        text, code = COMMANDS[args.command](cfg, fmt)
        _emit(text, args.out)
        return code
    except ConfigError as exc:
        print(f"mesofluct: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CapacityError as exc:
        print(f"mesofluct: capacity exceeded: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except ConvergenceError as exc:
        print(f"mesofluct: numerical tolerance not met: {exc}", file=sys.stderr)
        return EXIT_INCONSISTENT


if __name__ == "__main__":
    sys.exit(main())
