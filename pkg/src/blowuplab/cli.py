"""Command-line entry point: ``blowuplab <command> [--config FILE] [--set key=value] [--out DIR]``.

Exit codes: 0 claims verified, 1 claim violated, 2 usage or configuration
error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import math
import os
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np
import yaml

from . import __version__, evolution, polyfield, recurrence, spectral_scan
from .errors import ArgumentError, BlowupLabError, NumericalError

EXIT_OK, EXIT_CLAIM, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3
KNOWN = {(0, 1.0), (0, 3.0), (1, 0.0), (1, 1.0)}

DEFAULTS = {
    "output_dir": "blowuplab_out",
    "spectrum": {"ell_max": 6, "re_range": [0.0, 5.0], "im_range": [-5.0, 5.0], "step": 0.25,
                 "n_cap": 2000, "tol": 1e-3, "collocation_N": 64, "eig_tol": 1e-6},
    "certify": {"kinds": ["GenericEll", "EllZero", "SusyEllOne"], "ell_min": 2, "ell_max": 20,
                "re_max": 40.0, "im_max": 40.0, "step": 0.5, "axis_max": 200.0,
                "axis_step": 0.25, "n_cap": 200, "exclude_radius": 0.05, "extra_points": []},
    "dissipativity": {"samples": 200, "seed": 0, "max_degree": 6, "n_terms": 6},
    "evolve": {"mode": "linear", "data": "h0", "N": 64, "tau_end": 5.0, "dt": None,
               "sample_every": 0.05, "fit_window": [1.0, 5.0], "rate_tol": 1e-3,
               "drift_tol": 1e-8},
    "threshold": {"N": 128, "alpha_lo": -0.04, "alpha_hi": 0.05, "tau_end": 12.0,
                  "blowup_cutoff": 50.0, "decay_cutoff": 0.2, "target_width": 1e-2,
                  "alpha_tol": 1e-2, "max_iter": 20, "monotone_points": 5},
}


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Configuration.

def _merge(base: dict, extra: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        where = f"{path}{k}"
        if k not in base:
            raise ConfigError(f"unknown configuration key {where!r}")
        if isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(f"{where!r} must be a mapping")
            out[k] = _merge(base[k], v, where + ".")
        else:
            out[k] = v
    return out


def _apply_set(cfg: dict, item: str) -> None:
    if "=" not in item:
        raise ConfigError(f"--set expects key=value, got {item!r}")
    key, raw = item.split("=", 1)
    parts = key.strip().split(".")
    node = cfg
    for p in parts[:-1]:
        if p not in node or not isinstance(node[p], dict):
            raise ConfigError(f"unknown configuration key {key!r}")
        node = node[p]
    if parts[-1] not in node:
        raise ConfigError(f"unknown configuration key {key!r}")
    try:
        node[parts[-1]] = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse value for {key!r}: {exc}") from None


def load_config(path: str | None, sets: list, out: str | None) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if path:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"malformed config: {exc}") from None
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError("config must be a mapping at the top level")
        cfg = _merge(cfg, data)
    env = os.environ.get("BLOWUPLAB_OUT")
    if env:
        cfg["output_dir"] = env
    for item in sets or []:
        _apply_set(cfg, item)
    if out:
        cfg["output_dir"] = out
    return cfg


def config_hash(cfg: dict, command: str) -> str:
    body = {k: v for k, v in cfg.items() if k != "output_dir"}
    blob = json.dumps({"command": command, "config": body}, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Output helpers.

class Writer:
    def __init__(self, cfg: dict, command: str):
        self.dir = Path(cfg["output_dir"])
        self.dir.mkdir(parents=True, exist_ok=True)
        self.meta = {"tool": "blowuplab", "version": __version__, "command": command,
                     "config_hash": config_hash(cfg, command)}
        self.written: list = []

    def json(self, name: str, payload: dict) -> Path:
        p = self.dir / name
        doc = {"meta": self.meta, **payload}
        p.write_text(json.dumps(_jsonable(doc), sort_keys=True, indent=2) + "\n")
        self.written.append(str(p.name))
        return p

    def csv(self, name: str, header: list, rows) -> Path:
        p = self.dir / name
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(list(header) + ["config_hash", "version"])
        for r in rows:
            w.writerow([_cell(x) for x in r] + [self.meta["config_hash"], __version__])
        p.write_text(buf.getvalue())
        self.written.append(str(p.name))
        return p


def _cell(x):
    if isinstance(x, float):
        return repr(x)
    if x is None:
        return ""
    return x


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, complex):
        return [x.real, x.imag]
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.complexfloating):
        return [float(x.real), float(x.imag)]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


# ---------------------------------------------------------------------------
# Commands.

def cmd_spectrum(cfg: dict) -> int:
    c = cfg["spectrum"]
    W = Writer(cfg, "spectrum")
    rep = spectral_scan.scan_halfplane(int(c["ell_max"]), tuple(c["re_range"]), tuple(c["im_range"]),
                                       float(c["step"]), n_cap=int(c["n_cap"]), tol=float(c["tol"]))
    found = set(rep.eigenvalues())
    grid_pts = {(e.ell, complex(e.lambda_re, e.lambda_im)) for e in rep.entries}
    expected = {(ell, complex(lam)) for ell, lam in KNOWN} & grid_pts
    scan_ok = found == expected
    colloc = []
    N = int(c["collocation_N"])
    coll_ok = True
    for ell in range(int(c["ell_max"]) + 1):
        sp = evolution.discrete_spectrum(ell, N)
        target = sorted([lam for l, lam in KNOWN if l == ell], reverse=True)
        got = sorted(sp.eigenvalues, key=lambda z: -z.real)
        ok = len(got) == len(target) and all(
            abs(z - t) <= float(c["eig_tol"]) for z, t in zip(got, target))
        coll_ok &= ok
        colloc.append({"ell": ell, "N": N, "eigenvalues": sp.eigenvalues,
                       "expected": target, "rejected_as_spurious": sp.rejected, "ok": ok})
    W.json("scan.json", {"scan": rep.to_json(), "eigenvalues_found": sorted(found, key=_key),
                         "expected_on_grid": sorted(expected, key=_key),
                         "missing": sorted(expected - found, key=_key),
                         "unexpected": sorted(found - expected, key=_key),
                         "collocation": colloc, "ok": bool(scan_ok and coll_ok)})
    W.csv("scan.csv", ["ell", "lambda_re", "lambda_im", "classification", "ratio_tail_re",
                       "ratio_tail_im", "polynomial_termination"],
          [(e.ell, e.lambda_re, e.lambda_im, e.classification, e.ratio_tail_re, e.ratio_tail_im,
            e.polynomial_termination) for e in rep.entries])
    if not (scan_ok and coll_ok):
        print("eigenvalue mismatch: missing", sorted(expected - found, key=_key), "unexpected",
              sorted(found - expected, key=_key), file=sys.stderr)
        return EXIT_CLAIM
    return EXIT_OK


def _key(t):
    return (t[0], t[1].real, t[1].imag)


def cmd_certify(cfg: dict) -> int:
    c = cfg["certify"]
    W = Writer(cfg, "certify")
    grid = recurrence.default_lambda_grid(float(c["re_max"]), float(c["im_max"]), float(c["step"]),
                                          float(c["axis_max"]), float(c["axis_step"]))
    extra = np.array([complex(*p) if isinstance(p, (list, tuple)) else complex(p)
                      for p in c["extra_points"]], dtype=complex)
    grid = np.concatenate([grid, extra])
    reports = []
    ok = True
    for kind in c["kinds"]:
        rep = recurrence.verify_bounds(kind, range(int(c["ell_min"]), int(c["ell_max"]) + 1), grid,
                                       n_cap=int(c["n_cap"]), exclude_radius=float(c["exclude_radius"]))
        ok &= rep.ok
        reports.append(rep.to_json())
    closed = recurrence.validate_closed_forms()
    W.json("bounds.json", {"reports": reports, "closed_forms": closed,
                           "table_checksum": recurrence.closed_form_table_checksum(), "ok": bool(ok)})
    rows = []
    for rep in reports:
        for e in rep["entries"]:
            rows.append((e["kind"], e["ell"], e["lambda_re"], e["lambda_im"], e["quantity"],
                         e["value"], e["bound"], e["slack"]))
    W.csv("bounds.csv", ["kind", "ell", "lambda_re", "lambda_im", "quantity", "value", "bound",
                         "slack"], rows)
    return EXIT_OK if ok else EXIT_CLAIM


def cmd_dissipativity(cfg: dict) -> int:
    c = cfg["dissipativity"]
    W = Writer(cfg, "dissipativity")
    rows = polyfield.dissipativity_sweep(int(c["samples"]), seed=int(c["seed"]),
                                         max_degree=int(c["max_degree"]), n_terms=int(c["n_terms"]))
    worst = max(Fraction(r.margin_numerator, r.margin_denominator) for r in rows)
    lo, hi = polyfield.equivalence_bounds(rows)
    ok = worst <= 0
    W.csv("dissipativity.csv", ["sample_id", "degree", "margin_numerator", "margin_denominator",
                                "ratio"],
          [(r.sample_id, r.degree, r.margin_numerator, r.margin_denominator, r.ratio) for r in rows])
    W.json("dissipativity.json", {"samples": len(rows), "max_margin_over_pi3": worst,
                                  "ratio_min": lo, "ratio_max": hi, "ok": bool(ok)})
    return EXIT_OK if ok else EXIT_CLAIM


def _evolve_initial(c: dict, grid):
    data = c["data"]
    r = grid.nodes
    if data in evolution.EIGEN_DATA:
        ell, lam = evolution.EIGEN_DATA[data]
        f1, f2 = evolution.eigenpair_samples(data, r)
        return evolution.RadialState(ell, f1, f2), lam
    if data == "decay":
        st = evolution.RadialState(0, np.exp(-r * r), (1 - 2 * r * r) * np.exp(-r * r))
        st, _ = evolution.remove_unstable_modes(st, grid)
        return st, None
    if data in ("static", "ode"):
        bg = "psi_star" if data == "static" else "ode"
        p1, p2 = evolution.background_fields(bg, r)[:2]
        return evolution.RadialState(0, p1, p2), None
    raise ConfigError(f"unknown evolve.data {data!r}")


def cmd_evolve(cfg: dict) -> int:
    c = cfg["evolve"]
    W = Writer(cfg, "evolve")
    grid = evolution.radial_grid(int(c["N"]))
    state, lam = _evolve_initial(c, grid)
    ecfg = evolution.EvolveConfig(dt=c["dt"], tau_end=float(c["tau_end"]),
                                  sample_every=float(c["sample_every"]))
    claims: dict = {}
    if c["mode"] == "nonlinear":
        bg = "ode" if c["data"] == "ode" else "psi_star"
        if c["data"] not in ("static", "ode"):
            raise ConfigError("nonlinear mode takes data 'static' or 'ode'")
        tr = evolution.evolve_nonlinear(state, ecfg, grid, background=bg)
        drift = float(max(np.abs(tr.final.psi1 - state.psi1).max(),
                          np.abs(tr.final.psi2 - state.psi2).max()))
        claims = {"drift": drift, "drift_tol": c["drift_tol"], "ok": drift <= float(c["drift_tol"])}
    elif c["mode"] == "linear":
        tr = evolution.evolve_linear(state, ecfg, grid)
        if lam is not None:
            slope, r2 = evolution.fit_log_slope(tr, tuple(c["fit_window"]))
            claims = {"fitted_rate": slope, "expected_rate": lam, "r2": r2,
                      "ok": abs(slope - lam) <= float(c["rate_tol"])}
        else:
            fit = evolution.convergence_rate(tr, tuple(c["fit_window"]))
            claims = {"omega_hat": fit.omega, "status": fit.status, "r2": fit.r2,
                      "ok": fit.status == "decaying"}
    else:
        raise ConfigError(f"unknown evolve.mode {c['mode']!r}")
    W.csv("trajectory.csv", ["tau", "norm", "alpha_h", "alpha_g0", "sup_origin"], tr.to_rows())
    ckpt = W.dir / "checkpoint.bin"
    np.concatenate([np.real(tr.final.psi1), np.real(tr.final.psi2)]).astype("<f8").tofile(ckpt)
    W.json("checkpoint.json", {"version": __version__, "file": ckpt.name, "dtype": "<f8",
                               "layout": "psi1 then psi2 at increasing nodes", "N": grid.N,
                               "ell": tr.ell, "tau": tr.final.tau})
    W.json("run.json", {"grid": {"N": grid.N, "nodes": "CGL, folded, M = 2N + 1"},
                        "evolve": c, "status": tr.status, "norm_note": tr.norm_note,
                        "claims": claims, "ok": bool(claims.get("ok"))})
    return EXIT_OK if claims.get("ok") else EXIT_CLAIM


def cmd_threshold(cfg: dict) -> int:
    c = cfg["threshold"]
    W = Writer(cfg, "threshold")
    ecfg = evolution.EvolveConfig(tau_end=float(c["tau_end"]), blowup_cutoff=float(c["blowup_cutoff"]),
                                  decay_cutoff=float(c["decay_cutoff"]))
    N = int(c["N"])
    res = evolution.threshold_bisect(None, float(c["alpha_lo"]), float(c["alpha_hi"]), ecfg, N=N,
                                     max_iter=int(c["max_iter"]),
                                     target_width=float(c["target_width"]))
    labels = monotone_labels(res.bracket, int(c["monotone_points"]), ecfg, N)
    mono = _is_monotone([lab for _, lab in labels])
    plateaus = [min(h.plateau_lo, h.plateau_hi) for h in res.history]
    sharpening = all(b >= a - 1e-12 for a, b in zip(plateaus, plateaus[1:]))
    ok = (res.status == "converged" and abs(res.alpha_star) <= float(c["alpha_tol"])
          and mono and sharpening)
    W.json("threshold.json", {"alpha_star": res.alpha_star, "bracket": list(res.bracket),
                              "bracket_width": res.bracket_width, "status": res.status,
                              "history": [h.__dict__ for h in res.history],
                              "interior_labels": labels, "monotone": mono,
                              "plateau_nondecreasing": sharpening, "ok": bool(ok)})
    if res.near_threshold_trajectory is not None:
        W.csv("near_threshold.csv", ["tau", "norm", "alpha_h", "alpha_g0", "sup_origin"],
              res.near_threshold_trajectory.to_rows())
    return EXIT_OK if ok else EXIT_CLAIM


def monotone_labels(bracket, k: int, ecfg, N: int):
    """Labels at ``k`` equally spaced interior amplitudes of the bracket."""
    lo, hi = bracket
    grid = evolution.radial_grid(N)
    B1, B2 = evolution._U_pair(grid.nodes)
    out = []
    for a in np.linspace(lo, hi, k + 2)[1:-1]:
        phi = evolution.threshold_data(None, float(a), grid)
        tr = evolution.evolve_nonlinear(evolution.RadialState(0, B1 + phi.psi1, B2 + phi.psi2),
                                        ecfg, grid)
        out.append((float(a), evolution.classify_run(tr)))
    return out


def _is_monotone(labels) -> bool:
    """At most one switch, and never back."""
    known = [x for x in labels if x != evolution.UNDECIDED]
    switches = sum(1 for a, b in zip(known, known[1:]) if a != b)
    return switches <= 1


def cmd_report(paths: list, cfg: dict) -> int:
    W = Writer(cfg, "report")
    docs = []
    for p in paths:
        try:
            d = json.loads(Path(p).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read report input {p}: {exc}") from None
        docs.append({"file": Path(p).name, "command": d.get("meta", {}).get("command"),
                     "config_hash": d.get("meta", {}).get("config_hash"),
                     "ok": None if "ok" not in d else bool(d["ok"])})
    lines = ["# blowuplab summary", "", f"version {__version__}", "",
             "| file | command | config hash | ok |", "|---|---|---|---|"]
    lines += [f"| {d['file']} | {d['command']} | {d['config_hash']} | {d['ok']} |" for d in docs]
    (W.dir / "summary.md").write_text("\n".join(lines) + "\n")
    # files without a verdict, such as checkpoints, make no claim
    ok = all(d["ok"] for d in docs if d["ok"] is not None)
    W.json("summary.json", {"inputs": docs, "ok": ok})
    return EXIT_OK if ok else EXIT_CLAIM


COMMANDS = {"spectrum": cmd_spectrum, "certify": cmd_certify, "dissipativity": cmd_dissipativity,
            "evolve": cmd_evolve, "threshold": cmd_threshold}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="blowuplab", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"blowuplab {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in list(COMMANDS) + ["report"]:
        p = sub.add_parser(name)
        p.add_argument("--config", help="YAML configuration file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a configuration entry, e.g. spectrum.ell_max=2")
        p.add_argument("--out", help="output directory (overrides BLOWUPLAB_OUT)")
        if name == "report":
            p.add_argument("paths", nargs="+", help="JSON files written by other commands")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        cfg = load_config(args.config, args.set, args.out)
        if args.command == "report":
            return cmd_report(args.paths, cfg)
        return COMMANDS[args.command](cfg)
    except (NumericalError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"blowuplab: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ArgumentError, KeyError, TypeError, ValueError) as exc:
        print(f"blowuplab: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BlowupLabError as exc:
        print(f"blowuplab: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
