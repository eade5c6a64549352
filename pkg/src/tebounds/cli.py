"""Command-line front end.

Every command reads a CSV sample (except ``simulate``), writes its result
files into ``--out`` and prints a short summary table. Keys in the JSON
``--config`` file override the flags. Output files appear only once the
whole command has succeeded.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile
import warnings
from pathlib import Path

import numpy as np

from .bounds import REGIMES
from .data import DataError, load_csv
from .estimator import MakarovBounds, compare_lower_bounds
from .simulation import null_lower_curve, run_table1

COMMANDS = ("estimate", "bands", "test", "compare", "simulate")
FLOAT_FMT = "%.10g"

DEFAULTS = {
    "command": "estimate",
    "data": None,
    "column_map": {"y": "y", "d": "d", "x": "x"},
    "regime": "point_id",
    "x0": 0.0,
    "x0_b": None,
    "kernel": "epanechnikov",
    "bandwidth": "auto",
    "tuning_rate": "loglog",
    "tuning_c": 0.2,
    "m_y": 401,
    "m_delta": 201,
    "pad": 0.1,
    "delta_range": None,
    "sub_index": None,
    "trim": 0.01,
    "alpha": 0.05,
    "boot_m": 500,
    "seed": 0,
    "out": ".",
    "null": "normal",
    "side": "lower",
    "p": 2.0,
    # simulate
    "reps": 500,
    "n": 500,
    "c_values": [0.1, 0.2, 0.3, 0.4, 0.5],
    "rates": ["loglog", "sqrtlog", "power16"],
    "mu_scenarios": [0.0, -1.0, 1.0],
    "base_seed": 20240101,
    "workers": None,
}

_FLAG_KEYS = ("data", "command", "regime", "x0", "alpha", "boot_m", "seed", "out")


class CliError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="tebounds",
        description="Bounds and uniform inference for conditional treatment-effect distributions.",
    )
    p.add_argument("--data", help="CSV sample with outcome, treatment and covariate columns")
    p.add_argument("--config", help="JSON file; its keys override the flags")
    p.add_argument("--command", choices=COMMANDS)
    p.add_argument("--regime", choices=REGIMES)
    p.add_argument("--x0", help="conditioning point, a number or q:<level>")
    p.add_argument("--alpha", type=float)
    p.add_argument("--boot-m", dest="boot_m", type=int, help="bootstrap iterations")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    return p


def _parse_x0(value):
    if value is None or not isinstance(value, str):
        return value
    if value.strip().lower().startswith("q:"):
        return value.strip()
    if "," in value:
        return [_parse_x0(v) for v in value.split(",")]
    return float(value)


def resolve_config(argv=None) -> dict:
    args = build_parser().parse_args(argv)
    cfg = dict(DEFAULTS)
    for key in _FLAG_KEYS:
        val = getattr(args, key)
        if val is not None:
            cfg[key] = _parse_x0(val) if key == "x0" else val
    if args.config:
        try:
            with open(args.config) as fh:
                extra = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(f"cannot read config: {exc}") from None
        if not isinstance(extra, dict):
            raise CliError("config must be a JSON object")
        unknown = sorted(set(extra) - set(DEFAULTS))
        if unknown:
            raise CliError(f"unknown config key(s): {unknown}")
        cfg.update(extra)
    if cfg["command"] not in COMMANDS:
        raise CliError(f"unknown command {cfg['command']!r}")
    if cfg["regime"] not in REGIMES:
        raise CliError(f"unknown regime {cfg['regime']!r}")
    if cfg["command"] != "simulate" and not cfg["data"]:
        raise CliError(f"command {cfg['command']!r} needs --data")
    if cfg["command"] == "compare" and cfg["x0_b"] is None:
        raise CliError("command 'compare' needs the config key x0_b")
    return cfg


# --- formatting -------------------------------------------------------------


def _fmt(v) -> str:
    return FLOAT_FMT % v


def _csv_bytes(header, columns) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in zip(*columns):
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue().encode()


def _json_bytes(obj) -> bytes:
    return (json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n").encode()


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"not serialisable: {type(o).__name__}")


def write_outputs(out_dir, files: dict):
    """Write all files through temporaries, then rename them into place."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    staged = []
    try:
        for name, payload in files.items():
            fd, tmp = tempfile.mkstemp(prefix=f".{name}.", dir=out_dir)
            with os.fdopen(fd, "wb") as fh:
                fh.write(payload)
            staged.append((tmp, out_dir / name))
    except BaseException:
        for tmp, _ in staged:
            os.unlink(tmp)
        raise
    for tmp, dest in staged:
        os.replace(tmp, dest)


def _summary(rows) -> str:
    lines = [f"{'quantity':<28}{'value':>16}", "-" * 44]
    for key, val in rows:
        text = _fmt(val) if isinstance(val, (float, np.floating)) else str(val)
        lines.append(f"{key:<28}{text:>16}")
    return "\n".join(lines)


# --- commands ---------------------------------------------------------------


def _estimator(cfg, x0=None) -> MakarovBounds:
    return MakarovBounds(
        x0=cfg["x0"] if x0 is None else x0,
        regime=cfg["regime"],
        kernel=cfg["kernel"],
        bandwidth=cfg["bandwidth"],
        tuning_rate=cfg["tuning_rate"],
        tuning_c=float(cfg["tuning_c"]),
        m_y=int(cfg["m_y"]),
        m_delta=int(cfg["m_delta"]),
        pad=float(cfg["pad"]),
        delta_range=cfg["delta_range"],
        sub_index=cfg["sub_index"],
        trim=float(cfg["trim"]),
    )


def _fit(cfg, x0=None):
    table = load_csv(cfg["data"], cfg["column_map"])
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RuntimeWarning)
        est = _estimator(cfg, x0).fit_table(table)
    notes = sorted({str(w.message) for w in caught})
    return est, notes


def _diagnostics(est, notes) -> dict:
    diag = dict(est.diagnostics_)
    diag["warnings"] = sorted(set(diag.get("warnings", [])) | set(notes))
    diag["argsup_sizes"] = est.bounds_.argsup_mask.sum(axis=1)
    diag["arginf_sizes"] = est.bounds_.arginf_mask.sum(axis=1)
    return diag


def cmd_estimate(cfg):
    est, notes = _fit(cfg)
    bc = est.bounds_
    files = {
        "bounds.csv": _csv_bytes(["delta", "lower", "upper"], [bc.delta_grid, bc.lower, bc.upper]),
        "diagnostics.json": _json_bytes(_diagnostics(est, notes)),
    }
    rows = [("n", est.table_.n), ("h", est.h_), ("a_n", est.a_n_),
            ("max lower", float(bc.lower.max())), ("min upper", float(bc.upper.min()))]
    return files, rows


def cmd_bands(cfg):
    est, notes = _fit(cfg)
    band = est.confidence_bands(float(cfg["alpha"]), int(cfg["boot_m"]), int(cfg["seed"]))
    header = ["delta", "lower", "upper",
              "lower_lo", "lower_hi", "upper_lo", "upper_hi",
              "raw_lower_lo", "raw_lower_hi", "raw_upper_lo", "raw_upper_hi",
              "idset_lo", "idset_hi"]
    cols = [band.delta_grid, band.lower, band.upper,
            *band.lower_band, *band.upper_band,
            *band.raw_lower_band, *band.raw_upper_band, *band.idset_ci]
    quant = {"alpha": band.alpha, "c_L": band.c_L, "c_U": band.c_U, "r_n": band.r_n,
             "boot_m": int(cfg["boot_m"]), "seed": int(cfg["seed"])}
    files = {
        "bands.csv": _csv_bytes(header, cols),
        "quantiles.json": _json_bytes(quant),
        "diagnostics.json": _json_bytes(_diagnostics(est, notes)),
    }
    rows = [("alpha", band.alpha), ("c_L", band.c_L), ("c_U", band.c_U), ("r_n", band.r_n)]
    return files, rows


def _null_curve(spec, delta_grid):
    if spec == "normal":
        return null_lower_curve(delta_grid)
    path = Path(spec)
    if not path.exists():
        raise DataError(f"null curve file not found: {path}")
    arr = np.genfromtxt(path, delimiter=",", names=True)
    names = arr.dtype.names or ()
    if "delta" not in names or "value" not in names:
        raise DataError("null curve CSV needs columns 'delta' and 'value'")
    delta, value = np.atleast_1d(arr["delta"]), np.atleast_1d(arr["value"])
    if not (np.all(np.isfinite(delta)) and np.all(np.isfinite(value))):
        raise DataError("null curve has non-numeric or missing entries")
    if np.any(np.diff(delta) <= 0):
        raise DataError("null curve deltas must be strictly increasing")
    return np.interp(delta_grid, delta, value)


def _test_json(res, extra=None) -> dict:
    out = {"statistic": res.statistic, "critical_value": res.critical_value,
           "reject": res.reject, "p_value": res.p_value, "alpha": res.alpha,
           "draw_quantiles": {f"{q:g}": float(np.quantile(res.bootstrap_draws, q))
                              for q in (0.5, 0.9, 0.95, 0.99)}}
    out.update(extra or {})
    return out


def _test_rows(res):
    return [("statistic", res.statistic), ("critical value", res.critical_value),
            ("p value", res.p_value), ("reject", res.reject)]


def cmd_test(cfg):
    est, _ = _fit(cfg)
    null = _null_curve(cfg["null"], est.grids_.delta_grid)
    res = est.ks_test(null, cfg["side"], float(cfg["alpha"]), int(cfg["boot_m"]), int(cfg["seed"]))
    extra = {"side": cfg["side"], "null": str(cfg["null"]), "boot_m": int(cfg["boot_m"]),
             "seed": int(cfg["seed"])}
    return {"test.json": _json_bytes(_test_json(res, extra))}, _test_rows(res)


def cmd_compare(cfg):
    est_a, _ = _fit(cfg)
    est_b, _ = _fit(cfg, x0=cfg["x0_b"])
    res = compare_lower_bounds(est_a, est_b, float(cfg["p"]), float(cfg["alpha"]),
                               int(cfg["boot_m"]), int(cfg["seed"]))
    extra = {"x0_a": est_a.grids_.x0.tolist(), "x0_b": est_b.grids_.x0.tolist(),
             "p": float(cfg["p"]), "boot_m": int(cfg["boot_m"]), "seed": int(cfg["seed"])}
    return {"compare.json": _json_bytes(_test_json(res, extra))}, _test_rows(res)


def cmd_simulate(cfg):
    report = run_table1(
        reps=int(cfg["reps"]), n=int(cfg["n"]), m_boot=int(cfg["boot_m"]),
        c_values=tuple(cfg["c_values"]), rates=tuple(cfg["rates"]),
        mu_scenarios=tuple(cfg["mu_scenarios"]), base_seed=int(cfg["base_seed"]),
        alpha=float(cfg["alpha"]), m_y=int(cfg["m_y"]), m_delta=int(cfg["m_delta"]),
        pad=float(cfg["pad"]), workers=cfg["workers"],
    )
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(report.to_rows())
    files = {"rejection_rates.csv": buf.getvalue().encode(),
             "rejection_rates.json": _json_bytes(report.to_json_dict())}
    rows = [(f"{r} c={c:g} mu={mu:g}", p) for (r, c, mu), p in sorted(report.rejection.items())]
    return files, rows


HANDLERS = {
    "estimate": cmd_estimate,
    "bands": cmd_bands,
    "test": cmd_test,
    "compare": cmd_compare,
    "simulate": cmd_simulate,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        cfg = resolve_config(argv)
        files, rows = HANDLERS[cfg["command"]](cfg)
        write_outputs(cfg["out"], files)
    except (CliError, ValueError, OSError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}))
        return 1
    print(_summary(rows))
    return 0


if __name__ == "__main__":
    sys.exit(main())
