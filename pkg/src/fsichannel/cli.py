"""Command-line entry points: config parsing, experiments, report emission.

Usage:  fsichannel run <config.toml> [--seed N] [--threads N] [--output-dir D]
        fsichannel summary <history.csv>

Configs are TOML with strict unknown-key rejection.  Exit codes: 0 on
success, 1 on configuration errors, 2 on numerical failure; every failure
writes a machine-readable diagnostic JSON next to the outputs.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib


class ConfigError(ValueError):
    pass


_SCHEMA = {
    "experiment": None,
    "geometry": {"L1", "L2", "L3", "Nx", "Ny", "Nz_lower", "Nz_elastic", "Nz_upper", "Nt"},
    "data": {"preset", "amplitude", "mode_kx", "mode_ky", "seed", "v0_snapshot", "w1_snapshot"},
    "scheme": {
        "s",
        "eps0",
        "cbar",
        "tol",
        "max_iter",
        "driver",
        "t_tilde_override",
        "time_scheme",
        "wave_scheme",
    },
    "output": {"dir", "history_csv", "norms_csv", "table_csv", "snapshots", "summary_json"},
    "p01": {"alpha", "T", "beta_list", "M_list", "samples"},
    "hidden_regularity": {"beta", "samples", "kmax", "seed", "levels"},
    "norm_verify": {"samples", "seed", "kmax"},
    "stokes_mms": {"levels", "base_nz", "t_end"},
    "wave_mms": {"levels", "base_nz", "mode_k", "cfl"},
}

_EXPERIMENTS = ("solve", "p01", "hidden-regularity", "norm-verify", "stokes-mms", "wave-mms")


def load_config(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    unknown = set(raw) - set(_SCHEMA)
    if unknown:
        raise ConfigError(f"unknown config section/key: {sorted(unknown)}")
    for section, keys in _SCHEMA.items():
        if keys is None or section not in raw:
            continue
        if not isinstance(raw[section], dict):
            raise ConfigError(f"section [{section}] must be a table")
        bad = set(raw[section]) - keys
        if bad:
            raise ConfigError(f"unknown key in [{section}]: {sorted(bad)}")
    exp = raw.get("experiment")
    if exp not in _EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {_EXPERIMENTS}, got {exp!r}")
    data = raw.get("data", {})
    if "v0_snapshot" in data:
        for layer in ("lower", "upper"):
            p = Path(f"{data['v0_snapshot']}.{layer}")
            if not p.is_file():
                raise ConfigError(f"referenced path not found: data.v0_snapshot = {p}")
    if "w1_snapshot" in data and not Path(data["w1_snapshot"]).is_file():
        raise ConfigError(f"referenced path not found: data.w1_snapshot = {data['w1_snapshot']}")
    return raw


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def _write_diagnostic(outdir: Path, payload: dict):
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "diagnostic.json", "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)


def _geometry(config):
    from .geometry import build_geometry

    if "geometry" not in config:
        raise ConfigError("missing [geometry] section")
    try:
        return build_geometry(config["geometry"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _initial_data(config, geom, seed):
    """Divergence-free single-mode preset (or snapshots) for the solve runs."""
    from .fields import read_snapshot
    from .geometry import FLUID_LAYERS
    from .verification import single_mode_initial_data

    data = config.get("data", {})
    preset = data.get("preset", "single-mode")
    if preset == "snapshot":
        prefix = data["v0_snapshot"]
        v0 = {layer: read_snapshot(f"{prefix}.{layer}").data[0] for layer in FLUID_LAYERS}
        w1 = read_snapshot(data["w1_snapshot"]).data[0]
        return v0, w1
    if preset != "single-mode":
        raise ConfigError(f"unknown data preset {preset!r}")
    return single_mode_initial_data(
        geom,
        amplitude=float(data.get("amplitude", 1e-3)),
        kx=int(data.get("mode_kx", 1)),
        ky=int(data.get("mode_ky", 1)),
    )


def run_solve(config, geom, outdir: Path, seed: int) -> int:
    from . import fsi
    from .stokes import NumericalFailure

    scheme = config.get("scheme", {})
    v0, w1 = _initial_data(config, geom, seed)
    params = fsi.compute_parameters(
        v0,
        None,
        w1,
        cbar=float(scheme.get("cbar", 1.0)),
        geom=geom,
        s=float(scheme.get("s", 1.52)),
        eps0=float(scheme.get("eps0", 0.04)),
        tol=float(scheme.get("tol", 1e-8)),
        max_iter=int(scheme.get("max_iter", 30)),
        t_tilde_override=scheme.get("t_tilde_override"),
    )
    ctx = fsi.make_context(
        geom,
        params,
        v0,
        w1,
        wave_scheme=scheme.get("wave_scheme", "leapfrog"),
        stokes_theta=1.0 if scheme.get("time_scheme", "backward-euler") == "backward-euler" else 0.5,
    )
    driver = scheme.get("driver", "nonlinear")
    state, history, converged = fsi.iterate_to_fixed_point(ctx, driver=driver)

    hist_path = outdir / config.get("output", {}).get("history_csv", "history.csv")
    if history:
        cols = list(history[0].keys())
        _write_csv(hist_path, cols + ["converged"], [
            [row[c] for c in cols] + [converged and i == len(history) - 1] for i, row in enumerate(history)
        ])
    summary = {
        "experiment": "solve",
        "driver": driver,
        "geometry": geom.config_echo(),
        "parameters": {
            "s": params.s,
            "eps0": params.eps0,
            "cbar": params.cbar,
            "M": params.M,
            "t_tilde": params.t_tilde,
            "off_theory": params.off_theory,
            "data_norms": params.data_norms,
        },
        "iterations": len(history),
        "converged": converged,
        "final_diff_norm": history[-1]["diff_norm"] if history else None,
    }
    with open(outdir / config.get("output", {}).get("summary_json", "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    if not converged:
        _write_diagnostic(outdir, {"error": "fixed-point iteration did not converge", **summary})
        return 2
    return 0


def run_p01(config, geom, outdir: Path, seed: int) -> int:
    from .norms import p01_experiment

    sec = config.get("p01", {})
    alpha = float(sec.get("alpha", 0.25))
    horizon = float(sec.get("T", 0.5))
    betas = [float(b) for b in sec.get("beta_list", [0.0, 0.1])]
    m_list = [int(m) for m in sec.get("M_list", [2, 4, 8, 16, 32, 64, 128, 256])]
    nsamples = int(sec.get("samples", 4096))
    header = ["M", "ramp_end", "l2", "seminorm"] + [f"ratio_beta_{b:g}" for b in betas]
    tables = [p01_experiment(b, horizon, m_list, alpha=alpha, nsamples=nsamples) for b in betas]
    rows = []
    for i, m in enumerate(m_list):
        base = tables[0][i]
        rows.append(
            [m, base["ramp_end"], base["l2"], base["seminorm"]]
            + [t[i]["ratio"] for t in tables]
        )
    _write_csv(outdir / config.get("output", {}).get("table_csv", "p01.csv"), header, rows)
    return 0


def run_norm_verify(config, geom, outdir: Path, seed: int) -> int:
    import numpy as np

    from .norms import verify_interpolation, verify_trace_inequality
    from .verification import random_band_limited_fluid

    sec = config.get("norm_verify", {})
    nsamp = int(sec.get("samples", 20))
    kmax = int(sec.get("kmax", 3))
    rng = np.random.default_rng(int(sec.get("seed", seed)))
    rows = []
    for i in range(nsamp):
        v = random_band_limited_fluid(geom, rng, kmax=kmax)
        tr = verify_trace_inequality(v, r=1.6, theta=0.4, eps=0.5, geom=geom)
        it = verify_interpolation(v, alpha=1.0, beta=2.0, theta=0.4, lam=1.0, eps=0.5, geom=geom)
        rows.append([i, tr.lhs, tr.c_min, it.lhs, it.c_min])
    _write_csv(outdir / "norm_verify.csv", ["sample", "trace_lhs", "trace_c", "interp_lhs", "interp_c"], rows)
    return 0


def run_hidden_regularity(config, geom, outdir: Path, seed: int) -> int:
    from .verification import hidden_regularity_suite

    sec = config.get("hidden_regularity", {})
    rows = hidden_regularity_suite(
        geom,
        beta=float(sec.get("beta", 2.0)),
        samples=int(sec.get("samples", 20)),
        kmax=int(sec.get("kmax", 2)),
        seed=int(sec.get("seed", seed)),
        levels=int(sec.get("levels", 3)),
    )
    _write_csv(
        outdir / "hidden_regularity.csv",
        ["level", "sample", "lhs", "rhs", "ratio"],
        rows,
    )
    return 0


def run_stokes_mms(config, geom, outdir: Path, seed: int) -> int:
    from .verification import stokes_mms_study

    sec = config.get("stokes_mms", {})
    rows = stokes_mms_study(
        levels=int(sec.get("levels", 3)),
        base_nz=int(sec.get("base_nz", 16)),
        t_end=float(sec.get("t_end", 0.5)),
    )
    _write_csv(outdir / "stokes_mms.csv", ["nz", "error_u", "order", "div_residual"], rows)
    return 0


def run_wave_mms(config, geom, outdir: Path, seed: int) -> int:
    from .verification import standing_wave_study

    sec = config.get("wave_mms", {})
    rows = standing_wave_study(
        levels=int(sec.get("levels", 3)),
        base_nz=int(sec.get("base_nz", 8)),
        mode_k=int(sec.get("mode_k", 1)),
        cfl=float(sec.get("cfl", 0.9)),
    )
    _write_csv(outdir / "wave_mms.csv", ["nz", "error", "order", "energy_drift"], rows)
    return 0


_RUNNERS = {
    "solve": run_solve,
    "p01": run_p01,
    "hidden-regularity": run_hidden_regularity,
    "norm-verify": run_norm_verify,
    "stokes-mms": run_stokes_mms,
    "wave-mms": run_wave_mms,
}


def run(config_path, seed=None, threads=None, output_dir=None) -> int:
    outdir = Path(output_dir) if output_dir else Path(".")
    try:
        config = load_config(config_path)
        geom = _geometry(config)
        out_cfg = config.get("output", {})
        if output_dir is None and "dir" in out_cfg:
            outdir = Path(out_cfg["dir"])
        outdir.mkdir(parents=True, exist_ok=True)
        seed = int(seed if seed is not None else config.get("data", {}).get("seed", 12345))
        runner = _RUNNERS[config["experiment"]]
        return runner(config, geom, outdir, seed)
    except ConfigError as exc:
        _write_diagnostic(outdir, {"error": "config", "detail": str(exc)})
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # numerical failures and solver breakdowns
        from .stokes import NumericalFailure

        detail = {"error": "numerical", "detail": str(exc)}
        if isinstance(exc, NumericalFailure):
            detail.update(exc.diagnostic)
            _write_diagnostic(outdir, detail)
            print(f"numerical failure: {exc}", file=sys.stderr)
            return 2
        raise


def report_summary(history_csv) -> str:
    """Human-readable digest of a convergence-history CSV."""
    path = Path(history_csv)
    if not path.is_file():
        raise ConfigError(f"history file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            return "no iterations recorded"
        rows = list(reader)
    required = {"n", "diff_norm", "ratio"}
    missing = required - set(header)
    if missing:
        raise ConfigError(f"history CSV misses columns: {sorted(missing)}")
    if not rows:
        return "no iterations recorded"
    col = {name: i for i, name in enumerate(header)}
    diffs = [float(r[col["diff_norm"]]) for r in rows]
    ratios = [float(r[col["ratio"]]) for r in rows if r[col["ratio"]] not in ("nan", "")]
    ratios = [r for r in ratios if not math.isnan(r)]
    lines = [
        f"iterations: {len(rows)}",
        f"final difference norm: {diffs[-1]:.6e}",
        f"max contraction ratio: {max(ratios):.6f}" if ratios else "max contraction ratio: n/a",
    ]
    res_cols = [c for c in header if c.endswith("_sup")]
    if res_cols:
        lines.append("final residuals:")
        last = rows[-1]
        for c in res_cols:
            lines.append(f"  {c[:-4]}: {float(last[col[c]]):.6e}")
    return "\n".join(lines)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="fsichannel", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="execute an experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--threads", type=int, default=None)
    p_run.add_argument("--output-dir", default=None)
    p_sum = sub.add_parser("summary", help="summarize a convergence history CSV")
    p_sum.add_argument("history_csv")
    args = parser.parse_args(argv)

    if args.command == "run":
        if args.threads is not None:
            for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
                os.environ.setdefault(var, str(args.threads))
        return run(args.config, seed=args.seed, threads=args.threads, output_dir=args.output_dir)
    try:
        print(report_summary(args.history_csv))
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
