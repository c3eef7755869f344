"""Orchestration behind the command line: runs, oracle tables, assumption
reports, verdicts, and the on-disk bundle format."""
from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from spdelab import __version__, kernels
from spdelab.coefficients import (
    boundary_compat_check,
    growth_bound_check,
    lipschitz_spot_check,
)
from spdelab.config import (
    ExperimentConfig,
    config_hash,
    dumps,
    initial_state,
    loads,
    simulation_config,
    to_dict,
)
from spdelab.noise_model import eigenfunction_condition_check, trace
from spdelab.oracles import oracle_kind, ou_oracle_moment, ou_oracle_time_increment
from spdelab.regularity import (
    DataError,
    make_verdict,
    predicted_gamma_star,
    spatial_scan,
    temporal_fit,
)
from spdelab.simulator import run_ensemble
from spdelab.sobolev_norms import equivalence_constant_estimate
from spdelab.spectral_space import semigroup_bound_check

MOMENT_HEADER = ["run_id", "t", "r", "p", "estimate", "std_error", "n_traj", "N", "J", "dt", "seed"]
INCREMENT_HEADER = ["run_id", "t", "h", "r", "p", "estimate", "std_error", "n_traj", "N", "J", "dt", "seed"]
ORACLE_EXTRA = ["tail_bound", "divergent", "growth_rate"]


class ExperimentError(RuntimeError):
    pass


def fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % v


def write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    path.write_text(buf.getvalue())


def read_csv(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def run_id(cfg: ExperimentConfig) -> str:
    return config_hash(cfg)[:12]


def boundary_compatible(cfg: ExperimentConfig) -> bool:
    return boundary_compat_check(cfg.pair(), d=cfg.operator.d).passed


def predicted_for(cfg: ExperimentConfig) -> float:
    if cfg.noise.kind == "custom":
        raise ExperimentError("no threshold prediction for custom noise spectra")
    return predicted_gamma_star(cfg.noise.kind, cfg.noise.rho, cfg.operator.d, boundary_compatible(cfg))


# --- simulate -----------------------------------------------------------------

@dataclass
class SimulationOutput:
    moment_rows: list[list]
    increment_rows: list[list]
    n_diverged: int


def simulate(cfg: ExperimentConfig, workers: int = 1) -> SimulationOutput:
    rid = run_id(cfg)
    seed = cfg.run.seed
    moments, increments, diverged = [], [], 0
    for N in cfg.analysis.N_list or (cfg.run.N,):
        sim = simulation_config(cfg, n_modes=N)
        res = run_ensemble(sim, workers=workers)
        diverged += res.n_diverged
        for r in res.moments.rows:
            moments.append([rid, r.t, r.r, r.p, r.estimate, r.std_error, r.n_traj, r.N, r.J, r.dt, seed])
        if res.increments is not None:
            for r in res.increments.rows:
                increments.append([rid, r.t, r.h, r.r, r.p, r.estimate, r.std_error, r.n_traj, r.N, r.J, r.dt, seed])
    moments.sort(key=lambda row: (row[1], row[2], row[3], row[7]))
    increments.sort(key=lambda row: (row[1], row[2], row[3], row[4], row[8]))
    return SimulationOutput(moments, increments, diverged)


# --- oracle ---------------------------------------------------------------------

def oracle_tables(cfg: ExperimentConfig, stationary: bool = False):
    pair = cfg.pair()
    if pair.f_constant != 0.0:
        raise ExperimentError(
            f"the exact oracle needs f = 0 and an additive-type b; coefficients {pair.name!r} "
            "have a nonzero drift"
        )
    spec, op = cfg.spectrum(), cfg.op()
    try:
        kind = oracle_kind(spec, pair.b)
    except ValueError as exc:
        raise ExperimentError(
            f"the exact oracle covers constant b and b = sin(pi*x); {pair.name!r} is state dependent"
        ) from exc
    b_scale = pair.b_constant if kind != "boundary-sine" else 1.0
    init = initial_state(cfg, cfg.run.N)
    rid = run_id(cfg)
    an = cfg.analysis
    r_values = sorted(set(an.r_list) | set(an.gamma_grid))
    times = list(cfg.run.checkpoints) + ([math.inf] if stationary else [])
    J = cfg.noise.J
    rows = []
    for t in times:
        for r in r_values:
            for N in an.oracle_N_list:
                o = ou_oracle_moment(spec, op, r, t, kind, n_modes=N, J=J, b_scale=b_scale, initial=init)
                rows.append([rid, t, r, 2.0, o.value, 0.0, 0, N, J if J is not None else N, 0.0, 0,
                             o.tail_bound, o.divergent, o.growth_rate])
            o = ou_oracle_moment(spec, op, r, t, kind, J=J, b_scale=b_scale, initial=init)
            rows.append([rid, t, r, 2.0, o.value, 0.0, 0, 0, J if J is not None else 0, 0.0, 0,
                         o.tail_bound, o.divergent, o.growth_rate])
    rows.sort(key=lambda row: (row[1], row[2], row[7]))
    inc_rows = []
    h_list = an.oracle_h_list or an.h_list
    if h_list:
        base = an.increment_base if an.increment_base is not None else cfg.run.T / 2
        for r in an.r_list:
            for h in h_list:
                o = ou_oracle_time_increment(spec, op, r, base, h, kind, J=J, b_scale=b_scale, initial=init)
                inc_rows.append([rid, base, h, r, 2.0, o.value, 0.0, 0, 0, J if J is not None else 0, 0.0, 0,
                                 o.tail_bound, o.divergent, o.growth_rate])
        inc_rows.sort(key=lambda row: (row[1], row[2], row[3]))
    return rows, inc_rows


# --- verify-assumptions ---------------------------------------------------------

def _delta_max(cfg: ExperimentConfig) -> float:
    rho, d = cfg.noise.rho, cfg.operator.d
    if cfg.noise.kind == "cosine":
        return min(1.0, (rho - 1.0) / 2.0)
    return min(1.0, (rho - d) / 2.0)


def certified_alpha(cfg: ExperimentConfig) -> float:
    """Supremum of the alphas for which the growth bound is covered by theory."""
    dm = _delta_max(cfg)
    if dm <= 0:
        return 0.0
    pair = cfg.pair()
    free = cfg.noise.kind == "commutative" and pair.b_constant is not None
    if free or boundary_compatible(cfg):
        return min(0.5, dm / 2.0)
    return min(0.25, dm / 2.0)


def verify_assumptions(cfg: ExperimentConfig, quick: bool = False) -> dict:
    spec, op, pair = cfg.spectrum(), cfg.op(), cfg.pair()
    J_ref = cfg.noise.J or cfg.run.N
    report: dict = {"preset": cfg.name}

    # generator: analytic semigroup estimates
    t_grid = np.logspace(-6, 1, 57)
    modes = np.unique(np.round(np.logspace(0, 3, 40)).astype(int))
    mode_grid = [(int(k),) * op.d for k in modes]
    sg = [semigroup_bound_check(r, t_grid, mode_grid, op) for r in (0.0, 0.25, 0.5, 0.75, 1.0)]
    report["semigroup"] = {
        "pass": all(s.passed for s in sg),
        "checks": [{"r": s.r, "max_smoothing": s.max_smoothing, "max_increment": s.max_increment,
                    "constant": s.smoothing_constant, "pass": s.passed} for s in sg],
    }

    # noise: trace class and eigenfunction sums
    tr = trace(spec, J_ref)
    report["trace_class"] = {
        "pass": tr.trace_class, "truncated": tr.truncated, "tail_bound": tr.tail_bound,
        "full": tr.full, "J": tr.n_noise,
    }
    deltas = [round(x, 2) for x in np.arange(0.05, 1.0001, 0.05)]
    eig = [eigenfunction_condition_check(spec, dlt, J=J_ref) for dlt in deltas]
    report["eigenfunctions"] = {
        "pass": any(e.passed for e in eig),
        "admissible_delta_max": max((e.delta for e in eig if e.passed), default=None),
        "checks": [{"delta": e.delta, "sup_norm": e.sup_norm, "truncated_sum": e.truncated_sum,
                    "tail_bound": e.tail_bound, "pass": e.passed} for e in eig],
    }

    # coefficients
    lip = lipschitz_spot_check(pair, d=op.d)
    report["lipschitz"] = {"pass": lip.passed, "max_b_ratio": lip.max_b_ratio, "q": pair.q,
                           "max_f_ratio": lip.max_f_ratio, "lip_f": pair.lip_f, "l2_b0": lip.l2_b0}
    bc = boundary_compat_check(pair, d=op.d)
    report["boundary_compatibility"] = {"compatible": bc.passed, "left_limit": bc.left_limit,
                                        "right_limit": bc.right_limit}

    # norm equivalence stability (one-dimensional sampler)
    equiv = []
    c_hat = {}
    if op.d == 1:
        for r in (0.1, 0.2, 0.35, 0.45):
            a = equivalence_constant_estimate(r, n_samples=25 if quick else 50, m_points=128)
            b = equivalence_constant_estimate(r, n_samples=50 if quick else 100, m_points=256)
            drift = abs(b.constant - a.constant) / a.constant
            c_hat[r] = b.constant
            equiv.append({"r": r, "C_hat": a.constant, "C_hat_doubled": b.constant, "drift": drift,
                          "pass": drift < 0.10})
    report["norm_equivalence"] = {"pass": all(e["pass"] for e in equiv), "checks": equiv}

    # growth bound
    alpha_cert = certified_alpha(cfg)
    n_list = cfg.analysis.N_list or ((16, 32, 64) if op.d > 1 else (64, 128, 256, 512))
    growth = []
    for alpha in cfg.analysis.alpha_list:
        c_est = None
        if op.d == 1 and 0 < alpha < 0.5 and abs(alpha - 0.25) > 1e-9:
            c_est = equivalence_constant_estimate(alpha, n_samples=50, m_points=256).constant
        g = growth_bound_check(
            pair, spec, alpha, cfg.analysis.growth_samples, n_list, op=op,
            slope_tol=cfg.analysis.slope_tol, equivalence_constant=c_est,
        )
        certified = alpha < alpha_cert
        within_ref = None if g.reference_constant is None else max(g.max_ratio) <= g.reference_constant
        entry = {
            "alpha": alpha, "N_list": list(g.n_list), "max_ratio": list(g.max_ratio), "slope": g.slope,
            "bounded": g.bounded, "certified": certified, "reference_constant": g.reference_constant,
            "within_reference": within_ref,
            "pass": (g.bounded and within_ref is not False) if certified else None,
            "divergence_flagged": not g.bounded,
        }
        growth.append(entry)
    report["growth_bound"] = {
        "certified_alpha_sup": alpha_cert,
        "pass": all(e["pass"] for e in growth if e["certified"]),
        "checks": growth,
    }
    keys = ("semigroup", "trace_class", "eigenfunctions", "lipschitz", "norm_equivalence", "growth_bound")
    report["pass"] = all(report[k]["pass"] for k in keys)
    return report


# --- bundles and analysis -------------------------------------------------------

def write_bundle(out: Path, cfg: ExperimentConfig, kind: str, moment_rows, increment_rows,
                 wall_time: float, extra: dict | None = None) -> None:
    out.mkdir(parents=True, exist_ok=True)
    oracle = kind == "oracle"
    header = MOMENT_HEADER + (ORACLE_EXTRA if oracle else [])
    write_csv(out / ("oracle.csv" if oracle else "moments.csv"), header, moment_rows)
    if increment_rows:
        iheader = INCREMENT_HEADER + (ORACLE_EXTRA if oracle else [])
        write_csv(out / ("oracle_increments.csv" if oracle else "increments.csv"), iheader, increment_rows)
    manifest = {
        "kind": kind,
        "preset": cfg.name,
        "config_hash": config_hash(cfg),
        "version": __version__,
        "kernels": kernels.BACKEND,
        "wall_time_s": wall_time,
        "config": to_dict(cfg),
        "config_toml": dumps(cfg),
    }
    if extra:
        manifest.update(extra)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


@dataclass
class Bundle:
    path: Path
    kind: str
    cfg: ExperimentConfig
    moments: list[dict]
    increments: list[dict]


def read_bundle(path) -> Bundle:
    path = Path(path)
    man_path = path / "manifest.json"
    if not man_path.exists():
        raise ExperimentError(f"{path} is not a result bundle (no manifest.json)")
    man = json.loads(man_path.read_text())
    cfg = loads(man["config_toml"], source=str(man_path))
    kind = man["kind"]
    mfile = path / ("oracle.csv" if kind == "oracle" else "moments.csv")
    ifile = path / ("oracle_increments.csv" if kind == "oracle" else "increments.csv")
    moments = read_csv(mfile) if mfile.exists() else []
    increments = read_csv(ifile) if ifile.exists() else []
    return Bundle(path, kind, cfg, moments, increments)


def _spatial_table(rows: list[dict], gamma_grid):
    """(N list, values, std errors) at the latest finite time for p = 2."""
    usable = [r for r in rows if float(r["p"]) == 2.0 and int(r["N"]) > 0 and math.isfinite(float(r["t"]))]
    if not usable:
        return None
    t_max = max(float(r["t"]) for r in usable)
    table = {}
    for r in usable:
        if float(r["t"]) != t_max:
            continue
        key = (int(r["N"]), round(float(r["r"]), 12))
        if key in table:
            raise ExperimentError(f"duplicate rows for N={key[0]}, r={key[1]}")
        table[key] = (float(r["estimate"]), float(r["std_error"]))
    n_list = sorted({k[0] for k in table})
    grid = [g for g in gamma_grid if all((n, round(g, 12)) in table for n in n_list)]
    if not grid:
        return None
    vals = np.array([[table[(n, round(g, 12))][0] for g in grid] for n in n_list])
    ses = np.array([[table[(n, round(g, 12))][1] for g in grid] for n in n_list])
    return n_list, grid, vals, ses


def analyze(bundles: list[Bundle]) -> list[dict]:
    """One verdict per (preset, bundle kind) group."""
    groups: dict[tuple, list[Bundle]] = {}
    for b in bundles:
        groups.setdefault((b.cfg.name, b.kind), []).append(b)
    verdicts = []
    for (name, kind), items in sorted(groups.items()):
        hashes = {config_hash(replace(b.cfg, analysis=b.cfg.analysis)) for b in items}
        ref = items[0].cfg
        for b in items[1:]:
            if (b.cfg.noise, b.cfg.operator, b.cfg.coefficients) != (ref.noise, ref.operator, ref.coefficients):
                raise ExperimentError(f"bundles for preset {name!r} describe different models")
        del hashes
        predicted = predicted_for(ref)
        oracle = kind == "oracle"
        rows = [r for b in items for r in b.moments]
        inc_rows = [r for b in items for r in b.increments]
        notes = []
        scan = None
        table = _spatial_table(rows, ref.analysis.gamma_grid)
        if table is None:
            notes.append("no gamma-grid rows with finite truncation")
        else:
            n_list, grid, vals, ses = table
            try:
                scan = spatial_scan(n_list, grid, vals, None if oracle else ses, ref.analysis.slope_tol)
            except DataError as exc:
                notes.append(f"spatial scan inconclusive: {exc}")
        fits = []
        tol_t = 0.05 if oracle else 0.1
        for r in sorted({float(x["r"]) for x in inc_rows}):
            sel = sorted((x for x in inc_rows if float(x["r"]) == r and float(x["p"]) == 2.0),
                         key=lambda x: float(x["h"]))
            if not sel:
                continue
            dt = None if oracle else float(sel[0]["dt"])
            try:
                fits.append(temporal_fit(
                    [float(x["h"]) for x in sel], [float(x["estimate"]) for x in sel], p=2.0, dt=dt,
                    std_errors=None if oracle else [float(x["std_error"]) for x in sel], r=r,
                ))
            except DataError as exc:
                notes.append(f"temporal fit at r={r} skipped: {exc}")
        window = 0.05 if oracle else 0.1
        verdict = make_verdict(
            name, predicted, scan, fits, (predicted - window, predicted + window), tol_t,
        )
        d = verdict.to_dict()
        d["source"] = kind
        d["notes"] = list(d["notes"]) + notes
        if scan is None and not fits:
            d["conclusive"] = False
            d["pass"] = False
        elif scan is None:
            d["conclusive"] = False
        verdicts.append(d)
    return verdicts


def timed(fn, *args, **kwargs):
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - t0
