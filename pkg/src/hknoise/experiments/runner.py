"""Running configurations: single runs, sweeps, figure reproductions and reach tasks."""
from __future__ import annotations

import csv
import io
import json
import os
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..core import TrajectoryRecord, simulate
from ..errors import ConfigError, DomainError, HKError
from ..metrics import (
    DiffSeries,
    c_alpha1,
    c_alpha3,
    c_eta2,
    estimate_limits,
    quasi_sync_verdict,
    stopping_times,
    switching_threshold,
    tail_estimate,
    comm_band_bound,
)
from ..reachability import ReachReport, ReachTask, adversary_names, certify
from .config import ExperimentConfig, builtin_config
from .svg import line_chart

CSV_COLUMNS = (
    "config_hash",
    "variant",
    "n",
    "eta",
    "alpha",
    "seed",
    "dbar_hat",
    "dunder_hat",
    "tau_hit",
    "quasi_sync",
    "n_taus",
    "geo_rate_hat",
    "n_censored",
    "c_alpha1",
    "c_eta2",
    "c_alpha3",
    "theorem6_bound",
    "steps",
    "wall_ms",
)
SWEEP_COLUMNS = CSV_COLUMNS + ("error",)
AGGREGATE_COLUMNS = ("variant", "eta", "n_rows", "n_failed", "median_dbar_hat", "median_dunder_hat")
REACH_COLUMNS = (
    "config_hash", "law", "variant", "n", "eta", "target", "reached", "hit_time",
    "horizon", "adversary", "n_runs", "phase", "min_achieved_spread",
)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def csv_text(rows: list[dict], columns=CSV_COLUMNS) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row.get(c)) for c in columns])
    return buf.getvalue()


def _optional(fn, *args):
    try:
        return fn(*args)
    except DomainError:
        return None


# ---------------------------------------------------------------------------
# one replicate


@dataclass
class ReplicateResult:
    row: dict
    record: TrajectoryRecord | None


def summarize(cfg: ExperimentConfig, rec: TrajectoryRecord, wall_ms: float) -> dict:
    pop = cfg.build_population()
    eta = cfg.noise.eta
    series = DiffSeries(rec.d, cfg.burn_in)
    est = estimate_limits(series)
    verdict, tau = quasi_sync_verdict(series, est, pop, eta)
    c = switching_threshold(cfg.model_variant, eta, cfg.alpha, pop)
    n_taus, geo, n_cens = 0, None, 0
    if cfg.alpha < c:
        st = stopping_times(series, cfg.alpha, c)
        n_taus = int(st.taus.size)
        n_cens = int(st.censored)
        if st.gaps.size >= 2:
            try:
                geo = tail_estimate(st).geo_rate_hat
            except DomainError:
                geo = None
    return {
        "config_hash": cfg.config_hash(),
        "variant": cfg.variant,
        "n": pop.n,
        "eta": float(eta),
        "alpha": float(cfg.alpha),
        "seed": f"{rec.seed}:{rec.replicate}",
        "dbar_hat": est.dbar_hat,
        "dunder_hat": est.dunder_hat,
        "tau_hit": tau,
        "quasi_sync": verdict,
        "n_taus": n_taus,
        "geo_rate_hat": geo,
        "n_censored": n_cens,
        "c_alpha1": c_alpha1(eta, cfg.alpha, pop),
        "c_eta2": _optional(c_eta2, eta, pop),
        "c_alpha3": _optional(c_alpha3, eta, cfg.alpha, pop),
        "theorem6_bound": comm_band_bound(eta, pop.n),
        "steps": rec.horizon,
        "wall_ms": round(wall_ms, 3),
    }


def run_replicate(cfg: ExperimentConfig, replicate: int, keep_record: bool = False) -> ReplicateResult:
    start = time.perf_counter()
    rec = simulate(
        cfg.build_population(),
        cfg.model_variant,
        cfg.build_noise(),
        cfg.initial_state(replicate),
        cfg.horizon,
        cfg.seed,
        replicate,
        cfg.downsample,
    )
    wall = (time.perf_counter() - start) * 1000.0
    return ReplicateResult(summarize(cfg, rec, wall), rec if keep_record else None)


def _run_replicate_job(args):
    cfg, replicate, keep = args
    return run_replicate(cfg, replicate, keep)


# ---------------------------------------------------------------------------
# outputs


def write_jsonl(rec: TrajectoryRecord, path: Path) -> None:
    with open(path, "w") as fh:
        for t, x in zip(rec.times, rec.states):
            fh.write(json.dumps({"t": int(t), "x": [float(v) for v in x], "d": float(rec.d[t])}) + "\n")


def diameter_svg(rec: TrajectoryRecord, eta: float, r_min: float, title: str) -> str:
    t = np.arange(rec.d.size)
    return line_chart(t, rec.d, title=title, guides={"2*eta": 2.0 * eta, "r_min": r_min})


def opinions_svg(rec: TrajectoryRecord, title: str) -> str:
    series = {f"x{i + 1}": rec.states[:, i] for i in range(rec.states.shape[1])}
    return line_chart(rec.times, series, title=title, ylabel="x(t)")


def _stem(cfg: ExperimentConfig, replicate: int) -> str:
    return f"{cfg.name}_s{cfg.seed}_r{replicate}"


def _write_artifacts(cfg: ExperimentConfig, res: ReplicateResult, replicate: int, out: Path) -> list[Path]:
    written = []
    rec = res.record
    if rec is None:
        return written
    pop = cfg.build_population()
    if cfg.outputs.jsonl:
        p = out / f"{_stem(cfg, replicate)}.jsonl"
        write_jsonl(rec, p)
        written.append(p)
    if cfg.outputs.svg:
        p = out / f"{_stem(cfg, replicate)}.svg"
        p.write_text(diameter_svg(rec, cfg.noise.eta, pop.r_min, f"{cfg.name} ({cfg.variant}, eta={cfg.noise.eta:g})"))
        written.append(p)
    return written


# ---------------------------------------------------------------------------
# public entry points


@dataclass
class RunResult:
    rows: list[dict]
    records: list[TrajectoryRecord | None]
    files: list[Path]


def run(cfg: ExperimentConfig, out_dir: str | os.PathLike | None = None, write: bool = True,
        workers: int = 1, keep_records: bool = False) -> RunResult:
    """Run every replicate of ``cfg``; rows come back in replicate order."""
    need_record = keep_records or (write and (cfg.outputs.jsonl or cfg.outputs.svg))
    jobs = [(cfg, k, need_record) for k in range(cfg.replicates)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_replicate_job, jobs))
    else:
        results = [_run_replicate_job(j) for j in jobs]
    rows = [r.row for r in results]
    files: list[Path] = []
    if write:
        out = Path(out_dir if out_dir is not None else cfg.outputs.dir)
        out.mkdir(parents=True, exist_ok=True)
        p = out / cfg.outputs.csv
        p.write_text(csv_text(rows))
        files.append(p)
        for k, res in enumerate(results):
            files.extend(_write_artifacts(cfg, res, k, out))
    records = [r.record for r in results] if keep_records else [None] * len(results)
    return RunResult(rows, records, files)


def sweep_grid(base: ExperimentConfig, etas, variants=None, seeds=None) -> list[ExperimentConfig]:
    etas = list(etas)
    variants = list(variants) if variants else [base.variant]
    seeds = list(seeds) if seeds else [base.seed]
    if not (etas and variants and seeds):
        raise ConfigError("sweep grid is empty")
    grid = []
    for v in variants:
        for eta in etas:
            for s in seeds:
                noise = base.noise.__class__(float(eta), base.noise.kind, base.noise.sigma, base.noise.beta)
                grid.append(base.with_(variant=str(v), noise=noise, seed=int(s), name=f"{base.name}_{v}_eta{eta:g}"))
    return grid


def _sweep_job(args):
    cfg, replicate = args
    try:
        return run_replicate(cfg, replicate).row | {"error": None}
    except HKError as exc:
        row = {c: None for c in CSV_COLUMNS}
        row.update(config_hash=cfg.config_hash(), variant=cfg.variant, n=cfg.population.n,
                   eta=float(cfg.noise.eta), alpha=float(cfg.alpha), seed=f"{cfg.seed}:{replicate}",
                   error=f"{type(exc).__name__}: {exc}")
        return row


def aggregate(rows: list[dict]) -> list[dict]:
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        groups.setdefault((row["variant"], row["eta"]), []).append(row)
    out = []
    for (variant, eta), members in groups.items():
        ok = [r for r in members if not r.get("error")]
        out.append({
            "variant": variant,
            "eta": eta,
            "n_rows": len(members),
            "n_failed": len(members) - len(ok),
            "median_dbar_hat": statistics.median(r["dbar_hat"] for r in ok) if ok else None,
            "median_dunder_hat": statistics.median(r["dunder_hat"] for r in ok) if ok else None,
        })
    return out


def sweep(base: ExperimentConfig, etas, variants=None, seeds=None, out_dir=None, write: bool = True,
          workers: int | None = None) -> tuple[list[dict], list[dict]]:
    """Run every grid point and replicate; a failing point is recorded in its row's
    ``error`` column and the sweep continues."""
    grid = sweep_grid(base, etas, variants, seeds)
    jobs = [(cfg, k) for cfg in grid for k in range(cfg.replicates)]
    workers = workers if workers is not None else min(len(jobs), os.cpu_count() or 1)
    out = Path(out_dir if out_dir is not None else base.outputs.dir)
    rows = []
    sink = None
    if write:
        out.mkdir(parents=True, exist_ok=True)
        sink = open(out / "sweep.csv", "w", newline="")
        w = csv.writer(sink, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
    try:
        if workers > 1 and len(jobs) > 1:
            pool = ProcessPoolExecutor(max_workers=workers)
            it = pool.map(_sweep_job, jobs)
        else:
            pool = None
            it = map(_sweep_job, jobs)
        # results arrive in grid order; this loop is the only writer
        for row in it:
            rows.append(row)
            if sink is not None:
                w.writerow([_fmt(row.get(c)) for c in SWEEP_COLUMNS])
                sink.flush()
        if pool is not None:
            pool.shutdown()
    finally:
        if sink is not None:
            sink.close()
    agg = aggregate(rows)
    if write:
        (out / "sweep_aggregate.csv").write_text(csv_text(agg, AGGREGATE_COLUMNS))
    return rows, agg


FIGURES = {
    "1": ("fig1",),
    "2": ("fig2",),
    "3": ("fig3",),
    "4": ("fig4",),
    "5": ("fig5",),
    "example1": ("example1_hetero", "example1_homo"),
}


def figures(which: str, out_dir=None, horizon: int | None = None, seed: int | None = None) -> list[RunResult]:
    """Reproduce a figure from its checked-in configuration and write CSV, JSONL and SVG."""
    which = str(which)
    if which not in FIGURES:
        raise ConfigError(f"unknown figure {which!r}; choose from {sorted(FIGURES)}")
    results = []
    for name in FIGURES[which]:
        cfg = builtin_config(name)
        if horizon is not None:
            cfg = cfg.with_(horizon=int(horizon), downsample=None)
        if seed is not None:
            cfg = cfg.with_(seed=int(seed))
        out = Path(out_dir if out_dir is not None else cfg.outputs.dir)
        res = run(cfg, out, write=True, keep_records=True)
        if which == "example1":
            for k, rec in enumerate(res.records):
                p = out / f"{_stem(cfg, k)}_opinions.svg"
                p.write_text(opinions_svg(rec, f"{cfg.name}: opinions (eta={cfg.noise.eta:g})"))
                res.files.append(p)
        res.records = [None] * len(res.records)
        results.append(res)
    return results


# ---------------------------------------------------------------------------
# reach tasks


def reach_task(cfg: ExperimentConfig) -> ReachTask:
    if cfg.reach is None:
        raise ConfigError("config has no [reach] section")
    rs = cfg.reach
    n = cfg.population.n
    if cfg.x0.kind == "uniform":
        x0s = [cfg.x0.build(n, cfg.seed, k) for k in range(rs.n_initial)]
    else:
        x0s = [cfg.x0.build(n, cfg.seed, 0)]
    return ReachTask(
        pop=cfg.build_population(),
        variant=cfg.model_variant,
        eta=float(cfg.noise.eta),
        law=rs.law,
        params=dict(rs.params),
        x0s=x0s,
        adversaries=adversary_names(rs.n_random_adversaries),
        seed=cfg.seed,
        horizon=rs.horizon,
    )


def write_reach_trace(report: ReachReport, path: Path) -> None:
    run_ = report.trace
    with open(path, "w") as fh:
        for t, x in enumerate(run_.states):
            obj = {"t": t, "x": [float(v) for v in x], "d": float(np.ptp(x))}
            if t < len(run_.controls):
                c = run_.controls[t]
                obj.update(phase=run_.phases[t], u=np.asarray(c.u).tolist(), delta=c.delta.tolist(),
                           b=np.asarray(run_.uncertainties[t]).tolist())
            fh.write(json.dumps(obj) + "\n")


def reach(cfg: ExperimentConfig, out_dir=None, write: bool = True) -> tuple[ReachReport, dict]:
    task = reach_task(cfg)
    report = certify(task)
    row = {
        "config_hash": cfg.config_hash(),
        "law": task.law,
        "variant": cfg.variant,
        "n": task.pop.n,
        "eta": task.eta,
        "target": report.target.describe(),
        "reached": report.reached,
        "hit_time": report.hit_time,
        "horizon": report.horizon,
        "adversary": report.adversary,
        "n_runs": len(report.runs),
        "phase": report.trace.phase,
        "min_achieved_spread": min(r.achieved_spread for r in report.runs),
    }
    if write:
        out = Path(out_dir if out_dir is not None else cfg.outputs.dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / cfg.outputs.csv).write_text(csv_text([row], REACH_COLUMNS))
        if cfg.reach.trace:
            write_reach_trace(report, out / cfg.reach.trace)
    return report, row


def horizon_for_profile(horizon: int, profile: str) -> int:
    """Desk-scale profile caps horizons at 1e5 steps."""
    if profile == "ci":
        return min(horizon, 100_000)
    if profile == "full":
        return horizon
    raise ConfigError(f"unknown profile {profile!r}")


__all__ = [
    "AGGREGATE_COLUMNS",
    "CSV_COLUMNS",
    "REACH_COLUMNS",
    "RunResult",
    "aggregate",
    "csv_text",
    "figures",
    "horizon_for_profile",
    "reach",
    "run",
    "run_replicate",
    "summarize",
    "sweep",
    "sweep_grid",
]
