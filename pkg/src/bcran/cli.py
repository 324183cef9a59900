"""Command-line experiment runner and CSV emission.

Presets mirror the four experiments: ``bc-delay`` and ``bc-overhead`` sweep
block size, timer and arrival rate on the standalone ledgers; ``sharing-random``
compares static and dynamic sharing over operator counts and user profiles;
``mno-mvno`` runs the two-operator use case and emits time series.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .config import ConfigError, SimConfig, from_dict, parse_config
from .ledger import fork_free_overhead, overhead_ratio, simulate_ledger
from .sim import SUMMARY_FIELDS, aggregate_metrics, run_scenario

log = logging.getLogger("bcran")

BLOCK_SIZES = tuple(range(3000, 30001, 3000))
TIMERS = (0.1, 5.0)
# assumed log-spaced arrival rates, tx/s
ARRIVAL_RATES = (0.1, 1.0, 10.0, 100.0)

DELAY_COLUMNS = ("preset", "seed", "ledger", "S_B_bits", "T_wait_s", "lambda_tps", "mean_Tc_s",
                 "p_fork_emp", "mean_Tqueue_s", "mean_Tmine_s", "mean_Tprop_s", "n_tx")
OVERHEAD_COLUMNS = ("preset", "seed", "ledger", "S_B_bits", "T_wait_s", "lambda_tps", "overhead_ratio",
                    "overhead_fork_free", "p_fork_emp", "n_blocks", "mean_tx_per_block")
SHARING_COLUMNS = ("preset", "seed", "M", "profile", "mode") + SUMMARY_FIELDS
SERIES_COLUMNS = ("preset", "seed", "ownership", "mode", "t_s", "capacity_bps", "mean_acceptance",
                  "mean_ap_load", "n_unserved")
USECASE_COLUMNS = ("preset", "seed", "ownership", "mode") + SUMMARY_FIELDS
SCENARIO_COLUMNS = ("seed", "t_s", "capacity_bps", "mean_acceptance", "mean_ap_load", "n_unserved")


class UsageError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentPreset:
    name: str
    description: str
    axes: dict
    overrides: dict = field(default_factory=dict)
    runner: Optional[Callable] = None

    def __post_init__(self):
        if any(len(v) == 0 for v in self.axes.values()):
            raise ValueError(f"preset {self.name}: empty sweep axis")


# -- CSV ---------------------------------------------------------------------
def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".9g")
    return str(value)


def emit_csv(path, columns: Sequence[str], rows: Iterable, comment: Optional[str] = None) -> Path:
    """Write ``rows`` (dicts or sequences) under a fixed header.

    The optional comment becomes a leading ``# ...`` line.
    """
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            if comment:
                fh.write(f"# {comment}\r\n")
            w = csv.writer(fh)
            w.writerow(columns)
            for row in rows:
                values = [row[c] for c in columns] if isinstance(row, dict) else list(row)
                w.writerow([fmt(v) for v in values])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc
    return path


def provenance(config: SimConfig, preset: str, seed: int, replications: int) -> str:
    return f"bcran preset={preset} config_hash={config.config_hash()} seed={seed} replications={replications}"


def summarize(rows: list[dict], keys: Sequence[str], metrics: Sequence[str]) -> tuple[list, list]:
    """Per sweep point mean and 95% CI half-width across seeds."""
    groups: dict = {}
    for r in rows:
        groups.setdefault(tuple(r[k] for k in keys), []).append({m: r[m] for m in metrics})
    columns = list(keys) + ["n_seeds"]
    for m in metrics:
        columns += [f"{m}_mean", f"{m}_ci95"]
    out = []
    for point, group in groups.items():
        agg = aggregate_metrics(group)
        row = dict(zip(keys, point))
        row["n_seeds"] = len(group)
        for m in metrics:
            row[f"{m}_mean"] = agg[m].mean
            row[f"{m}_ci95"] = agg[m].half_width
        out.append(row)
    return columns, out


def _map(fn, tasks: list, jobs: int) -> list:
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(*t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, *zip(*tasks)))


# -- preset task functions (module level so they pickle) --------------------
def _ledger_point(raw: dict, kind: str, sb: int, tw: float, lam: float, seed: int) -> dict:
    cfg = from_dict(raw)
    lc = cfg.ledger_config(kind)
    lc = dataclasses.replace(lc, block_size_bits=sb, max_wait_s=tw)
    m = simulate_ledger(lc, lam, cfg.n_transactions, seed)
    k = float(np.mean(m.block_tx_counts)) if m.block_tx_counts else 0.0
    return {
        "seed": seed, "ledger": kind, "S_B_bits": sb, "T_wait_s": tw, "lambda_tps": lam,
        "mean_Tc_s": m.mean("confirmation_delays"), "p_fork_emp": m.fork_rate,
        "mean_Tqueue_s": m.mean("queue_delays"), "mean_Tmine_s": m.mean("mining_delays"),
        "mean_Tprop_s": m.mean("prop_delays"), "n_tx": m.n_confirmed,
        "overhead_ratio": overhead_ratio(m) if m.bits_transmitted else 0.0,
        "overhead_fork_free": fork_free_overhead(lc.header_bits, k, lc.tx_bits) if k else 0.0,
        "n_blocks": m.blocks_mined, "mean_tx_per_block": k,
    }


def _scenario_point(raw: dict, seed: int, sharing: bool) -> dict:
    s = run_scenario(from_dict(raw), seed, sharing=sharing)
    return {"summary": s.summary(),
            "series": list(zip(s.times, s.capacity_bps, s.mean_acceptance, s.mean_ap_load, s.n_unserved))}


# -- presets -----------------------------------------------------------------
def _ledger_sweep(config, seeds, kinds, jobs):
    tasks = [(config.raw, kind, sb, tw, lam, seed)
             for kind in kinds for tw in TIMERS for lam in ARRIVAL_RATES for sb in BLOCK_SIZES
             for seed in seeds]
    return _map(_ledger_point, tasks, jobs)


def run_bc_delay(config, seeds, out_dir, jobs, comment):
    rows = _ledger_sweep(config, seeds, ("public", "private"), jobs)
    for r in rows:
        r["preset"] = "bc-delay"
    emit_csv(out_dir / "bc-delay.csv", DELAY_COLUMNS, rows, comment)
    cols, summary = summarize(rows, ("ledger", "S_B_bits", "T_wait_s", "lambda_tps"),
                              ("mean_Tc_s", "p_fork_emp"))
    emit_csv(out_dir / "bc-delay_summary.csv", cols, summary, comment)


def run_bc_overhead(config, seeds, out_dir, jobs, comment):
    rows = _ledger_sweep(config, seeds, ("public",), jobs)
    for r in rows:
        r["preset"] = "bc-overhead"
    emit_csv(out_dir / "bc-overhead.csv", OVERHEAD_COLUMNS, rows, comment)
    cols, summary = summarize(rows, ("ledger", "S_B_bits", "T_wait_s", "lambda_tps"),
                              ("overhead_ratio", "p_fork_emp"))
    emit_csv(out_dir / "bc-overhead_summary.csv", cols, summary, comment)


def _sharing_grid(config: SimConfig, points: list[tuple[dict, dict]], seeds, jobs):
    """Run every (labels, overrides) point in static and dynamic mode for every seed."""
    tasks, labels = [], []
    for lab, ov in points:
        raw = config.with_overrides(ov).raw
        for mode in ("static", "dynamic"):
            for seed in seeds:
                tasks.append((raw, seed, mode == "dynamic"))
                labels.append({**lab, "mode": mode, "seed": seed})
    return labels, _map(_scenario_point, tasks, jobs)


def run_sharing_random(config, seeds, out_dir, jobs, comment):
    points = [({"M": m, "profile": p}, {"market.operators": m, "market.profile": p, "market.ownership": "random"})
              for p in ("low", "average", "high") for m in (2, 3, 4, 5)]
    labels, results = _sharing_grid(config, points, seeds, jobs)
    rows = [{"preset": "sharing-random", **lab, **res["summary"]} for lab, res in zip(labels, results)]
    emit_csv(out_dir / "sharing-random.csv", SHARING_COLUMNS, rows, comment)
    cols, summary = summarize(rows, ("profile", "M", "mode"), SUMMARY_FIELDS)
    emit_csv(out_dir / "sharing-random_summary.csv", cols, summary, comment)


def run_mno_mvno(config, seeds, out_dir, jobs, comment):
    points = [({"ownership": name}, {"market.operators": 2, "market.ownership": ratio})
              for name, ratio in (("1-0", [1.0, 0.0]), ("0.5-0.5", [0.5, 0.5]))]
    labels, results = _sharing_grid(config, points, seeds, jobs)
    series_rows, rows = [], []
    for lab, res in zip(labels, results):
        rows.append({"preset": "mno-mvno", **lab, **res["summary"]})
        for t, cap, acc, load, unserved in res["series"]:
            series_rows.append({"preset": "mno-mvno", **lab, "t_s": t, "capacity_bps": cap,
                                "mean_acceptance": acc, "mean_ap_load": load, "n_unserved": unserved})
    emit_csv(out_dir / "mno-mvno.csv", SERIES_COLUMNS, series_rows, comment)
    emit_csv(out_dir / "mno-mvno_runs.csv", USECASE_COLUMNS, rows, comment)
    cols, summary = summarize(rows, ("ownership", "mode"), SUMMARY_FIELDS)
    emit_csv(out_dir / "mno-mvno_summary.csv", cols, summary, comment)


PRESETS = {
    p.name: p for p in (
        ExperimentPreset("bc-delay", "confirmation delay and fork probability vs S_B, T_wait, lambda",
                         {"ledger": ("public", "private"), "S_B_bits": BLOCK_SIZES, "T_wait_s": TIMERS,
                          "lambda_tps": ARRIVAL_RATES}, runner=run_bc_delay),
        ExperimentPreset("bc-overhead", "public ledger overhead vs S_B, T_wait, lambda",
                         {"S_B_bits": BLOCK_SIZES, "T_wait_s": TIMERS, "lambda_tps": ARRIVAL_RATES},
                         runner=run_bc_overhead),
        ExperimentPreset("sharing-random", "static vs dynamic sharing over M and user profiles",
                         {"M": (2, 3, 4, 5), "profile": ("low", "average", "high"),
                          "mode": ("static", "dynamic")}, runner=run_sharing_random),
        ExperimentPreset("mno-mvno", "MNO/MVNO use case, time series",
                         {"ownership": ((1.0, 0.0), (0.5, 0.5)), "mode": ("static", "dynamic")},
                         runner=run_mno_mvno),
    )
}


def run_single(config, seeds, out_dir, jobs, comment):
    results = _map(_scenario_point, [(config.raw, s, None) for s in seeds], jobs)
    series = [dict(zip(SCENARIO_COLUMNS, (seed,) + row)) for seed, res in zip(seeds, results) for row in res["series"]]
    emit_csv(out_dir / "scenario.csv", SCENARIO_COLUMNS, series, comment)
    rows = [{"seed": seed, **res["summary"]} for seed, res in zip(seeds, results)]
    emit_csv(out_dir / "scenario_runs.csv", ("seed",) + SUMMARY_FIELDS, rows, comment)


def run_experiment(preset: Optional[str], overrides: Optional[dict], out_dir, seed: Optional[int] = None,
                   replications: Optional[int] = None, config: Optional[SimConfig] = None,
                   jobs: int = 1) -> int:
    """Run one preset (or a plain scenario when ``preset`` is None); returns an exit status."""
    if preset is not None and preset not in PRESETS:
        raise UsageError(f"unknown experiment {preset!r}; valid names: {', '.join(PRESETS)}")
    config = config or from_dict({})
    if overrides:
        config = config.with_overrides(overrides)
    seed = config.run.seed if seed is None else seed
    replications = config.run.replications if replications is None else replications
    if replications < 1:
        raise UsageError("replications must be >= 1")
    seeds = [seed + r for r in range(replications)]
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    comment = provenance(config, preset or "scenario", seed, replications)
    runner = PRESETS[preset].runner if preset else run_single
    log.info("running %s with seeds %s", preset or "scenario", seeds)
    runner(config, seeds, out_dir, jobs, comment)
    return 0


def parse_set(items: Sequence[str]) -> dict:
    out = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise UsageError(f"--set expects key=value, got {item!r}")
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            out[key] = value
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bcran", description="Blockchain-enabled RAN sharing simulator")
    p.add_argument("--config", type=Path, help="JSON scenario config")
    p.add_argument("--experiment", help=f"preset to run: {', '.join(PRESETS)}")
    p.add_argument("--seed", type=int, help="master seed (default from config)")
    p.add_argument("--replications", type=int, help="independent replications, seeds seed..seed+N-1")
    p.add_argument("--out-dir", type=Path, default=Path("results"))
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="dotted-path config override, e.g. market.operators=3 (repeatable)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for replications")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = parse_config(args.config)
        return run_experiment(args.experiment, parse_set(args.set), args.out_dir, args.seed,
                              args.replications, config=config, jobs=args.jobs)
    except (ConfigError, UsageError) as exc:
        print(f"bcran: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - any runtime failure maps to status 1
        log.exception("run failed")
        print(f"bcran: run failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
