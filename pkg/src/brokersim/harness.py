"""Experiment harness: strategy x carrier x spread grids, the c sweep, file
emission, transcript replay, and the command line front end.

Determinism contract: every random draw comes from a stream keyed by
(master_seed, purpose, spread, load index, repetition[, carrier]), so a grid
is reproducible bit for bit regardless of worker count or execution order.
All strategies facing the same (spread, load, repetition) see the same load
and the same shift schedule.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from functools import partial
from pathlib import Path

from .carrier import CARRIER_KEYS
from .domain import Load, ProtocolConfig, SpreadRegime, classify_regime, make_synthetic_load
from .metrics import CellMetrics, StatTest, compute_cell_metrics, transcript_savings, two_prop_z, welch_t
from .pricing import ShiftSchedule, gen_shift_schedule
from .protocol import (
    OFFER_CURVE_COLUMNS,
    OutcomeStatus,
    Transcript,
    offer_curve_rows,
    run_negotiation,
)
from .seeding import rng_for
from .strategy import STRATEGY_KEYS

PAPER_SPREADS = (1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 10.0, 12.0, 15.0, 20.0)
R_MIN_LOW, R_MIN_HIGH = 1000, 3000
BASELINE_STRATEGY = "two-index"

_CITIES = (
    "Atlanta", "Dallas", "Chicago", "Memphis", "Denver",
    "Columbus", "Laredo", "Savannah", "Kansas City", "Harrisburg",
)


@dataclass(frozen=True)
class ExperimentConfig:
    strategies: tuple = STRATEGY_KEYS
    carriers: tuple = CARRIER_KEYS
    spreads: tuple = PAPER_SPREADS
    loads_per_cell: int = 50
    repetitions: int = 1
    master_seed: int = 2
    c: float | None = None              # two-index calibration override
    c_values: tuple = (1.0, 2.0, 3.0, 4.0, 5.0, 6.0)
    n_shift_events: int = 1
    workers: int = 1
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)

    def __post_init__(self) -> None:
        if self.loads_per_cell < 1 or self.repetitions < 1:
            raise ValueError("loads_per_cell and repetitions must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        for key in self.strategies:
            if key not in STRATEGY_KEYS and not key.startswith("fixed:"):
                raise ValueError(f"unknown strategy key: {key!r}")
        for key in self.carriers:
            if key not in CARRIER_KEYS:
                raise ValueError(f"unknown carrier key: {key!r}")
        for s in self.spreads:
            if s <= 0:
                raise ValueError(f"spread percentages must be positive, got {s}")

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("strategies", "carriers", "spreads", "c_values"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        proto = d.pop("protocol", None)
        kwargs = {}
        for k in ("strategies", "carriers"):
            if k in d:
                kwargs[k] = tuple(str(x) for x in d.pop(k))
        for k in ("spreads", "c_values"):
            if k in d:
                kwargs[k] = tuple(float(x) for x in d.pop(k))
        kwargs.update(d)
        if proto is not None:
            kwargs["protocol"] = ProtocolConfig(**proto)
        return cls(**kwargs)


def gen_load(master_seed: int, spread_pct: float, load_idx: int) -> Load:
    """Synthetic load: whole-dollar floor uniform in [1000, 3000], band set by
    the spread, target at the band midpoint."""
    rng = rng_for(master_seed, "load-gen", spread_pct, load_idx)
    r_min = float(rng.integers(R_MIN_LOW, R_MIN_HIGH + 1))
    origin = _CITIES[int(rng.integers(0, len(_CITIES)))]
    dest = _CITIES[int(rng.integers(0, len(_CITIES) - 1))]
    if dest == origin:
        dest = _CITIES[-1]
    return make_synthetic_load(
        r_min,
        spread_pct,
        load_id=f"S{spread_pct:g}-L{load_idx:04d}",
        origin=origin,
        destination=dest,
    )


def _gtft_rng(cfg: ExperimentConfig, spread: float, load_idx: int, rep: int, carrier: str):
    # Keyed per negotiation: sharing one stream across carrier opponents
    # would make results depend on execution order.
    return rng_for(cfg.master_seed, "gtft", spread, load_idx, rep, carrier)


def _run_spread(cfg_dict: dict, spread: float) -> list[Transcript]:
    cfg = ExperimentConfig.from_dict(cfg_dict)
    out: list[Transcript] = []
    for load_idx in range(cfg.loads_per_cell):
        load = gen_load(cfg.master_seed, spread, load_idx)
        for rep in range(cfg.repetitions):
            schedule = gen_shift_schedule(
                (spread, load.id, rep), cfg.master_seed, n_events=cfg.n_shift_events
            )
            for strategy in cfg.strategies:
                for carrier in cfg.carriers:
                    rng = None
                    if strategy == "gtft":
                        rng = _gtft_rng(cfg, spread, load_idx, rep, carrier)
                    out.append(run_negotiation(
                        load, strategy, carrier, schedule, cfg.protocol,
                        rng=rng, c=cfg.c,
                        meta={
                            "spread_pct": spread,
                            "load_index": load_idx,
                            "repetition": rep,
                            "master_seed": cfg.master_seed,
                            "c": cfg.c if cfg.c is not None else cfg.protocol.calibration_constant,
                            "schedule_digest": schedule.digest(),
                        },
                    ))
    return out


@dataclass(frozen=True)
class GridResult:
    config: dict
    transcripts: tuple
    cells: dict                    # (strategy, carrier, spread) -> CellMetrics
    strategy_summary: dict         # strategy -> CellMetrics
    regime_summary: dict           # (strategy, regime.value) -> CellMetrics
    spread_summary: dict           # (strategy, spread) -> CellMetrics
    tests_vs_baseline: dict        # strategy -> {metric: StatTest}
    schedule_consistent: bool


def summarize(transcripts: list[Transcript], config: ExperimentConfig) -> GridResult:
    by_cell: dict = {}
    by_strategy: dict = {}
    by_regime: dict = {}
    by_spread: dict = {}
    digests: dict = {}
    consistent = True
    for t in transcripts:
        spread = t.meta["spread_pct"]
        by_cell.setdefault((t.strategy, t.carrier, spread), []).append(t)
        by_strategy.setdefault(t.strategy, []).append(t)
        by_regime.setdefault((t.strategy, classify_regime(spread).value), []).append(t)
        by_spread.setdefault((t.strategy, spread), []).append(t)
        key = (spread, t.load.id, t.meta["repetition"])
        seen = digests.setdefault(key, t.meta["schedule_digest"])
        if seen != t.meta["schedule_digest"]:
            consistent = False

    tests = {}
    if BASELINE_STRATEGY in by_strategy:
        base = by_strategy[BASELINE_STRATEGY]
        base_savings = [s for s in map(transcript_savings, base) if s is not None]
        base_rounds = [
            float(t.outcome.rounds_used) for t in base
            if t.outcome.status is OutcomeStatus.AGREED
        ]
        base_agree = sum(1 for t in base if t.outcome.status is OutcomeStatus.AGREED)
        for strategy, ts in by_strategy.items():
            if strategy == BASELINE_STRATEGY:
                continue
            savings = [s for s in map(transcript_savings, ts) if s is not None]
            rounds = [
                float(t.outcome.rounds_used) for t in ts
                if t.outcome.status is OutcomeStatus.AGREED
            ]
            agree = sum(1 for t in ts if t.outcome.status is OutcomeStatus.AGREED)
            entry = {}
            if len(savings) >= 2 and len(base_savings) >= 2:
                entry["savings"] = welch_t(savings, base_savings)
                entry["rounds"] = welch_t(rounds, base_rounds)
            entry["agreement"] = two_prop_z(agree, len(ts), base_agree, len(base))
            tests[strategy] = entry

    return GridResult(
        config=config.to_dict(),
        transcripts=tuple(transcripts),
        cells={k: compute_cell_metrics(v) for k, v in sorted(by_cell.items())},
        strategy_summary={k: compute_cell_metrics(v) for k, v in sorted(by_strategy.items())},
        regime_summary={k: compute_cell_metrics(v) for k, v in sorted(by_regime.items())},
        spread_summary={k: compute_cell_metrics(v) for k, v in sorted(by_spread.items())},
        tests_vs_baseline=tests,
        schedule_consistent=consistent,
    )


def run_grid(config: ExperimentConfig) -> GridResult:
    cfg_dict = config.to_dict()
    spreads = list(config.spreads)
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            blocks = list(pool.map(partial(_run_spread, cfg_dict), spreads))
    else:
        blocks = [_run_spread(cfg_dict, s) for s in spreads]
    transcripts = [t for block in blocks for t in block]
    return summarize(transcripts, config)


def run_c_sweep(config: ExperimentConfig) -> dict:
    """Re-run the adaptive strategy over the identical loads and schedules for
    each calibration constant.  Returns {"runs": {c: GridResult}, "rows": ...}."""
    runs = {}
    rows = []
    for c in config.c_values:
        cfg = replace(config, strategies=(BASELINE_STRATEGY,), c=float(c))
        result = run_grid(cfg)
        runs[float(c)] = result
        m = result.strategy_summary[BASELINE_STRATEGY]
        rows.append({
            "c": float(c),
            "agreement_rate": m.agreement_rate,
            "agreement_ci": m.agreement_ci,
            "mean_savings": m.mean_savings,
            "savings_ci": m.savings_ci,
            "retraction_rate": m.retraction_rate,
            "n": m.n,
        })
    return {"runs": runs, "rows": rows}


RESULT_METRICS = (
    "agreement_rate", "mean_savings", "mean_rounds", "retraction_rate",
    "hold_share", "agreements",
)


def _fmt(v) -> str:
    if v is None:
        return ""
    return repr(v) if isinstance(v, float) else str(v)


def _metric_rows(prefix: tuple, m: CellMetrics) -> list[str]:
    cis = {
        "agreement_rate": m.agreement_ci,
        "mean_savings": m.savings_ci,
        "mean_rounds": m.rounds_ci,
    }
    rows = []
    for name in RESULT_METRICS:
        value = getattr(m, name) if name != "agreements" else m.agreements
        rows.append(",".join([
            *prefix, name, _fmt(value), _fmt(cis.get(name)), str(m.n),
        ]))
    return rows


def emit_results(result: GridResult, out_dir: str | Path) -> dict:
    """Write results.csv, summary.json, transcripts.jsonl, offer_curves.csv.
    Output bytes are a pure function of the grid result."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    lines = ["strategy,carrier,spread_pct,metric,value,ci_half_width,n"]
    for (strategy, carrier, spread), m in result.cells.items():
        lines.extend(_metric_rows((strategy, carrier, repr(float(spread))), m))
    (out / "results.csv").write_text("\n".join(lines) + "\n")

    summary = {
        "config": result.config,
        "schedule_consistent": result.schedule_consistent,
        "strategies": {k: m.to_dict() for k, m in result.strategy_summary.items()},
        "regimes": {f"{s}|{r}": m.to_dict() for (s, r), m in result.regime_summary.items()},
        "spreads": {f"{s}|{sp:g}": m.to_dict() for (s, sp), m in result.spread_summary.items()},
        "tests_vs_baseline": {
            s: {metric: t.to_dict() for metric, t in entry.items()}
            for s, entry in result.tests_vs_baseline.items()
        },
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")

    with (out / "transcripts.jsonl").open("w") as fh:
        for t in result.transcripts:
            fh.write(t.to_json() + "\n")

    curve_lines = [OFFER_CURVE_COLUMNS]
    for t in result.transcripts:
        curve_lines.extend(offer_curve_rows(t))
    (out / "offer_curves.csv").write_text("\n".join(curve_lines) + "\n")

    return {name: str(out / name) for name in (
        "results.csv", "summary.json", "transcripts.jsonl", "offer_curves.csv",
    )}


def emit_sweep(sweep: dict, out_dir: str | Path) -> str:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["c,agreement_rate,agreement_ci,mean_savings,savings_ci,retraction_rate,n"]
    for row in sweep["rows"]:
        lines.append(",".join(_fmt(row[k]) for k in (
            "c", "agreement_rate", "agreement_ci", "mean_savings",
            "savings_ci", "retraction_rate", "n",
        )))
    path = out / "c_sweep.csv"
    path.write_text("\n".join(lines) + "\n")
    return str(path)


def replay_transcript(line: str) -> tuple[bool, Transcript, Transcript]:
    """Re-run a serialized negotiation and check it reproduces exactly."""
    d = json.loads(line)
    load = Load.from_dict(d["load"])
    schedule = ShiftSchedule.from_dict(d["schedule"]) if d["schedule"] else None
    meta = d["meta"]
    protocol = ProtocolConfig(calibration_constant=float(meta.get("c", 3.0)))
    rng = None
    if d["strategy"] == "gtft":
        rng = rng_for(
            int(meta["master_seed"]), "gtft", meta["spread_pct"],
            int(meta["load_index"]), int(meta["repetition"]), d["carrier"],
        )
    fresh = run_negotiation(
        load, d["strategy"], d["carrier"], schedule, protocol,
        rng=rng, c=meta.get("c"), meta=meta,
    )
    return fresh.to_json() == json.dumps(d, sort_keys=True), fresh, d


# ---------------------------------------------------------------------------
# command line

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; values override flags")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--loads-per-cell", type=int, dest="loads_per_cell")
    p.add_argument("--spreads", help="comma list of spread percentages")
    p.add_argument("--strategies", help="comma list of strategy keys")
    p.add_argument("--carriers", help="comma list of carrier keys")
    p.add_argument("--repetitions", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out", default="results", help="output directory")


def _config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    d: dict = {}
    if args.seed is not None:
        d["master_seed"] = args.seed
    if args.loads_per_cell is not None:
        d["loads_per_cell"] = args.loads_per_cell
    if args.spreads:
        d["spreads"] = tuple(float(x) for x in args.spreads.split(","))
    if args.strategies:
        d["strategies"] = tuple(args.strategies.split(","))
    if args.carriers:
        d["carriers"] = tuple(args.carriers.split(","))
    if args.repetitions is not None:
        d["repetitions"] = args.repetitions
    if args.workers is not None:
        d["workers"] = args.workers
    if getattr(args, "c_values", None):
        d["c_values"] = tuple(float(x) for x in args.c_values.split(","))
    if getattr(args, "c", None) is not None:
        d["c"] = args.c
    if args.config:
        file_cfg = json.loads(Path(args.config).read_text())
        d.update(file_cfg)  # config file wins over flags
    return ExperimentConfig.from_dict(d)


def _print_strategy_table(result: GridResult) -> None:
    print(f"{'strategy':<12} {'agree%':>8} {'savings':>9} {'rounds':>8} {'retract':>8} {'holds':>7}")
    for strategy, m in result.strategy_summary.items():
        savings = f"{m.mean_savings:.3f}" if m.mean_savings is not None else "-"
        rounds = f"{m.mean_rounds:.2f}" if m.mean_rounds is not None else "-"
        print(
            f"{strategy:<12} {100 * m.agreement_rate:8.1f} {savings:>9} "
            f"{rounds:>8} {m.retraction_rate:8.3f} {m.hold_share:7.3f}"
        )


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="brokersim",
        description="Deterministic freight-rate negotiation experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the strategy x carrier x spread grid")
    _add_common(p_run)
    p_run.add_argument("--c", type=float, help="calibration constant for the adaptive strategy")

    p_sweep = sub.add_parser("sweep-c", help="re-run the adaptive strategy per calibration constant")
    _add_common(p_sweep)
    p_sweep.add_argument("--c-values", dest="c_values", help="comma list, default 1..6")

    p_replay = sub.add_parser("replay", help="re-run one transcript and verify it reproduces")
    p_replay.add_argument("transcript", help="path to transcripts.jsonl")
    p_replay.add_argument("--line", type=int, default=1, help="1-based line number")

    p_stats = sub.add_parser("stats", help="summarize a results.csv")
    p_stats.add_argument("results", help="path to results.csv")

    args = parser.parse_args(argv)

    if args.command == "run":
        cfg = _config_from_args(args)
        result = run_grid(cfg)
        paths = emit_results(result, args.out)
        _print_strategy_table(result)
        print("wrote " + ", ".join(sorted(paths.values())))
        return 0

    if args.command == "sweep-c":
        cfg = _config_from_args(args)
        sweep = run_c_sweep(cfg)
        path = emit_sweep(sweep, args.out)
        print(f"{'c':>4} {'agree%':>8} {'savings':>9} {'retract':>8}")
        for row in sweep["rows"]:
            print(
                f"{row['c']:4.1f} {100 * row['agreement_rate']:8.1f} "
                f"{row['mean_savings']:9.3f} {row['retraction_rate']:8.3f}"
            )
        print(f"wrote {path}")
        return 0

    if args.command == "replay":
        lines = Path(args.transcript).read_text().splitlines()
        if not (1 <= args.line <= len(lines)):
            print(f"line {args.line} out of range (file has {len(lines)})", file=sys.stderr)
            return 2
        ok, fresh, _ = replay_transcript(lines[args.line - 1])
        status = fresh.outcome
        print(
            f"{fresh.strategy} vs {fresh.carrier} on {fresh.load.id}: "
            f"{status.status.value} in {status.rounds_used} round(s)"
        )
        for r in fresh.rounds:
            offer = f"{r.broker_offer:.2f}" if r.broker_offer is not None else "(accept standing)"
            counter = f"{r.carrier_rate:.2f}" if r.carrier_rate is not None else "-"
            print(f"  t={r.t:2d} broker={offer:>18} carrier={r.carrier_action or 'accept'}:{counter}")
        print("replay: exact match" if ok else "replay: MISMATCH")
        return 0 if ok else 1

    if args.command == "stats":
        _stats_command(Path(args.results))
        return 0

    return 2


def _stats_command(path: Path) -> None:
    import csv as _csv

    per_strategy: dict = {}
    with path.open() as fh:
        for row in _csv.DictReader(fh):
            entry = per_strategy.setdefault(row["strategy"], {})
            cell = entry.setdefault((row["carrier"], row["spread_pct"]), {})
            cell[row["metric"]] = (row["value"], int(row["n"]))
    print(f"{'strategy':<12} {'agree%':>8} {'savings':>9} {'retract':>8}")
    for strategy, cells in sorted(per_strategy.items()):
        n_total = agree = 0
        savings_num = savings_den = retract = 0.0
        for metrics in cells.values():
            n = metrics["agreement_rate"][1]
            a = int(metrics["agreements"][0])
            n_total += n
            agree += a
            if metrics["mean_savings"][0]:
                savings_num += float(metrics["mean_savings"][0]) * a
                savings_den += a
            retract += float(metrics["retraction_rate"][0]) * n
        savings = f"{savings_num / savings_den:.3f}" if savings_den else "-"
        print(
            f"{strategy:<12} {100 * agree / n_total:8.1f} {savings:>9} "
            f"{retract / n_total:8.3f}"
        )


if __name__ == "__main__":
    raise SystemExit(main())
