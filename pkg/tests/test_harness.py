import csv
import json
from pathlib import Path

import pytest

from brokersim.domain import rate_from_str, rate_to_str
from brokersim.harness import (
    BASELINE_STRATEGY,
    PAPER_SPREADS,
    RESULT_METRICS,
    ExperimentConfig,
    emit_results,
    emit_sweep,
    gen_load,
    main,
    replay_transcript,
    run_c_sweep,
    run_grid,
)
from brokersim.protocol import transcripts_to_jsonl

TINY = ExperimentConfig(
    strategies=("linear", "gtft", "two-index"),
    carriers=("tft", "hardliner"),
    spreads=(2.0, 6.0),
    loads_per_cell=3,
    workers=1,
)


@pytest.fixture(scope="module")
def tiny_grid():
    return run_grid(TINY)


class TestGenLoad:
    def test_deterministic(self):
        assert gen_load(2, 6.0, 0) == gen_load(2, 6.0, 0)
        assert gen_load(2, 6.0, 0) != gen_load(2, 6.0, 1)
        assert gen_load(2, 6.0, 0) != gen_load(3, 6.0, 0)

    def test_floor_whole_dollars_in_range(self):
        for i in range(60):
            load = gen_load(11, 8.0, i)
            assert load.r_min == int(load.r_min)
            assert 1000 <= load.r_min <= 3000

    def test_id_format_and_route(self):
        load = gen_load(2, 6.0, 7)
        assert load.id == "S6-L0007"
        assert load.origin != load.destination

    def test_band_quantized_to_cents(self):
        for i in range(20):
            load = gen_load(5, 3.0, i)
            assert load.r_max == rate_from_str(rate_to_str(load.r_min * 1.03))
            assert load.r_target == rate_from_str(rate_to_str((load.r_min + load.r_max) / 2))


class TestExperimentConfig:
    def test_defaults(self):
        cfg = ExperimentConfig()
        assert cfg.spreads == PAPER_SPREADS
        assert BASELINE_STRATEGY in cfg.strategies
        assert cfg.protocol.max_rounds == 10

    def test_dict_round_trip(self):
        cfg = ExperimentConfig(spreads=(2.0, 6.0), c=2.5, workers=3)
        assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg

    def test_from_dict_coerces_types(self):
        cfg = ExperimentConfig.from_dict(
            {"spreads": [2, 6], "strategies": ["linear"], "master_seed": 7}
        )
        assert cfg.spreads == (2.0, 6.0) and cfg.strategies == ("linear",)

    @pytest.mark.parametrize("kw", [
        {"strategies": ("bogus",)},
        {"carriers": ("nope",)},
        {"spreads": (0.0,)},
        {"loads_per_cell": 0},
        {"repetitions": 0},
        {"workers": 0},
    ])
    def test_validation(self, kw):
        with pytest.raises(ValueError):
            ExperimentConfig(**kw)

    def test_fixed_beta_keys_allowed(self):
        ExperimentConfig(strategies=("fixed:0.8", "two-index"))


class TestRunGrid:
    def test_counts(self, tiny_grid):
        assert len(tiny_grid.transcripts) == 2 * 3 * 3 * 2  # spreads*loads*strategies*carriers
        assert len(tiny_grid.cells) == 3 * 2 * 2
        assert set(tiny_grid.strategy_summary) == {"linear", "gtft", "two-index"}

    def test_meta_fields(self, tiny_grid):
        t = tiny_grid.transcripts[0]
        assert set(t.meta) == {
            "spread_pct", "load_index", "repetition", "master_seed", "c", "schedule_digest",
        }

    def test_same_load_and_schedule_across_strategies(self, tiny_grid):
        by_key = {}
        for t in tiny_grid.transcripts:
            key = (t.meta["spread_pct"], t.load.id, t.meta["repetition"])
            seen = by_key.setdefault(key, (t.load, t.schedule))
            assert seen == (t.load, t.schedule)
        assert tiny_grid.schedule_consistent

    def test_deterministic_rerun(self, tiny_grid):
        again = run_grid(TINY)
        assert transcripts_to_jsonl(list(again.transcripts)) == transcripts_to_jsonl(
            list(tiny_grid.transcripts)
        )

    def test_baseline_comparisons_present(self, tiny_grid):
        assert set(tiny_grid.tests_vs_baseline) == {"linear", "gtft"}
        entry = tiny_grid.tests_vs_baseline["linear"]
        assert {"savings", "rounds", "agreement"} <= set(entry)
        assert entry["agreement"].name == "two_prop_z"


class TestWorkerParity:
    def test_bitwise_identical_outputs(self, tiny_grid, tmp_path):
        serial = tmp_path / "serial"
        threaded = tmp_path / "threaded"
        emit_results(tiny_grid, serial)
        emit_results(run_grid(ExperimentConfig.from_dict({**TINY.to_dict(), "workers": 2})), threaded)
        for name in ("results.csv", "transcripts.jsonl", "offer_curves.csv"):
            assert (serial / name).read_bytes() == (threaded / name).read_bytes()
        a = json.loads((serial / "summary.json").read_text())
        b = json.loads((threaded / "summary.json").read_text())
        assert a["config"].pop("workers") != b["config"].pop("workers")
        assert a == b


SWEEP_CFG = ExperimentConfig(
    spreads=(6.0,), loads_per_cell=2, carriers=("tft", "cooperative"),
    c_values=(1.0, 3.0), workers=1,
)


@pytest.fixture(scope="module")
def sweep():
    return run_c_sweep(SWEEP_CFG)


class TestCSweep:
    def test_rows_follow_c_values(self, sweep):
        assert [row["c"] for row in sweep["rows"]] == [1.0, 3.0]

    def test_only_adaptive_strategy_runs(self, sweep):
        for result in sweep["runs"].values():
            assert {t.strategy for t in result.transcripts} == {BASELINE_STRATEGY}

    def test_same_loads_and_schedules_across_c(self, sweep):
        keys = [
            [(t.load.id, t.meta["schedule_digest"]) for t in result.transcripts]
            for result in sweep["runs"].values()
        ]
        assert keys[0] == keys[1]

    def test_emit_sweep(self, sweep, tmp_path):
        path = Path(emit_sweep(sweep, tmp_path))
        rows = list(csv.DictReader(path.open()))
        assert len(rows) == 2
        assert rows[0]["c"] == "1.0"
        assert float(rows[0]["n"]) == 4


class TestEmit:
    def test_file_set_and_shapes(self, tiny_grid, tmp_path):
        paths = emit_results(tiny_grid, tmp_path)
        assert sorted(Path(p).name for p in paths.values()) == [
            "offer_curves.csv", "results.csv", "summary.json", "transcripts.jsonl",
        ]
        rows = list(csv.DictReader((tmp_path / "results.csv").open()))
        assert len(rows) == len(tiny_grid.cells) * len(RESULT_METRICS)
        lines = (tmp_path / "transcripts.jsonl").read_text().splitlines()
        assert len(lines) == len(tiny_grid.transcripts)

    def test_float_cells_round_trip_via_repr(self, tiny_grid, tmp_path):
        emit_results(tiny_grid, tmp_path)
        for row in csv.DictReader((tmp_path / "results.csv").open()):
            if row["metric"] == "mean_savings" and row["value"]:
                strategy, carrier, spread = row["strategy"], row["carrier"], float(row["spread_pct"])
                cell = tiny_grid.cells[(strategy, carrier, spread)]
                assert float(row["value"]) == cell.mean_savings

    def test_summary_structure(self, tiny_grid, tmp_path):
        emit_results(tiny_grid, tmp_path)
        s = json.loads((tmp_path / "summary.json").read_text())
        assert set(s) == {
            "config", "schedule_consistent", "strategies", "regimes",
            "spreads", "tests_vs_baseline",
        }
        assert s["schedule_consistent"] is True
        assert s["config"]["master_seed"] == 2


class TestReplay:
    def test_every_line_reproduces(self, tiny_grid):
        for line in transcripts_to_jsonl(list(tiny_grid.transcripts)).splitlines():
            ok, _, _ = replay_transcript(line)
            assert ok

    def test_tampered_line_detected(self, tiny_grid):
        line = tiny_grid.transcripts[0].to_json()
        d = json.loads(line)
        d["outcome"]["rounds_used"] = 99
        ok, _, _ = replay_transcript(json.dumps(d, sort_keys=True))
        assert not ok


class TestCli:
    RUN_ARGS = [
        "run", "--seed", "2", "--spreads", "6", "--loads-per-cell", "2",
        "--strategies", "linear,two-index", "--carriers", "tft",
    ]

    def test_run_writes_files(self, tmp_path, capsys):
        rc = main(self.RUN_ARGS + ["--out", str(tmp_path)])
        assert rc == 0
        for name in ("results.csv", "summary.json", "transcripts.jsonl", "offer_curves.csv"):
            assert (tmp_path / name).exists()
        out = capsys.readouterr().out
        assert "two-index" in out and "agree%" in out

    def test_config_file_overrides_flags(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({
            "master_seed": 5, "spreads": [6.0], "loads_per_cell": 2,
            "strategies": ["linear"], "carriers": ["tft"],
        }))
        rc = main(["run", "--config", str(cfg_path), "--seed", "9",
                   "--out", str(tmp_path / "o")])
        assert rc == 0
        s = json.loads((tmp_path / "o" / "summary.json").read_text())
        assert s["config"]["master_seed"] == 5

    def test_replay_roundtrip_and_errors(self, tmp_path, capsys):
        main(self.RUN_ARGS + ["--out", str(tmp_path)])
        transcript = tmp_path / "transcripts.jsonl"
        assert main(["replay", str(transcript), "--line", "1"]) == 0
        assert "exact match" in capsys.readouterr().out
        assert main(["replay", str(transcript), "--line", "9999"]) == 2
        lines = transcript.read_text().splitlines()
        d = json.loads(lines[0])
        d["outcome"]["rounds_used"] = 99
        tampered = tmp_path / "tampered.jsonl"
        tampered.write_text(json.dumps(d, sort_keys=True) + "\n")
        assert main(["replay", str(tampered)]) == 1

    def test_stats_summarizes(self, tmp_path, capsys):
        main(self.RUN_ARGS + ["--out", str(tmp_path)])
        rc = main(["stats", str(tmp_path / "results.csv")])
        assert rc == 0
        out = capsys.readouterr().out.splitlines()
        assert any(line.startswith("linear") for line in out)
        assert any(line.startswith("two-index") for line in out)

    def test_sweep_c(self, tmp_path, capsys):
        rc = main([
            "sweep-c", "--seed", "2", "--spreads", "6", "--loads-per-cell", "2",
            "--carriers", "tft", "--c-values", "2,4", "--out", str(tmp_path),
        ])
        assert rc == 0
        rows = list(csv.DictReader((tmp_path / "c_sweep.csv").open()))
        assert [r["c"] for r in rows] == ["2.0", "4.0"]
