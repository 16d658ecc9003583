import math
from fractions import Fraction

import numpy as np
import pytest

from src.config import AgentConfig, AnnealSchedule, BenchConfig
from src.services.agent import train
from src.services.architecture import grid
from src.services.benchmark import (
    REPORT_HEADER,
    SUMMARY_HEADER,
    ReportRow,
    RouterSpec,
    entry_seed,
    expand_grid,
    generate_cases,
    load_circuit_dir,
    parse_router,
    read_sweep_grid,
    route_case,
    run_benchmark,
    split_grid,
    summarize,
    summary_path_for,
    sweep,
)
from src.services.generators import training_circuits
from src.services.qvalue_model import QNetwork, save_model
from src.utils.errors import ConfigError, InputError
from src.utils.manifest_store import ManifestStore

QUICK_AGENT = AgentConfig(anneal=AnnealSchedule(max_iters=20))


def small_bench(**overrides):
    settings = dict(
        arch="grid:2x2",
        family="random",
        n_qubits=4,
        n_gates=6,
        batches=2,
        circuits_per_batch=3,
        routers=("greedy", "random_policy"),
        workers=2,
        agent=QUICK_AGENT,
    )
    settings.update(overrides)
    return BenchConfig(**settings)


def row(router, batch, status="ok", cdr=Fraction(3, 2), cdo=1, swaps=2, density=0.5):
    ok = status == "ok"
    return ReportRow(
        router=router,
        family="random",
        arch="grid:2x2",
        circuit_id=0,
        batch=batch,
        orig_depth=2,
        routed_depth=3 if ok else None,
        cdo=cdo if ok else None,
        cdr=cdr if ok else None,
        swaps=swaps if ok else None,
        status=status,
        seconds=None,
        density=density,
    )


class TestCases:
    def test_counts_and_ids(self):
        config = small_bench()
        cases = generate_cases(config, grid(2, 2))
        assert [c.circuit_id for c in cases] == list(range(6))
        assert [c.batch for c in cases] == [0, 0, 0, 1, 1, 1]

    def test_seeded(self):
        config = small_bench()
        first = generate_cases(config, grid(2, 2))
        second = generate_cases(config, grid(2, 2))
        assert [(c.circuit, c.placement) for c in first] == [(c.circuit, c.placement) for c in second]

    def test_seed_changes_corpus(self):
        first = generate_cases(small_bench(seed=1), grid(2, 2))
        second = generate_cases(small_bench(seed=2), grid(2, 2))
        assert [c.circuit for c in first] != [c.circuit for c in second]

    def test_families(self):
        arch = grid(2, 2)
        single = generate_cases(small_bench(family="single_full"), arch)
        assert all(c.circuit.depth == 1 and len(c.circuit) == 2 for c in single)
        multi = generate_cases(small_bench(family="multi", n_layers=3), arch)
        assert all(len(c.circuit) == 6 for c in multi)


class TestCircuitDirectory:
    def test_filters(self, tmp_path):
        (tmp_path / "a.txt").write_text("qubits 4\n0 1\n2 3\n", encoding="utf-8")
        (tmp_path / "b.qasm").write_text("qreg q[3];\ncx q[0],q[2];\ncx q[1],q[2];\n", encoding="utf-8")
        (tmp_path / "deep.txt").write_text("0 1\n0 1\n0 1\n0 1\n", encoding="utf-8")
        (tmp_path / "wide.txt").write_text("0 7\n", encoding="utf-8")
        (tmp_path / "empty.qasm").write_text("qreg q[2];\nh q[0];\n", encoding="utf-8")
        (tmp_path / "broken.txt").write_text("0 x\n", encoding="utf-8")
        (tmp_path / "notes.md").write_text("0 1\n", encoding="utf-8")

        circuits = load_circuit_dir(tmp_path, max_depth=3, n_nodes=4)
        assert [c.pairs for c in circuits] == [[(0, 1), (2, 3)], [(0, 2), (1, 2)]]

    def test_missing_directory(self, tmp_path):
        with pytest.raises(InputError):
            load_circuit_dir(tmp_path / "absent", max_depth=10, n_nodes=4)

    def test_undecodable_file_skipped(self, tmp_path):
        (tmp_path / "a_good.txt").write_text("qubits 4\n0 1\n", encoding="utf-8")
        (tmp_path / "b_bad.txt").write_bytes(b"\xff\xfe\x00 0 1\n")
        config = small_bench(family="files", circuit_dir=str(tmp_path), routers=("greedy",))
        report = run_benchmark(config)
        assert len(report.rows) == 1
        assert report.rows[0].status == "ok"

    def test_files_family_batches(self, tmp_path):
        for i in range(5):
            (tmp_path / f"c{i}.txt").write_text(f"qubits 4\n0 {i % 3 + 1}\n", encoding="utf-8")
        config = small_bench(family="files", circuit_dir=str(tmp_path), circuits_per_batch=2)
        cases = generate_cases(config, grid(2, 2))
        assert [c.batch for c in cases] == [0, 0, 1, 1, 2]


class TestRouters:
    def test_builtin(self):
        assert parse_router("greedy", grid(2, 2)) == RouterSpec("greedy", "greedy")

    def test_unknown(self):
        with pytest.raises(ConfigError):
            parse_router("sabre", grid(2, 2))

    def test_model_dimension_checked(self, tmp_path):
        path = tmp_path / "line.qrm"
        save_model(QNetwork([14, 4, 1]), path)
        with pytest.raises(ConfigError):
            parse_router(f"dqn:{path}", grid(2, 2))

    def test_model_loaded(self, tmp_path):
        arch = grid(2, 2)
        path = tmp_path / "m.qrm"
        save_model(QNetwork([2 * arch.feature_length, 4, 1], arch_id=arch.arch_id), path)
        spec = parse_router(f"dqn:{path}", arch)
        assert spec.kind == "dqn"
        assert spec.model.input_dim == 2 * arch.feature_length


class TestRouteCase:
    def test_greedy_row(self):
        config = small_bench()
        arch = grid(2, 2)
        case = generate_cases(config, arch)[0]
        result = route_case(RouterSpec("greedy", "greedy"), case, arch, config)
        assert result.status == "ok"
        assert result.cdo == result.routed_depth - result.orig_depth
        assert result.cdr == Fraction(result.routed_depth, result.orig_depth)
        assert result.seconds is None

    def test_decomposed_swaps_keep_counts(self):
        arch = grid(2, 2)
        plain = small_bench(family="random", n_gates=10)
        case = next(
            c
            for c in generate_cases(plain, arch)
            if route_case(RouterSpec("greedy", "greedy"), c, arch, plain).swaps
        )
        before = route_case(RouterSpec("greedy", "greedy"), case, arch, plain)
        after = route_case(RouterSpec("greedy", "greedy"), case, arch, small_bench(n_gates=10, decompose_swaps=True))
        assert after.swaps == before.swaps
        assert after.routed_depth >= before.routed_depth

    def test_timing(self):
        config = small_bench(record_timing=True)
        arch = grid(2, 2)
        result = route_case(RouterSpec("greedy", "greedy"), generate_cases(config, arch)[0], arch, config)
        assert result.seconds is not None and result.seconds >= 0
        assert result.csv_row().rsplit(",", 1)[1] != ""

    def test_csv_row(self):
        assert row("greedy", 0).csv_row() == "greedy,random,grid:2x2,0,0,2,3,1,1.500000,2,ok,"
        assert row("greedy", 0, status="failed").csv_row() == "greedy,random,grid:2x2,0,0,2,,,,,failed,"


class TestSummary:
    def test_population_statistics(self):
        rows = [
            row("greedy", 0, cdr=Fraction(1), cdo=0, swaps=0),
            row("greedy", 0, cdr=Fraction(2), cdo=2, swaps=4),
            row("greedy", 1, status="failed", density=1.0),
        ]
        summary = summarize(rows)
        assert [(r.router, r.batch) for r in summary.rows] == [("greedy", "0"), ("greedy", "1"), ("greedy", "all")]

        first = summary.rows[0]
        assert first.mean_cdr == 1.5
        assert first.std_cdr == 0.5
        assert first.mean_swaps == 2.0

        overall = summary.overall("greedy")
        assert overall.circuits == 3
        assert overall.failures == 1
        assert overall.mean_density == pytest.approx(2.0 / 3.0)

    def test_all_failed_batch(self):
        summary = summarize([row("random_policy", 0, status="failed")])
        assert math.isnan(summary.overall("random_policy").mean_cdr)

    def test_missing_router(self):
        with pytest.raises(KeyError):
            summarize([row("greedy", 0)]).overall("dqn:x")

    def test_summary_path(self, tmp_path):
        assert summary_path_for(tmp_path / "report.csv") == tmp_path / "report.summary.csv"
        assert summary_path_for(tmp_path / "report") == tmp_path / "report.summary.csv"


class TestRunBenchmark:
    def test_rows_per_router(self):
        report = run_benchmark(small_bench())
        assert len(report.rows) == 12
        assert len(report.rows_for("greedy")) == 6
        assert [r.circuit_id for r in report.rows_for("random_policy")] == list(range(6))

    def test_reproducible_report(self, tmp_path):
        config = small_bench()
        run_benchmark(config, out_path=tmp_path / "a.csv", workers=1)
        run_benchmark(config, out_path=tmp_path / "b.csv", workers=3)
        a = (tmp_path / "a.csv").read_text(encoding="utf-8")
        assert a == (tmp_path / "b.csv").read_text(encoding="utf-8")
        assert a.splitlines()[0] == REPORT_HEADER
        assert (tmp_path / "a.summary.csv").read_text(encoding="utf-8") == (
            tmp_path / "b.summary.csv"
        ).read_text(encoding="utf-8")

    def test_summary_file(self, tmp_path):
        run_benchmark(small_bench(routers=("greedy",)), out_path=tmp_path / "out" / "r.csv")
        lines = (tmp_path / "out" / "r.summary.csv").read_text(encoding="utf-8").splitlines()
        assert lines[0] == SUMMARY_HEADER
        assert [line.split(",")[1] for line in lines[1:]] == ["0", "1", "all"]

    def test_duplicate_routers(self):
        with pytest.raises(ConfigError):
            run_benchmark(small_bench(routers=("greedy", "greedy")))

    def test_lower_bound(self):
        report = run_benchmark(small_bench(family="single_full", routers=("greedy",)), lower_bound_samples=10)
        assert report.lower_bound is not None
        assert report.lower_bound.density == 1.0
        assert report.lower_bound.samples == 10

    def test_greedy_on_complete_graph(self):
        report = run_benchmark(small_bench(arch="complete:4", routers=("greedy",)))
        assert all(r.cdr == 1 and r.swaps == 0 for r in report.rows)


class TestSweep:
    def test_grid_parsing(self, tmp_path):
        path = tmp_path / "grid.cfg"
        path.write_text("gamma = 0.9 | 0.5\nbatch_size=4\n", encoding="utf-8")
        grid_settings = read_sweep_grid(path)
        assert grid_settings == {"gamma": ["0.9", "0.5"], "batch_size": ["4"]}
        assert expand_grid(grid_settings) == [
            {"gamma": "0.9", "batch_size": "4"},
            {"gamma": "0.5", "batch_size": "4"},
        ]

    def test_empty_alternatives(self, tmp_path):
        path = tmp_path / "grid.cfg"
        path.write_text("gamma = |\n", encoding="utf-8")
        with pytest.raises(ConfigError):
            read_sweep_grid(path)

    def test_entry_seeds_differ(self):
        assert entry_seed(0, 0) != entry_seed(0, 1)
        assert entry_seed(5, 2) == entry_seed(5, 2)

    def test_sweep_ranks_and_records(self, tmp_path):
        grid_path = tmp_path / "grid.cfg"
        grid_path.write_text(
            "\n".join(
                [
                    "arch = grid:2x2",
                    "n_qubits = 4",
                    "n_gates = 4",
                    "batches = 1",
                    "circuits_per_batch = 2",
                    "gamma = 0.9 | 0",
                    "episodes = 3",
                    "batch_size = 4",
                    "circuits_per_qubit = 1",
                    "training_gates = 4",
                    "max_iters = 10",
                ]
            )
            + "\n",
            encoding="utf-8",
        )
        out_dir = tmp_path / "runs"
        ranked = sweep(grid_path, out_dir)

        assert [e.index for e in ranked] == [0, 1]
        assert ranked[1].status == "failed"
        assert ranked[1].model_path is None
        assert (out_dir / "model_000.qrm").exists()
        assert (out_dir / "model_000.qrm.log.csv").exists()

        manifest = ManifestStore(out_dir / "manifest.json")
        assert set(manifest.get_all()) == {"000", "001"}
        assert manifest.get("000")["settings"]["gamma"] == "0.9"
        assert "n_qubits" not in manifest.get("000")["settings"]
        assert manifest.get("000")["rank"] == 1
        assert manifest.get("001")["rank"] == 2
        assert manifest.get("001")["error"]
        assert manifest.get_meta("ranking") == ["000", "001"]
        assert manifest.get_meta("points") == 2
        assert manifest.get_meta("validation_circuits") == 2
        assert manifest.get_meta("benchmark")["n_qubits"] == "4"

    def test_points_share_validation_set(self, tmp_path, monkeypatch):
        grid_path = tmp_path / "grid.cfg"
        grid_path.write_text(
            "arch = grid:2x2\nn_qubits = 4\nn_gates = 4\nbatches = 1\ncircuits_per_batch = 3\n"
            "episodes = 1 | 2\nbatch_size = 4\ncircuits_per_qubit = 1\ntraining_gates = 4\nmax_iters = 5\n",
            encoding="utf-8",
        )
        seen = []

        def record_case(router, case, arch, config):
            seen.append((router.label, case.circuit, case.placement))
            return row(router.label, case.batch, cdr=Fraction(1), cdo=0, swaps=0)

        monkeypatch.setattr("src.services.benchmark.route_case", record_case)
        sweep(grid_path, tmp_path / "runs")

        first = [(c, p) for label, c, p in seen if label.endswith("model_000.qrm")]
        second = [(c, p) for label, c, p in seen if label.endswith("model_001.qrm")]
        assert len(first) == 3
        assert first == second

    @pytest.mark.parametrize("line", ["n_qubits = 4 | 8", "seed = 1 | 2", "arch = grid:2x2 | line:4"])
    def test_benchmark_keys_cannot_vary(self, tmp_path, line):
        grid_path = tmp_path / "grid.cfg"
        grid_path.write_text(f"{line}\ngamma = 0.9 | 0.5\n", encoding="utf-8")
        with pytest.raises(ConfigError):
            sweep(grid_path, tmp_path / "runs")
        assert not (tmp_path / "runs").exists()

    def test_unknown_grid_key(self):
        with pytest.raises(ConfigError):
            split_grid({"gama": ["0.9"]})

    def test_split_grid(self):
        fixed, varying = split_grid({"arch": ["line:4"], "gamma": ["0.9", "0.5"], "seed": ["3"]})
        assert fixed == {"arch": "line:4", "seed": "3"}
        assert varying == {"gamma": ["0.9", "0.5"]}


@pytest.mark.slow
def test_trained_model_on_grid4(tmp_path):
    agent = AgentConfig()
    rng = np.random.default_rng(1111)
    model, _ = train(grid(4, 4), training_circuits(agent, 16, rng), agent, rng)
    path = tmp_path / "grid4.qrm"
    save_model(model, path)

    trained = f"dqn:{path}"
    config = BenchConfig(
        arch="grid:4x4",
        family="random",
        n_qubits=16,
        n_gates=50,
        batches=5,
        circuits_per_batch=100,
        routers=("greedy", "random_policy", trained),
        agent=agent,
    )
    # every successful dqn and greedy row was checked by the transcript validator
    report = run_benchmark(config)
    summary = report.summary

    assert len(report.rows_for(trained)) == 500
    assert summary.overall("greedy").failures == 0
    assert summary.overall(trained).failures <= 25
    assert summary.overall(trained).mean_cdr < summary.overall("random_policy").mean_cdr
    assert summary.overall(trained).mean_cdr <= 1.10 * summary.overall("greedy").mean_cdr
