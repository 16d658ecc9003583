"""
Benchmark orchestration: seeded circuit batches, a thread-backed asyncio
worker pool for routing, CSV reports and hyperparameter sweeps.
"""

import asyncio
import dataclasses
import itertools
import logging
import math
import time
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import aiofiles
import numpy as np
from tqdm import tqdm

from ..config import BenchConfig, apply_settings, read_settings_file, settable_keys
from ..utils.circuit_parser import QASM_SUFFIXES, load_circuit
from ..utils.errors import ConfigError, InputError, QRouteError, RoutingFailure
from ..utils.manifest_store import MANIFEST_FILENAME, ManifestStore
from .agent import train
from .architecture import Architecture, Placement, build_topology, random_placement
from .circuit import LogicalCircuit, cdo_cdr, decompose_swaps, ensure_valid, layer_density
from .generators import (
    LowerBound,
    gen_multi_layer,
    gen_random_circuit,
    gen_single_full_layer,
    layer_lower_bound,
    training_circuits,
)
from .qvalue_model import QNetwork, load_model, save_model
from .router import greedy_route, random_policy_route, route

logger = logging.getLogger(__name__)

REPORT_HEADER = "router,family,arch,circuit_id,batch,orig_depth,routed_depth,cdo,cdr,swaps,status,seconds"
SUMMARY_HEADER = (
    "router,batch,circuits,failures,mean_cdo,std_cdo,mean_cdr,std_cdr,mean_swaps,std_swaps,mean_density"
)

ROUTER_GREEDY = "greedy"
ROUTER_RANDOM = "random_policy"
DQN_PREFIX = "dqn:"

STATUS_OK = "ok"
STATUS_FAILED = "failed"

# Circuit files picked up by family=files
CIRCUIT_SUFFIXES = QASM_SUFFIXES | {".txt", ".gates"}


@dataclass(frozen=True)
class RouterSpec:
    label: str
    kind: str
    model: QNetwork | None = None


@dataclass(frozen=True)
class BenchCase:
    circuit_id: int
    batch: int
    circuit: LogicalCircuit
    placement: Placement
    route_seed: np.random.SeedSequence


@dataclass(frozen=True)
class ReportRow:
    router: str
    family: str
    arch: str
    circuit_id: int
    batch: int
    orig_depth: int
    routed_depth: int | None
    cdo: int | None
    cdr: Fraction | None
    swaps: int | None
    status: str
    seconds: float | None
    density: float

    def csv_row(self) -> str:
        def blank(value) -> str:
            return "" if value is None else str(value)

        return ",".join(
            [
                self.router,
                self.family,
                self.arch,
                str(self.circuit_id),
                str(self.batch),
                str(self.orig_depth),
                blank(self.routed_depth),
                blank(self.cdo),
                "" if self.cdr is None else f"{float(self.cdr):.6f}",
                blank(self.swaps),
                self.status,
                "" if self.seconds is None else f"{self.seconds:.4f}",
            ]
        )


@dataclass(frozen=True)
class SummaryRow:
    router: str
    batch: str
    circuits: int
    failures: int
    mean_cdo: float
    std_cdo: float
    mean_cdr: float
    std_cdr: float
    mean_swaps: float
    std_swaps: float
    mean_density: float

    def csv_row(self) -> str:
        stats = (
            self.mean_cdo,
            self.std_cdo,
            self.mean_cdr,
            self.std_cdr,
            self.mean_swaps,
            self.std_swaps,
            self.mean_density,
        )
        return ",".join(
            [self.router, self.batch, str(self.circuits), str(self.failures)]
            + [f"{value:.6f}" for value in stats]
        )


@dataclass(frozen=True)
class BenchSummary:
    rows: tuple[SummaryRow, ...]

    def overall(self, router: str) -> SummaryRow:
        for row in self.rows:
            if row.router == router and row.batch == "all":
                return row
        raise KeyError(router)

    def to_csv(self) -> str:
        return "\n".join([SUMMARY_HEADER, *(r.csv_row() for r in self.rows)]) + "\n"


@dataclass(frozen=True)
class BenchReport:
    rows: tuple[ReportRow, ...]
    summary: BenchSummary
    lower_bound: LowerBound | None = None

    def rows_for(self, router: str) -> list[ReportRow]:
        return [row for row in self.rows if row.router == router]

    def to_csv(self) -> str:
        return "\n".join([REPORT_HEADER, *(r.csv_row() for r in self.rows)]) + "\n"


def parse_router(label: str, arch: Architecture) -> RouterSpec:
    """
    Resolve a router name: greedy, random_policy or dqn:PATH.

    Raises:
        ConfigError: For unknown names or a model built for another feature length
    """
    if label in (ROUTER_GREEDY, ROUTER_RANDOM):
        return RouterSpec(label, label)
    if label.startswith(DQN_PREFIX):
        path = label[len(DQN_PREFIX):]
        model = load_model(path)
        if model.input_dim != 2 * arch.feature_length:
            raise ConfigError(
                f"Model {path} expects {model.input_dim} features but {arch.arch_id} "
                f"produces {2 * arch.feature_length}"
            )
        if model.arch_id and model.arch_id != arch.arch_id:
            logger.warning(f"Model {path} was trained on {model.arch_id}, benchmarking on {arch.arch_id}")
        return RouterSpec(label, "dqn", model)
    raise ConfigError(f"Unknown router {label!r}. Expected greedy, random_policy or dqn:PATH.")


def load_circuit_dir(directory: str | Path, max_depth: int, n_nodes: int) -> list[LogicalCircuit]:
    """
    Load every circuit file in a directory (sorted by name).

    Files that fail to parse, are empty, need more qubits than n_nodes or
    reach max_depth are skipped.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise InputError(f"Circuit directory not found: {directory}")

    circuits = []
    too_deep = 0
    for path in sorted(p for p in directory.iterdir() if p.suffix.lower() in CIRCUIT_SUFFIXES):
        try:
            circuit = load_circuit(path)
        except InputError as e:
            logger.warning(f"Skipping {path.name}: {e}")
            continue
        if not circuit.gates:
            logger.warning(f"Skipping {path.name}: no two-qubit gates")
            continue
        if circuit.n_qubits > n_nodes:
            logger.warning(f"Skipping {path.name}: {circuit.n_qubits} qubits exceed {n_nodes} nodes")
            continue
        if circuit.depth >= max_depth:
            too_deep += 1
            continue
        circuits.append(circuit)

    logger.info(
        f"Loaded {len(circuits)} circuits from {directory} ({too_deep} filtered at depth >= {max_depth})"
    )
    return circuits


def _generate_circuit(config: BenchConfig, rng: np.random.Generator) -> LogicalCircuit:
    if config.family == "single_full":
        return gen_single_full_layer(config.n_qubits, rng)
    if config.family == "multi":
        return gen_multi_layer(config.n_qubits, config.n_layers, config.density, rng)
    return gen_random_circuit(config.n_qubits, config.n_gates, rng)


def generate_cases(config: BenchConfig, arch: Architecture) -> list[BenchCase]:
    """
    Build the benchmark corpus with its placements.

    Every (batch, circuit) pair owns a child of SeedSequence(seed): one stream
    draws the circuit and placement, a second is handed to the router.
    """
    root = np.random.SeedSequence(config.seed)
    cases: list[BenchCase] = []

    if config.family == "files":
        circuits = load_circuit_dir(config.circuit_dir, config.max_depth, arch.n_nodes)
        for circuit_id, (circuit, seq) in enumerate(zip(circuits, root.spawn(len(circuits)))):
            setup_seq, route_seq = seq.spawn(2)
            rng = np.random.default_rng(setup_seq)
            cases.append(
                BenchCase(
                    circuit_id=circuit_id,
                    batch=circuit_id // config.circuits_per_batch,
                    circuit=circuit,
                    placement=random_placement(arch, circuit.n_qubits, rng),
                    route_seed=route_seq,
                )
            )
        return cases

    for batch, batch_seq in enumerate(root.spawn(config.batches)):
        for index, seq in enumerate(batch_seq.spawn(config.circuits_per_batch)):
            setup_seq, route_seq = seq.spawn(2)
            rng = np.random.default_rng(setup_seq)
            circuit = _generate_circuit(config, rng)
            cases.append(
                BenchCase(
                    circuit_id=batch * config.circuits_per_batch + index,
                    batch=batch,
                    circuit=circuit,
                    placement=random_placement(arch, circuit.n_qubits, rng),
                    route_seed=route_seq,
                )
            )
    return cases


def route_case(
    router: RouterSpec, case: BenchCase, arch: Architecture, config: BenchConfig
) -> ReportRow:
    """Route one case and measure it; a step-cap abort becomes a failed row."""
    rng = np.random.default_rng(case.route_seed)
    circuit = case.circuit
    orig_depth = circuit.depth
    base = dict(
        router=router.label,
        family=config.family,
        arch=arch.arch_id,
        circuit_id=case.circuit_id,
        batch=case.batch,
        orig_depth=orig_depth,
        density=layer_density(circuit),
    )

    start = time.perf_counter()
    try:
        if router.kind == ROUTER_GREEDY:
            routed = greedy_route(circuit, arch, case.placement)
        elif router.kind == ROUTER_RANDOM:
            routed = random_policy_route(circuit, arch, case.placement, rng, config.agent)
        else:
            routed = route(circuit, arch, case.placement, router.model, config.agent, rng)
    except RoutingFailure as e:
        logger.warning(f"{router.label} failed on circuit {case.circuit_id}: {e}")
        return ReportRow(
            **base,
            routed_depth=None,
            cdo=None,
            cdr=None,
            swaps=None,
            status=STATUS_FAILED,
            seconds=None,
        )
    elapsed = time.perf_counter() - start

    swaps = routed.swap_count
    if config.decompose_swaps:
        routed = decompose_swaps(routed)
        ensure_valid(circuit, routed, arch)

    metrics = cdo_cdr(orig_depth, routed.depth)
    return ReportRow(
        **base,
        routed_depth=metrics.routed_depth,
        cdo=metrics.cdo,
        cdr=metrics.cdr,
        swaps=swaps,
        status=STATUS_OK,
        seconds=elapsed if config.record_timing else None,
    )


def _stats(values: Sequence[float]) -> tuple[float, float]:
    if not values:
        return math.nan, math.nan
    array = np.asarray(values, dtype=np.float64)
    return float(array.mean()), float(array.std())


def _summary_row(router: str, batch: str, rows: Sequence[ReportRow]) -> SummaryRow:
    ok = [r for r in rows if r.status == STATUS_OK]
    mean_cdo, std_cdo = _stats([r.cdo for r in ok])
    mean_cdr, std_cdr = _stats([float(r.cdr) for r in ok])
    mean_swaps, std_swaps = _stats([r.swaps for r in ok])
    mean_density, _ = _stats([r.density for r in rows])
    return SummaryRow(
        router=router,
        batch=batch,
        circuits=len(rows),
        failures=len(rows) - len(ok),
        mean_cdo=mean_cdo,
        std_cdo=std_cdo,
        mean_cdr=mean_cdr,
        std_cdr=std_cdr,
        mean_swaps=mean_swaps,
        std_swaps=std_swaps,
        mean_density=mean_density,
    )


def summarize(rows: Sequence[ReportRow]) -> BenchSummary:
    """Mean and population stddev per router and batch, then per router overall."""
    summary = []
    for router in sorted({r.router for r in rows}):
        router_rows = [r for r in rows if r.router == router]
        for batch in sorted({r.batch for r in router_rows}):
            summary.append(
                _summary_row(router, str(batch), [r for r in router_rows if r.batch == batch])
            )
        summary.append(_summary_row(router, "all", router_rows))
    return BenchSummary(tuple(summary))


def _lower_bound_density(config: BenchConfig, cases: Sequence[BenchCase]) -> float:
    if config.family == "single_full":
        return 1.0
    if config.family == "multi":
        return config.density
    densities = [layer_density(case.circuit) for case in cases]
    return min(1.0, float(np.mean(densities))) if densities else 0.0


async def _route_all(
    routers: Sequence[RouterSpec],
    cases: Sequence[BenchCase],
    arch: Architecture,
    config: BenchConfig,
    workers: int,
    show_progress: bool,
) -> list[ReportRow]:
    semaphore = asyncio.Semaphore(workers)
    progress = tqdm(total=len(routers) * len(cases), desc="bench", disable=not show_progress)

    async def run_job(router: RouterSpec, case: BenchCase) -> ReportRow:
        async with semaphore:
            row = await asyncio.to_thread(route_case, router, case, arch, config)
        progress.update(1)
        return row

    try:
        rows = await asyncio.gather(*(run_job(r, c) for r in routers for c in cases))
    finally:
        progress.close()
    return sorted(rows, key=lambda row: (row.router, row.circuit_id))


async def write_report(report: BenchReport, out_path: str | Path) -> Path:
    """Write the per-circuit CSV and <out>.summary.csv; returns the summary path."""
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    summary_path = summary_path_for(out_path)

    async with aiofiles.open(out_path, "w", encoding="utf-8", newline="") as f:
        await f.write(report.to_csv())
    async with aiofiles.open(summary_path, "w", encoding="utf-8", newline="") as f:
        await f.write(report.summary.to_csv())

    logger.info(f"Report written to {out_path} ({len(report.rows)} rows), summary to {summary_path}")
    return summary_path


def summary_path_for(out_path: str | Path) -> Path:
    """report.csv -> report.summary.csv; other names get the suffix appended."""
    out_path = Path(out_path)
    if out_path.suffix == ".csv":
        return out_path.with_suffix(".summary.csv")
    return out_path.with_name(out_path.name + ".summary.csv")


async def run_benchmark_async(
    config: BenchConfig,
    out_path: str | Path | None = None,
    workers: int | None = None,
    show_progress: bool = False,
    lower_bound_samples: int = 0,
) -> BenchReport:
    """
    Route every benchmark case with every configured router.

    Args:
        config: Benchmark configuration
        out_path: Where to write the CSV report (nothing is written if None)
        workers: Concurrent routing jobs (defaults to config.workers)
        show_progress: Show a tqdm bar
        lower_bound_samples: If positive, also estimate the layer-sequential CDR floor

    Returns:
        BenchReport with rows sorted by (router, circuit_id)

    Raises:
        ConfigError: For unknown routers or mismatched models
    """
    arch = build_topology(config.arch)
    routers = [parse_router(label, arch) for label in config.routers]
    labels = [r.label for r in routers]
    if len(set(labels)) != len(labels):
        raise ConfigError(f"Duplicate routers in {labels}")

    cases = generate_cases(config, arch)
    logger.info(
        f"Benchmark: {len(cases)} {config.family} circuits on {arch.arch_id}, "
        f"routers {', '.join(labels)}"
    )

    started = time.perf_counter()
    rows = await _route_all(routers, cases, arch, config, workers or config.workers, show_progress)
    summary = summarize(rows)

    lower_bound = None
    if lower_bound_samples > 0:
        density = _lower_bound_density(config, cases)
        if density > 0:
            lower_bound = layer_lower_bound(
                arch, density, lower_bound_samples, np.random.default_rng(config.seed)
            )
            logger.info(f"Layer-sequential lower bound: {lower_bound.format()}")

    for label in labels:
        overall = summary.overall(label)
        logger.info(
            f"{label}: mean CDR {overall.mean_cdr:.4f} (std {overall.std_cdr:.4f}), "
            f"mean swaps {overall.mean_swaps:.2f}, {overall.failures} failures"
        )
    logger.info(f"Benchmark finished in {time.perf_counter() - started:.1f}s")

    report = BenchReport(tuple(rows), summary, lower_bound)
    if out_path is not None:
        await write_report(report, out_path)
    return report


def run_benchmark(
    config: BenchConfig,
    out_path: str | Path | None = None,
    workers: int | None = None,
    show_progress: bool = False,
    lower_bound_samples: int = 0,
) -> BenchReport:
    return asyncio.run(
        run_benchmark_async(config, out_path, workers, show_progress, lower_bound_samples)
    )


@dataclass(frozen=True)
class SweepEntry:
    index: int
    settings: dict[str, str]
    seed: int
    model_path: str | None
    validation_cdr: float
    failures: int
    status: str
    error: str | None = None

    def as_record(self) -> dict:
        return {
            "index": self.index,
            "settings": dict(self.settings),
            "seed": self.seed,
            "model": self.model_path,
            "validation_cdr": None if math.isnan(self.validation_cdr) else self.validation_cdr,
            "failures": self.failures,
            "status": self.status,
            "error": self.error,
        }


def read_sweep_grid(path: str | Path) -> dict[str, list[str]]:
    """
    Read a sweep grid: a key=value file whose values list alternatives separated by "|".

    Raises:
        ConfigError: If the file is malformed or a key has no alternatives
    """
    grid = {}
    for key, value in read_settings_file(path).items():
        options = [option.strip() for option in value.split("|") if option.strip()]
        if not options:
            raise ConfigError(f"Sweep key {key!r} has no values")
        grid[key] = options
    return grid


def expand_grid(grid: dict[str, list[str]]) -> list[dict[str, str]]:
    """Cartesian product of the grid, keys in file order, last key varying fastest."""
    keys = list(grid)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]


def entry_seed(base_seed: int, index: int) -> int:
    return int(np.random.SeedSequence([base_seed, index]).generate_state(1)[0])


def _rank_key(entry: SweepEntry) -> tuple:
    failed = entry.status != STATUS_OK or math.isnan(entry.validation_cdr)
    return (failed, entry.validation_cdr if not failed else math.inf, entry.index)


def benchmark_keys() -> frozenset[str]:
    """Grid keys that shape the validation corpus rather than the training run."""
    return frozenset(key for key, path in settable_keys(BenchConfig).items() if path[0] != "agent")


def split_grid(grid: dict[str, list[str]]) -> tuple[dict[str, str], dict[str, list[str]]]:
    """
    Separate a sweep grid into fixed benchmark settings and varying training settings.

    Raises:
        ConfigError: For unknown keys or a benchmark key with more than one alternative
    """
    unknown = sorted(set(grid) - set(settable_keys(BenchConfig)))
    if unknown:
        raise ConfigError(f"Unknown sweep keys: {', '.join(unknown)}")

    bench_keys = benchmark_keys()
    fixed, varying = {}, {}
    for key, options in grid.items():
        if key not in bench_keys:
            varying[key] = options
        elif len(options) > 1:
            raise ConfigError(
                f"Sweep key {key!r} shapes the shared validation set and cannot vary: {options}"
            )
        else:
            fixed[key] = options[0]
    return fixed, varying


def _run_sweep_entry(
    index: int,
    settings: dict[str, str],
    bench: BenchConfig,
    arch: Architecture,
    validation: Sequence[BenchCase],
    out_dir: Path,
    show_progress: bool,
) -> SweepEntry:
    bench = dataclasses.replace(bench, agent=apply_settings(bench.agent, settings))
    seed = entry_seed(bench.seed, index)

    rng = np.random.default_rng(seed)
    circuits = training_circuits(bench.agent, bench.n_qubits, rng)
    model, log = train(arch, circuits, bench.agent, rng, show_progress=show_progress)

    model_path = out_dir / f"model_{index:03d}.qrm"
    save_model(model, model_path)
    model_path.with_name(model_path.name + ".log.csv").write_text(log.to_csv(), encoding="utf-8")

    router = RouterSpec(f"{DQN_PREFIX}{model_path}", "dqn", model)
    rows = [route_case(router, case, arch, bench) for case in validation]
    ok = [float(r.cdr) for r in rows if r.status == STATUS_OK]
    return SweepEntry(
        index=index,
        settings=settings,
        seed=seed,
        model_path=str(model_path),
        validation_cdr=float(np.mean(ok)) if ok else math.nan,
        failures=len(rows) - len(ok),
        status=STATUS_OK,
    )


def sweep(grid_path: str | Path, out_dir: str | Path, show_progress: bool = False) -> list[SweepEntry]:
    """
    Train one model per grid point and rank them by validation CDR.

    Benchmark keys (arch, family, n_qubits, seed, ...) take a single value and
    fix one validation corpus shared by every point; training keys may vary.
    Each point trains on its own seeded circuits. A point that fails is
    recorded and the sweep moves on. Models, training logs and manifest.json
    go to out_dir.

    Returns:
        Entries best first (failed entries last)

    Raises:
        ConfigError: If the grid is empty or varies a benchmark key
    """
    grid = read_sweep_grid(grid_path)
    if not grid:
        raise ConfigError(f"Sweep grid {grid_path} is empty")
    fixed, varying = split_grid(grid)
    points = expand_grid(varying)

    bench = apply_settings(BenchConfig(), fixed)
    arch = build_topology(bench.arch)
    validation = generate_cases(bench, arch)

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = ManifestStore(out_dir / MANIFEST_FILENAME)
    manifest.set_meta(
        grid=str(grid_path), points=len(points), benchmark=fixed, validation_circuits=len(validation)
    )
    logger.info(
        f"Sweep over {len(points)} configurations from {grid_path}, "
        f"validating on {len(validation)} {bench.family} circuits on {arch.arch_id}"
    )

    entries = []
    for index, settings in enumerate(points):
        try:
            entry = _run_sweep_entry(index, settings, bench, arch, validation, out_dir, show_progress)
        except QRouteError as e:
            logger.warning(f"Sweep entry {index} ({settings}) failed: {e}")
            entry = SweepEntry(
                index=index,
                settings=settings,
                seed=entry_seed(bench.seed, index),
                model_path=None,
                validation_cdr=math.nan,
                failures=0,
                status=STATUS_FAILED,
                error=str(e),
            )
        manifest.put(f"{index:03d}", entry.as_record())
        entries.append(entry)

    ranked = sorted(entries, key=_rank_key)
    manifest.set_meta(ranking=[f"{e.index:03d}" for e in ranked])
    for rank, entry in enumerate(ranked, start=1):
        manifest.update(f"{entry.index:03d}", rank=rank)
        logger.info(
            f"#{rank}: entry {entry.index} cdr={entry.validation_cdr:.4f} "
            f"status={entry.status} settings={entry.settings}"
        )
    return ranked
