import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .config import config, load_agent_config, load_bench_config, setup_logging
from .services.agent import train
from .services.architecture import build_topology, parse_placement, random_placement
from .services.benchmark import run_benchmark, sweep
from .services.circuit import cdo_cdr, decompose_swaps, dump_routed
from .services.generators import gen_multi_layer, gen_random_circuit, gen_single_full_layer, training_circuits
from .services.qvalue_model import load_model, save_model
from .services.router import route
from .utils.circuit_parser import format_gatelist, load_circuit
from .utils.errors import InputError, QRouteError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1

RANDOM_PLACEMENT_PREFIX = "random:"


def _write_text(path: str | Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path


def cmd_gen(args: argparse.Namespace) -> int:
    rng = np.random.default_rng(args.seed)
    if args.family == "single_full":
        circuit = gen_single_full_layer(args.qubits, rng)
    elif args.family == "multi":
        circuit = gen_multi_layer(args.qubits, args.layers, args.density, rng)
    else:
        circuit = gen_random_circuit(args.qubits, args.gates, rng)

    path = _write_text(args.out, format_gatelist(circuit))
    logger.info(f"Wrote {len(circuit)} gates (depth {circuit.depth}) to {path}")
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    overrides = {}
    if args.episodes is not None:
        overrides["episodes"] = args.episodes
    agent_config = load_agent_config(args.config, **overrides)
    arch = build_topology(args.arch)

    rng = np.random.default_rng(args.seed)
    n_qubits = args.qubits or arch.n_nodes
    circuits = training_circuits(agent_config, n_qubits, rng)
    model, log = train(arch, circuits, agent_config, rng, show_progress=config.progress)

    save_model(model, args.out)
    log_path = _write_text(f"{args.out}.log.csv", log.to_csv())
    logger.info(f"Training log written to {log_path}")
    return EXIT_OK


def cmd_route(args: argparse.Namespace) -> int:
    arch = build_topology(args.arch)
    model = load_model(args.model)
    circuit = load_circuit(args.circuit)

    if args.placement.startswith(RANDOM_PLACEMENT_PREFIX):
        seed_text = args.placement[len(RANDOM_PLACEMENT_PREFIX):]
        try:
            seed = int(seed_text)
        except ValueError:
            raise InputError(f"Invalid placement seed: {seed_text!r}") from None
        placement = random_placement(arch, circuit.n_qubits, np.random.default_rng(seed))
    else:
        try:
            text = Path(args.placement).read_text(encoding="utf-8")
        except (OSError, UnicodeDecodeError) as e:
            raise InputError(f"Cannot read placement file {args.placement}: {e}") from e
        placement = parse_placement(text, arch.n_nodes)

    routed = route(circuit, arch, placement, model, load_agent_config(args.config))
    if args.decompose:
        routed = decompose_swaps(routed)

    path = _write_text(args.out, dump_routed(routed))
    if circuit.depth > 0:
        metrics = cdo_cdr(circuit.depth, routed.depth)
        logger.info(
            f"Routed depth {metrics.routed_depth} (original {metrics.original_depth}, "
            f"CDO {metrics.cdo}, CDR {float(metrics.cdr):.4f}), {routed.swap_count} swaps -> {path}"
        )
    else:
        logger.info(f"Empty circuit, wrote {path}")
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    bench_config = load_bench_config(args.config, workers=config.workers)
    report = run_benchmark(
        bench_config,
        out_path=args.out,
        workers=args.workers,
        show_progress=config.progress,
        lower_bound_samples=args.lower_bound_samples,
    )
    if report.lower_bound is not None:
        print(report.lower_bound.format())
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    ranked = sweep(args.grid, args.out or config.output_dir, show_progress=config.progress)
    for rank, entry in enumerate(ranked, start=1):
        print(f"{rank}\t{entry.index}\t{entry.status}\t{entry.validation_cdr:.4f}\t{entry.model_path or '-'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qroute", description="Learned qubit routing")
    subparsers = parser.add_subparsers(dest="command", required=True)

    gen = subparsers.add_parser("gen", help="Generate a random benchmark circuit")
    gen.add_argument("--family", choices=["single_full", "multi", "random"], required=True)
    gen.add_argument("--qubits", type=int, required=True)
    gen.add_argument("--layers", type=int, default=1, help="Layer count (multi)")
    gen.add_argument("--density", type=float, default=1.0, help="Layer density (multi)")
    gen.add_argument("--gates", type=int, default=50, help="Gate count (random)")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.set_defaults(handler=cmd_gen)

    tr = subparsers.add_parser("train", help="Train a pair-quality model for an architecture")
    tr.add_argument("--arch", required=True, help="grid:MxN, line:N, complete:N, tokyo, ... or edgelist:PATH")
    tr.add_argument("--config", default=None, help="key=value agent settings")
    tr.add_argument("--out", required=True, help="Model file to write")
    tr.add_argument("--episodes", type=int, default=None)
    tr.add_argument("--qubits", type=int, default=None, help="Training circuit width (default: all nodes)")
    tr.add_argument("--seed", type=int, default=0)
    tr.set_defaults(handler=cmd_train)

    rt = subparsers.add_parser("route", help="Route one circuit with a trained model")
    rt.add_argument("--arch", required=True)
    rt.add_argument("--model", required=True)
    rt.add_argument("--circuit", required=True, help="Gate list or QASM file")
    rt.add_argument("--placement", default="random:0", help="random:SEED or a file of qubit ids per node")
    rt.add_argument("--config", default=None, help="key=value agent settings (annealing, rewards)")
    rt.add_argument("--out", required=True)
    rt.add_argument("--decompose", action="store_true", help="Expand SWAPs into three CNOTs")
    rt.set_defaults(handler=cmd_route)

    bench = subparsers.add_parser("bench", help="Run a benchmark described by a config file")
    bench.add_argument("--config", required=True)
    bench.add_argument("--out", required=True, help="CSV report path")
    bench.add_argument("--workers", type=int, default=None)
    bench.add_argument("--lower-bound-samples", type=int, default=0)
    bench.set_defaults(handler=cmd_bench)

    sw = subparsers.add_parser("sweep", help="Train and rank models over a settings grid")
    sw.add_argument("--grid", required=True, help="key=value file, alternatives separated by |")
    sw.add_argument("--out", default=None, help="Output directory (default: QROUTE_OUTPUT_DIR)")
    sw.set_defaults(handler=cmd_sweep)

    return parser


def main(argv: list[str] | None = None) -> int:
    """Main entry point for the application."""
    setup_logging()
    args = build_parser().parse_args(argv)

    try:
        return args.handler(args)
    except QRouteError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_ERROR
    except KeyboardInterrupt:
        logger.info("Stopped by user")
        return EXIT_ERROR
    except Exception as e:
        logger.error(f"qroute crashed: {e}", exc_info=True)
        raise


if __name__ == "__main__":
    sys.exit(main())
