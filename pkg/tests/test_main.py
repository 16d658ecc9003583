import pytest

from src.main import EXIT_ERROR, EXIT_OK, main
from src.services.architecture import grid
from src.services.qvalue_model import QNetwork, load_model, save_model
from src.utils.circuit_parser import load_circuit


@pytest.fixture
def model_path(tmp_path):
    arch = grid(2, 2)
    path = tmp_path / "grid.qrm"
    model = QNetwork([2 * arch.feature_length, 4, 1], arch_id=arch.arch_id)
    for w in model.weights:
        w[:] = 0.0
    save_model(model, path)
    return path


@pytest.fixture
def circuit_path(tmp_path):
    path = tmp_path / "circuit.txt"
    path.write_text("qubits 4\n0 3\n1 2\n0 1\n", encoding="utf-8")
    return path


def test_gen(tmp_path):
    out = tmp_path / "c" / "random.txt"
    code = main(["gen", "--family", "random", "--qubits", "5", "--gates", "7", "--seed", "3", "--out", str(out)])
    assert code == EXIT_OK
    circuit = load_circuit(out)
    assert circuit.n_qubits == 5
    assert len(circuit) == 7


def test_gen_invalid_arguments(tmp_path):
    code = main(["gen", "--family", "multi", "--qubits", "1", "--out", str(tmp_path / "x.txt")])
    assert code == EXIT_ERROR


def test_train(tmp_path):
    out = tmp_path / "m.qrm"
    code = main(["train", "--arch", "grid:2x2", "--episodes", "2", "--seed", "1", "--out", str(out)])
    assert code == EXIT_OK
    assert load_model(out).input_dim == 2 * grid(2, 2).feature_length
    assert (tmp_path / "m.qrm.log.csv").read_text(encoding="utf-8").count("\n") == 3


def test_route_with_random_placement(tmp_path, model_path, circuit_path):
    out = tmp_path / "routed.txt"
    code = main(
        [
            "route", "--arch", "grid:2x2", "--model", str(model_path),
            "--circuit", str(circuit_path), "--placement", "random:3", "--out", str(out),
        ]
    )
    assert code == EXIT_OK
    lines = out.read_text(encoding="utf-8").splitlines()
    assert sum(1 for line in lines if " CNOT " in line) == 3
    assert all(line.startswith("t=") for line in lines)


def test_route_with_placement_file(tmp_path, model_path, circuit_path):
    placement = tmp_path / "placement.txt"
    placement.write_text("3 2 1 0\n", encoding="utf-8")
    out = tmp_path / "routed.txt"
    code = main(
        [
            "route", "--arch", "grid:2x2", "--model", str(model_path), "--circuit", str(circuit_path),
            "--placement", str(placement), "--decompose", "--out", str(out),
        ]
    )
    assert code == EXIT_OK
    assert " SWAP " not in out.read_text(encoding="utf-8")


@pytest.mark.parametrize("placement", ["random:x", "0 1 2"])
def test_route_bad_placement(tmp_path, model_path, circuit_path, placement):
    if not placement.startswith("random:"):
        path = tmp_path / "placement.txt"
        path.write_text(placement, encoding="utf-8")
        placement = str(path)
    code = main(
        [
            "route", "--arch", "grid:2x2", "--model", str(model_path), "--circuit", str(circuit_path),
            "--placement", placement, "--out", str(tmp_path / "routed.txt"),
        ]
    )
    assert code == EXIT_ERROR


def test_route_model_for_other_architecture(tmp_path, model_path, circuit_path):
    code = main(
        [
            "route", "--arch", "line:6", "--model", str(model_path),
            "--circuit", str(circuit_path), "--out", str(tmp_path / "routed.txt"),
        ]
    )
    assert code == EXIT_ERROR


def test_route_missing_model(tmp_path, circuit_path):
    code = main(
        [
            "route", "--arch", "grid:2x2", "--model", str(tmp_path / "absent.qrm"),
            "--circuit", str(circuit_path), "--out", str(tmp_path / "routed.txt"),
        ]
    )
    assert code == EXIT_ERROR


def test_bench(tmp_path, capsys):
    config = tmp_path / "bench.cfg"
    config.write_text(
        "arch = line:4\nfamily = single_full\nn_qubits = 4\nbatches = 2\n"
        "circuits_per_batch = 2\nrouters = greedy\n",
        encoding="utf-8",
    )
    out = tmp_path / "report.csv"
    code = main(["bench", "--config", str(config), "--out", str(out), "--lower-bound-samples", "5"])
    assert code == EXIT_OK
    assert len(out.read_text(encoding="utf-8").splitlines()) == 5
    assert (tmp_path / "report.summary.csv").exists()
    assert capsys.readouterr().out.startswith("samples=5 ")


def test_bench_unknown_key(tmp_path):
    config = tmp_path / "bench.cfg"
    config.write_text("colour = blue\n", encoding="utf-8")
    assert main(["bench", "--config", str(config), "--out", str(tmp_path / "r.csv")]) == EXIT_ERROR


def test_command_required():
    with pytest.raises(SystemExit):
        main([])
