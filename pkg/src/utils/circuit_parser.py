import logging
import re
from pathlib import Path
from typing import Literal

from ..services.circuit import LogicalCircuit
from .errors import InputError, ParseError

logger = logging.getLogger(__name__)

CircuitFormat = Literal["gatelist", "qasm"]

# Suffixes recognised as the QASM subset
QASM_SUFFIXES = frozenset([".qasm", ".qasm2"])

QUBITS_HEADER_PATTERN = re.compile(r"^qubits\s+(\d+)$")
GATE_LINE_PATTERN = re.compile(r"^(\d+)\s+(\d+)$")

QREG_PATTERN = re.compile(r"^qreg\s+([A-Za-z_][\w]*)\s*\[\s*(\d+)\s*\]$")
CX_PATTERN = re.compile(
    r"^cx\s+([A-Za-z_][\w]*)\s*\[\s*(\d+)\s*\]\s*,\s*([A-Za-z_][\w]*)\s*\[\s*(\d+)\s*\]$"
)
STATEMENT_SPLIT_PATTERN = re.compile(r"([;{}])")


def parse_circuit(text: str, fmt: CircuitFormat = "gatelist") -> LogicalCircuit:
    """
    Parse circuit text into a LogicalCircuit.

    Supported formats:
    - gatelist: optional "qubits N" header, then one "i j" gate per line
    - qasm: "qreg name[N];" and "cx name[i],name[j];" statements, everything else skipped

    Raises:
        ParseError: On a malformed line (carries the line number)
        InputError: If a qubit index is outside the declared register
    """
    if fmt == "gatelist":
        return _parse_gatelist(text)
    if fmt == "qasm":
        return _parse_qasm(text)
    raise InputError(f"Unknown circuit format: {fmt!r}")


def _parse_gatelist(text: str) -> LogicalCircuit:
    declared: int | None = None
    pairs: list[tuple[int, int]] = []
    seen_gate = False

    # splitlines handles both LF and CRLF
    for line_number, raw in enumerate(text.splitlines(), start=1):
        content = raw.split("#", 1)[0].strip()
        if not content:
            continue

        header = QUBITS_HEADER_PATTERN.match(content)
        if header:
            if declared is not None or seen_gate:
                raise ParseError("'qubits N' header must come first and only once", line_number)
            declared = int(header.group(1))
            continue

        gate = GATE_LINE_PATTERN.match(content)
        if not gate:
            raise ParseError(f"expected two qubit indices, got {content!r}", line_number)
        q0, q1 = int(gate.group(1)), int(gate.group(2))
        if q0 == q1:
            raise ParseError(f"gate acts twice on qubit {q0}", line_number)
        if declared is not None and max(q0, q1) >= declared:
            raise InputError(
                f"line {line_number}: qubit {max(q0, q1)} exceeds declared size {declared}"
            )
        seen_gate = True
        pairs.append((q0, q1))

    return LogicalCircuit.from_pairs(pairs, n_qubits=declared)


def _parse_qasm(text: str) -> LogicalCircuit:
    register: str | None = None
    size = 0
    pairs: list[tuple[int, int]] = []

    # brace depth of the enclosing gate definition, 0 at top level
    body_depth = 0

    for line_number, raw in enumerate(text.splitlines(), start=1):
        content = raw.split("//", 1)[0].strip()
        if not content:
            continue

        for piece in STATEMENT_SPLIT_PATTERN.split(content):
            if piece == "{":
                body_depth += 1
                continue
            if piece == "}":
                if body_depth == 0:
                    raise ParseError("unbalanced '}'", line_number)
                body_depth -= 1
                continue
            statement = piece.strip()
            if not statement or statement == ";" or body_depth > 0:
                continue

            qreg = QREG_PATTERN.match(statement)
            if qreg:
                if register is not None:
                    raise ParseError("only one quantum register is supported", line_number)
                register, size = qreg.group(1), int(qreg.group(2))
                continue

            if statement.split(None, 1)[0] != "cx":
                # single-qubit gates, measurements, headers: irrelevant to routing
                continue
            cx = CX_PATTERN.match(statement)
            if not cx:
                raise ParseError(f"malformed cx statement {statement!r}", line_number)
            if register is None:
                raise ParseError("cx before any qreg declaration", line_number)

            reg0, i, reg1, j = cx.group(1), int(cx.group(2)), cx.group(3), int(cx.group(4))
            for reg in (reg0, reg1):
                if reg != register:
                    raise ParseError(f"unknown register {reg!r}", line_number)
            for idx in (i, j):
                if idx >= size:
                    raise InputError(
                        f"line {line_number}: qubit {register}[{idx}] exceeds register size {size}"
                    )
            if i == j:
                raise ParseError(f"cx acts twice on {register}[{i}]", line_number)
            pairs.append((i, j))

    return LogicalCircuit.from_pairs(pairs, n_qubits=size)


def detect_format(path: str | Path) -> CircuitFormat:
    return "qasm" if Path(path).suffix.lower() in QASM_SUFFIXES else "gatelist"


def load_circuit(path: str | Path, fmt: CircuitFormat | None = None) -> LogicalCircuit:
    """Read and parse a circuit file, picking the format from its suffix by default."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise InputError(f"Cannot read circuit file {path}: {e}") from e
    return parse_circuit(text, fmt or detect_format(path))


def format_gatelist(circuit: LogicalCircuit) -> str:
    lines = [f"qubits {circuit.n_qubits}"]
    lines.extend(f"{g.q0} {g.q1}" for g in circuit.gates)
    return "\n".join(lines) + "\n"
