"""QASM text forms of a circuit.

Two dialects are read and written:

* ``dense``: one ``DenseMatrix(2,0,<32 reals>) q[a],q[b];`` statement per
  gate. The 16 complex entries are row-major under the gate convention of
  :mod:`statevec`, each written as ``re,im`` with 6 decimals.
* ``base``: plain OpenQASM 2.0 with ``u3`` and ``cx`` only, produced by a
  KAK decomposition of every gate (at most three ``cx`` per gate).

Statements appear in execution order: the first statement acts on ``|0...0>``
first. For a :class:`Circuit` ``[U_1, ..., U_M]`` that means ``U_M`` is
written first.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal

import numpy as np

from . import _kak
from .smallalg import nearest_unitary, unitarity_defect
from .statevec import Circuit, TwoQubitGate

HEADER_VERSION = "OPENQASM 2.0;"
HEADER_INCLUDE = 'include "qelib1.inc";'
DENSE_TOL = 1e-3
DENSE_DECIMALS = 6
ANGLE_DECIMALS = 12


class QasmError(ValueError):
    """Base class; ``line`` is the 1-based source line or ``None``."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class QasmParseError(QasmError):
    pass


class QasmValidationError(QasmError):
    pass


class UnsupportedDialectError(QasmError):
    pass


@dataclass(frozen=True)
class QasmDocument:
    dialect: str
    n_qubits: int
    statements: tuple[str, ...]
    header: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if self.dialect not in ("dense", "base"):
            raise ValueError(f"unknown dialect {self.dialect!r}")
        if not self.header:
            object.__setattr__(self, "header", _header(self.n_qubits))

    @property
    def text(self) -> str:
        return "\n".join(self.header + self.statements) + "\n"

    def __str__(self) -> str:
        return self.text


def _header(n: int) -> tuple[str, ...]:
    return (HEADER_VERSION, HEADER_INCLUDE, f"qreg q[{n}];")


def _fmt(v: float, decimals: int) -> str:
    s = f"{v:.{decimals}f}"
    # negative zero after rounding prints unsigned
    if float(s) == 0.0:
        s = s.lstrip("-")
    return s


def _execution_order(circuit: Circuit):
    return reversed(circuit.gates)


def dense_statement(gate: TwoQubitGate) -> str:
    vals = []
    for z in gate.matrix.reshape(-1):
        vals.append(_fmt(z.real, DENSE_DECIMALS))
        vals.append(_fmt(z.imag, DENSE_DECIMALS))
    return f"DenseMatrix(2,0,{','.join(vals)}) q[{gate.qa}],q[{gate.qb}];"


def emit_dense(circuit: Circuit) -> QasmDocument:
    stmts = tuple(dense_statement(g) for g in _execution_order(circuit))
    return QasmDocument("dense", circuit.n_qubits, stmts)


def _angle(v: float) -> str:
    return _fmt(v, ANGLE_DECIMALS)


def base_statements(gate: TwoQubitGate) -> list[str]:
    qubits = gate.qubits
    out = []
    for op in _kak.decompose(gate.matrix):
        if op[0] == "cx":
            out.append(f"cx q[{qubits[op[1]]}],q[{qubits[op[2]]}];")
        else:
            th, ph, la = _kak.u3_angles(op[2])
            out.append(f"u3({_angle(th)},{_angle(ph)},{_angle(la)}) q[{qubits[op[1]]}];")
    return out


def emit_base(circuit: Circuit) -> QasmDocument:
    stmts = []
    for g in _execution_order(circuit):
        stmts.extend(base_statements(g))
    return QasmDocument("base", circuit.n_qubits, tuple(stmts))


# ---------------------------------------------------------------- parsing

_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_QARG = re.compile(r"^\s*([A-Za-z_]\w*)\s*\[\s*(\d+)\s*\]\s*$")
_QREG = re.compile(r"^qreg\s+([A-Za-z_]\w*)\s*\[\s*(\d+)\s*\]$")
_CALL = re.compile(r"^([A-Za-z_]\w*)\s*(?:\(([^)]*)\))?\s*(.*)$")


def _strip_comment(line: str) -> str:
    i = line.find("//")
    return line if i < 0 else line[:i]


def _statements(text: str):
    """Yield ``(line_no, statement)``; one statement per line, ';'-terminated."""
    for no, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        if not line.endswith(";"):
            raise QasmParseError("statement is missing its terminating ';'", no)
        body = line[:-1].strip()
        if ";" in body:
            raise QasmParseError("more than one statement on a line", no)
        yield no, body


def _qargs(text: str, reg: str, n: int, arity: int, no: int) -> list[int]:
    parts = [p for p in text.split(",")]
    if len(parts) != arity:
        raise QasmParseError(f"expected {arity} qubit argument(s), got {len(parts)}", no)
    out = []
    for p in parts:
        m = _QARG.match(p)
        if not m:
            raise QasmParseError(f"bad qubit argument {p.strip()!r}", no)
        if m.group(1) != reg:
            raise QasmParseError(f"unknown register {m.group(1)!r}", no)
        q = int(m.group(2))
        if q >= n:
            raise QasmParseError(f"qubit {q} outside register of size {n}", no)
        out.append(q)
    if len(set(out)) != len(out):
        raise QasmParseError("repeated qubit argument", no)
    return out


def _numbers(text: str, no: int) -> list[float]:
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        if not re.fullmatch(_NUM, tok):
            raise QasmParseError(f"bad numeric literal {tok!r}", no)
        out.append(float(tok))
    return out


def _dense_matrix(params: list[float], no: int) -> np.ndarray:
    if len(params) != 34:
        raise QasmParseError(f"DenseMatrix takes 2 counts and 32 reals, got {len(params) - 2} reals", no)
    if params[0] != 2 or params[1] != 0:
        raise QasmParseError("only DenseMatrix(2,0,...) two-qubit blocks are supported", no)
    vals = np.asarray(params[2:])
    mat = (vals[0::2] + 1j * vals[1::2]).reshape(4, 4)
    defect = unitarity_defect(mat)
    if defect > DENSE_TOL:
        raise QasmValidationError(f"DenseMatrix is not unitary (defect {defect:.2e})", no)
    # undo the 6-decimal rounding noise so the gate passes strict unitarity checks
    return nearest_unitary(mat)


class _BaseFuser:
    """Rebuild two-qubit gates from a u3/cx stream.

    Pending single-qubit gates are absorbed into the next cx touching their
    qubit; leftovers go into the last gate that touched the qubit.
    """

    def __init__(self, n: int):
        self.n = n
        self.pending: dict[int, np.ndarray] = {}
        self.gates: list[tuple[np.ndarray, int, int]] = []
        self.last: dict[int, int] = {}

    def single(self, q: int, u: np.ndarray):
        self.pending[q] = u @ self.pending[q] if q in self.pending else u

    def cx(self, c: int, t: int):
        a = self.pending.pop(c, _kak.I2)
        b = self.pending.pop(t, _kak.I2)
        self.gates.append((_kak.CX @ np.kron(a, b), c, t))
        self.last[c] = self.last[t] = len(self.gates) - 1

    def finish(self) -> list[TwoQubitGate]:
        for q, u in sorted(self.pending.items()):
            if q in self.last:
                k = self.last[q]
                m, a, b = self.gates[k]
                emb = np.kron(u, _kak.I2) if q == a else np.kron(_kak.I2, u)
                self.gates[k] = (emb @ m, a, b)
            else:
                if self.n < 2:
                    raise QasmParseError("single-qubit gates need a 2-qubit register")
                other = 1 if q == 0 else 0
                self.gates.append((np.kron(u, _kak.I2), q, other))
                self.last[q] = self.last[other] = len(self.gates) - 1
        self.pending.clear()
        return [TwoQubitGate(nearest_unitary(m), a, b) for m, a, b in self.gates]


def detect_dialect(text: str) -> str:
    for _, body in _statements_lenient(text):
        if body.startswith("DenseMatrix"):
            return "dense"
        if body.startswith(("u3", "cx")):
            return "base"
    return "dense"


def _statements_lenient(text: str):
    for no, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw).strip()
        if line:
            yield no, line


def parse(text: str) -> Circuit:
    """Parse a dense- or base-dialect document into a :class:`Circuit`."""
    reg, n = None, None
    dense: list[TwoQubitGate] = []
    fuser = None
    seen_version = False
    for no, body in _statements(text):
        if body.startswith("OPENQASM"):
            if body.split()[1:] != ["2.0"]:
                raise QasmParseError(f"unsupported version statement {body!r}", no)
            seen_version = True
            continue
        if body.startswith("include"):
            continue
        m = _QREG.match(body)
        if m:
            if reg is not None:
                raise QasmParseError("only one qreg declaration is supported", no)
            reg, n = m.group(1), int(m.group(2))
            fuser = _BaseFuser(n)
            continue
        call = _CALL.match(body)
        name = call.group(1) if call else None
        if name not in ("DenseMatrix", "u3", "cx"):
            raise QasmParseError(f"unsupported statement {body!r}", no)
        if reg is None:
            raise QasmParseError("gate before qreg declaration", no)
        params, args = call.group(2), call.group(3)
        if name == "DenseMatrix":
            if params is None:
                raise QasmParseError("DenseMatrix needs a parameter list", no)
            if fuser.gates or fuser.pending:
                raise QasmParseError("mixing DenseMatrix with u3/cx is not supported", no)
            mat = _dense_matrix(_numbers(params, no), no)
            qa, qb = _qargs(args, reg, n, 2, no)
            dense.append(TwoQubitGate(mat, qa, qb))
        elif dense:
            raise QasmParseError("mixing DenseMatrix with u3/cx is not supported", no)
        elif name == "u3":
            if params is None:
                raise QasmParseError("u3 needs three angles", no)
            ang = _numbers(params, no)
            if len(ang) != 3:
                raise QasmParseError(f"u3 takes 3 angles, got {len(ang)}", no)
            (q,) = _qargs(args, reg, n, 1, no)
            fuser.single(q, _kak.u3_matrix(*ang))
        else:
            if params is not None:
                raise QasmParseError("cx takes no parameters", no)
            c, t = _qargs(args, reg, n, 2, no)
            fuser.cx(c, t)
    if not seen_version:
        raise QasmParseError("missing 'OPENQASM 2.0;' header")
    if reg is None:
        raise QasmParseError("missing qreg declaration")
    gates = dense if dense else fuser.finish()
    # statements run first-to-last; the gate list holds the operator order
    return Circuit(n, tuple(reversed(gates)))


# ------------------------------------------------------------- tokenizer

_DENSE_LINE = re.compile(r"^DenseMatrix\s*\((.*)\)\s*(.*?);?$")


@dataclass(frozen=True)
class TokenStream:
    """Tokens of a preprocessed dense document, one tuple per gate statement."""

    lines: tuple[tuple[str, ...], ...]
    decimals: int

    @property
    def tokens(self) -> list[str]:
        return [t for line in self.lines for t in line]

    def render(self, sep: str = ", ", elide: tuple[int, int] | None = None) -> str:
        """Gate lines joined by newlines, tokens within a line by ``sep``.

        ``elide=(head, tail)`` keeps only the first ``head`` and last ``tail``
        numeric tokens of each line, with ``...`` in between, the way long
        listings are abbreviated for display.
        """
        out = []
        for line in self.lines:
            if elide is not None:
                nums, regs = _split_regs(line)
                head, tail = elide
                if len(nums) > head + tail:
                    nums = nums[:head] + ("...",) + (nums[len(nums) - tail:] if tail else ())
                line = nums + regs
            out.append(sep.join(line))
        return "\n".join(out)

    def to_file_text(self) -> str:
        return "\n".join(" ".join(line) for line in self.lines) + "\n"

    def __len__(self):
        return sum(len(line) for line in self.lines)


def _split_regs(line: tuple[str, ...]):
    k = len(line)
    while k and "[" in line[k - 1]:
        k -= 1
    return line[:k], line[k:]


def round_token(literal: str, decimals: int) -> str:
    """Round a decimal literal half away from zero, dropping trailing zeros.

    ``"0.541645" -> "0.5"``, ``"-0.038637" -> "0"`` and ``"0.12345" -> "0.12"``
    at two decimals. Signed zeros are written as ``"0"``.
    """
    q = Decimal(1).scaleb(-decimals)
    d = Decimal(literal.strip()).quantize(q, rounding=ROUND_HALF_UP)
    if d.is_zero():
        return "0"
    s = format(d, "f")
    if "." in s:
        s = s.rstrip("0").rstrip(".")
    return s


def tokenize_statement(line: str, decimals: int = 1, real_only: bool = True) -> tuple[str, ...]:
    """Tokens of one DenseMatrix statement.

    A literal ``...`` argument (an elided listing) is passed through; parity
    of real/imaginary entries is counted from the front before it and from
    the back after it.
    """
    m = _DENSE_LINE.match(line.strip())
    if not m:
        raise QasmParseError(f"not a DenseMatrix statement: {line.strip()!r}")
    args = [a.strip() for a in m.group(1).split(",")]
    vals = args[2:]
    regs = [r.strip() for r in m.group(2).split(",") if r.strip()]
    if "..." in vals:
        k = vals.index("...")
        head, tail = vals[:k], vals[k + 1:]
        keep_tail = [i for i in range(len(tail)) if (len(tail) - i) % 2 == 0]
        picked = [v for i, v in enumerate(head) if not real_only or i % 2 == 0] + ["..."]
        picked += [v for i, v in enumerate(tail) if not real_only or i in keep_tail]
    else:
        if len(vals) != 32:
            raise QasmParseError(f"DenseMatrix takes 32 reals, got {len(vals)}")
        picked = vals[0::2] if real_only else vals
    toks = [v if v == "..." else round_token(v, decimals) for v in picked]
    return tuple(toks + regs)


def tokenize(doc: QasmDocument | str, decimals: int = 1, real_only: bool = True) -> TokenStream:
    """Strip headers and round every DenseMatrix entry to ``decimals`` places."""
    if decimals < 0:
        raise ValueError("decimals must be >= 0")
    if isinstance(doc, QasmDocument):
        if doc.dialect != "dense":
            raise UnsupportedDialectError("tokenizer only reads the dense dialect")
        body = doc.statements
    else:
        if detect_dialect(doc) != "dense":
            raise UnsupportedDialectError("tokenizer only reads the dense dialect")
        body = [ln for _, ln in _statements_lenient(doc)]
    lines = []
    for ln in body:
        if ln.startswith(("OPENQASM", "include", "qreg", "creg")):
            continue
        lines.append(tokenize_statement(ln, decimals, real_only))
    return TokenStream(tuple(lines), decimals)


def read_circuit(path) -> Circuit:
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read())


def write_document(doc: QasmDocument, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(doc.text)
