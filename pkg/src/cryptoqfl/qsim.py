"""Small state-vector simulator.

Conventions used everywhere in the package:

* little-endian qubit order: qubit ``q`` is bit ``q`` of the basis index;
* bitstrings and ket labels list qubit 0 first, so ``"10"`` on two qubits is
  index 1;
* states are compared up to global phase only.

Two state representations are provided. :class:`StateVector` is the dense
amplitude vector (capped at :data:`MAX_QUBITS`). :class:`BasisState` is a
single computational basis state with a phase; it is closed under the
permutation and diagonal gates (X, Z, P, T, RZ, CX, CZ, CCX, RESET) and is what
the aggregation circuits run on. Applying H/RX/RY to a :class:`BasisState`
promotes it to a dense vector.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

MAX_QUBITS = 20
NORM_TOL = 1e-9

ARITY = {
    "X": 1, "Z": 1, "H": 1, "P": 1, "T": 1,
    "RX": 1, "RY": 1, "RZ": 1, "RESET": 1,
    "CX": 2, "CZ": 2, "CCX": 3,
}
ROTATIONS = frozenset({"RX", "RY", "RZ"})
PERMUTATION_KINDS = frozenset({"X", "CX", "CCX"})
DIAGONAL_KINDS = frozenset({"Z", "P", "T", "RZ", "CZ"})


class CircuitError(ValueError):
    pass


@dataclass(frozen=True)
class Gate:
    kind: str
    targets: tuple[int, ...]
    angle: float | None = None

    def __post_init__(self):
        kind = self.kind.upper()
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))
        if kind not in ARITY:
            raise CircuitError(f"unknown gate kind {self.kind!r}")
        if len(self.targets) != ARITY[kind]:
            raise CircuitError(f"{kind} takes {ARITY[kind]} qubit(s), got {len(self.targets)}")
        if len(set(self.targets)) != len(self.targets):
            raise CircuitError(f"{kind} targets must be distinct: {self.targets}")
        if any(t < 0 for t in self.targets):
            raise CircuitError(f"negative qubit index in {self.targets}")
        if kind in ROTATIONS:
            if self.angle is None:
                raise CircuitError(f"{kind} needs an angle")
            object.__setattr__(self, "angle", float(self.angle))
        elif self.angle is not None:
            raise CircuitError(f"angle supplied for non-rotation gate {kind}")

    def __str__(self):
        s = f"{self.kind} {','.join(map(str, self.targets))}"
        if self.angle is not None:
            s += f" {self.angle!r}"
        return s

    def inverse(self) -> list[Gate]:
        """Gates whose product undoes this one (RESET has no inverse)."""
        if self.kind in ROTATIONS:
            return [Gate(self.kind, self.targets, -self.angle)]
        if self.kind == "P":
            return [self] * 3
        if self.kind == "T":
            return [self] * 7
        if self.kind == "RESET":
            raise CircuitError("RESET is not invertible")
        return [self]


def gate(kind: str, *targets: int, angle: float | None = None) -> Gate:
    return Gate(kind, tuple(targets), angle)


@dataclass(frozen=True)
class Circuit:
    n_qubits: int
    gates: tuple[Gate, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        if self.n_qubits < 1:
            raise CircuitError("circuit needs at least one qubit")
        for g in self.gates:
            if max(g.targets) >= self.n_qubits:
                raise CircuitError(f"{g} out of range for {self.n_qubits} qubits")

    def __len__(self):
        return len(self.gates)

    def __add__(self, other: Circuit) -> Circuit:
        if other.n_qubits != self.n_qubits:
            raise CircuitError("cannot concatenate circuits of different widths")
        return Circuit(self.n_qubits, self.gates + other.gates)

    def count(self, kind: str) -> int:
        return sum(g.kind == kind for g in self.gates)

    def to_text(self) -> str:
        return "".join(f"{g}\n" for g in self.gates)


def parse_circuit(text: str, n_qubits: int | None = None) -> Circuit:
    """Parse ``GATE q0[,q1[,q2]][ angle]`` lines; ``#`` starts a comment."""
    gates = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) not in (2, 3):
            raise CircuitError(f"line {lineno}: cannot parse {raw!r}")
        try:
            targets = tuple(int(t) for t in parts[1].split(","))
            angle = float(parts[2]) if len(parts) == 3 else None
        except ValueError as exc:
            raise CircuitError(f"line {lineno}: {exc}") from None
        gates.append(Gate(parts[0], targets, angle))
    if n_qubits is None:
        n_qubits = 1 + max((max(g.targets) for g in gates), default=0)
    return Circuit(n_qubits, gates)


# ---------------------------------------------------------------- matrices

_SQ2 = 1 / math.sqrt(2)


def unitary(g: Gate) -> np.ndarray:
    """Local 2^k x 2^k matrix of ``g`` over its own targets, little-endian."""
    k = g.kind
    if k == "X":
        return np.array([[0, 1], [1, 0]], dtype=complex)
    if k == "Z":
        return np.diag([1, -1]).astype(complex)
    if k == "H":
        return np.array([[_SQ2, _SQ2], [_SQ2, -_SQ2]], dtype=complex)
    if k == "P":
        return np.diag([1, 1j])
    if k == "T":
        return np.diag([1, cmath.exp(1j * math.pi / 4)])
    if k == "RX":
        c, s = math.cos(g.angle / 2), math.sin(g.angle / 2)
        return np.array([[c, -1j * s], [-1j * s, c]])
    if k == "RY":
        c, s = math.cos(g.angle / 2), math.sin(g.angle / 2)
        return np.array([[c, -s], [s, c]], dtype=complex)
    if k == "RZ":
        return np.diag([cmath.exp(-0.5j * g.angle), cmath.exp(0.5j * g.angle)])
    if k in ("CX", "CCX"):
        dim = 1 << len(g.targets)
        u = np.zeros((dim, dim), dtype=complex)
        for i in range(dim):
            u[_classical_local(k, i), i] = 1
        return u
    if k == "CZ":
        return np.diag([1, 1, 1, -1]).astype(complex)
    raise CircuitError(f"{k} has no unitary")


def _classical_local(kind: str, i: int) -> int:
    # local index over the gate's own targets; last target is the flipped one
    if kind == "X":
        return i ^ 1
    if kind == "CX":
        return i ^ 2 if i & 1 else i
    if kind == "CCX":
        return i ^ 4 if (i & 3) == 3 else i
    raise CircuitError(kind)


def _diag_phase(g: Gate, bits: Sequence[int]) -> complex:
    k = g.kind
    if k == "Z":
        return -1 if bits[0] else 1
    if k == "P":
        return 1j if bits[0] else 1
    if k == "T":
        return cmath.exp(1j * math.pi / 4) if bits[0] else 1
    if k == "RZ":
        return cmath.exp((0.5j if bits[0] else -0.5j) * g.angle)
    if k == "CZ":
        return -1 if bits[0] and bits[1] else 1
    raise CircuitError(k)


@lru_cache(maxsize=4096)
def _permutation(n: int, kind: str, targets: tuple[int, ...]) -> np.ndarray:
    idx = np.arange(1 << n)
    *controls, t = targets
    on = np.ones_like(idx, dtype=bool)
    for c in controls:
        on &= ((idx >> c) & 1).astype(bool)
    return np.where(on, idx ^ (1 << t), idx)


@lru_cache(maxsize=4096)
def _diagonal(n: int, g: Gate) -> np.ndarray:
    idx = np.arange(1 << n)
    bits = [(idx >> t) & 1 for t in g.targets]
    local = bits[0] if len(bits) == 1 else bits[0] & bits[1]
    one = _diag_phase(g, [1] * len(bits))
    zero = _diag_phase(g, [0] * len(bits))
    return np.where(local.astype(bool), one, zero).astype(complex)


# ---------------------------------------------------------------- states


class StateVector:
    """Dense normalized amplitude vector; immutable once built."""

    __slots__ = ("n_qubits", "amplitudes")

    def __init__(self, amplitudes, *, check_norm: bool = True):
        amps = np.array(amplitudes, dtype=complex).reshape(-1)
        n = int(amps.size).bit_length() - 1
        if amps.size < 2 or amps.size != 1 << n:
            raise CircuitError(f"amplitude vector length {amps.size} is not 2^n")
        if n > MAX_QUBITS:
            raise CircuitError(f"{n} qubits exceeds dense cap of {MAX_QUBITS}")
        if check_norm and abs(np.linalg.norm(amps) - 1) > NORM_TOL:
            raise CircuitError(f"state not normalized (norm {np.linalg.norm(amps):.12f})")
        amps.flags.writeable = False
        self.n_qubits = n
        self.amplitudes = amps

    @classmethod
    def zero(cls, n: int) -> StateVector:
        return cls.basis(n, 0)

    @classmethod
    def basis(cls, n: int, index: int) -> StateVector:
        if n > MAX_QUBITS:
            raise CircuitError(f"{n} qubits exceeds dense cap of {MAX_QUBITS}")
        amps = np.zeros(1 << n, dtype=complex)
        amps[index] = 1
        return cls(amps)

    @classmethod
    def from_bits(cls, bits: str) -> StateVector:
        return cls.basis(len(bits), bits_to_index(bits))

    @classmethod
    def random(cls, n: int, rng: np.random.Generator) -> StateVector:
        v = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
        return cls(v / np.linalg.norm(v))

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def to_dense(self) -> StateVector:
        return self

    def __repr__(self):
        return f"StateVector(n_qubits={self.n_qubits})"


@dataclass(frozen=True)
class BasisState:
    """``phase * |index>``; the fast path for permutation/diagonal circuits."""

    n_qubits: int
    index: int
    phase: complex = 1

    def __post_init__(self):
        if not 0 <= self.index < 1 << self.n_qubits:
            raise CircuitError(f"basis index {self.index} out of range")
        if abs(abs(self.phase) - 1) > NORM_TOL:
            raise CircuitError("basis state phase must have unit modulus")

    @classmethod
    def from_bits(cls, bits: str) -> BasisState:
        return cls(len(bits), bits_to_index(bits))

    def bit(self, q: int) -> int:
        return (self.index >> q) & 1

    def bits(self) -> str:
        return index_to_bits(self.index, self.n_qubits)

    def to_dense(self) -> StateVector:
        amps = np.zeros(1 << self.n_qubits, dtype=complex)
        amps[self.index] = self.phase
        return StateVector(amps)


def bits_to_index(bits: str) -> int:
    return sum(1 << q for q, b in enumerate(bits) if b == "1")


def index_to_bits(index: int, n: int) -> str:
    return "".join("1" if (index >> q) & 1 else "0" for q in range(n))


def _check_targets(g: Gate, n: int):
    if max(g.targets) >= n:
        raise CircuitError(f"{g} out of range for {n} qubits")


def apply_gate(state, g: Gate, rng: np.random.Generator | None = None):
    """Return ``U|state>`` for one gate. RESET delegates to :func:`reset_qubit`."""
    _check_targets(g, state.n_qubits)
    if g.kind == "RESET":
        return reset_qubit(state, g.targets[0], rng)
    if isinstance(state, BasisState):
        return _apply_basis(state, g)
    n = state.n_qubits
    amps = state.amplitudes
    if g.kind in PERMUTATION_KINDS:
        perm = _permutation(n, g.kind, g.targets)
        # perm is an involution, so gathering with it applies the gate
        return StateVector(amps[perm], check_norm=False)
    if g.kind in DIAGONAL_KINDS:
        return StateVector(amps * _diagonal(n, g), check_norm=False)
    return StateVector(_apply_dense(amps, n, unitary(g), g.targets), check_norm=False)


def _apply_dense(amps: np.ndarray, n: int, u: np.ndarray, targets: Sequence[int]) -> np.ndarray:
    k = len(targets)
    psi = amps.reshape((2,) * n)
    axes = [n - 1 - t for t in reversed(targets)]
    psi = np.moveaxis(psi, axes, range(k))
    shape = psi.shape
    psi = (u @ psi.reshape(1 << k, -1)).reshape(shape)
    return np.moveaxis(psi, range(k), axes).reshape(-1)


def _apply_basis(state: BasisState, g: Gate):
    bits = [state.bit(t) for t in g.targets]
    if g.kind in PERMUTATION_KINDS:
        if all(bits[:-1]):
            return BasisState(state.n_qubits, state.index ^ (1 << g.targets[-1]), state.phase)
        return state
    if g.kind in DIAGONAL_KINDS:
        return BasisState(state.n_qubits, state.index, state.phase * _diag_phase(g, bits))
    return apply_gate(state.to_dense(), g)


def run_circuit(circuit: Circuit, state, rng: np.random.Generator | None = None):
    if circuit.n_qubits != state.n_qubits:
        raise CircuitError(
            f"circuit has {circuit.n_qubits} qubits, state has {state.n_qubits}"
        )
    for g in circuit.gates:
        state = apply_gate(state, g, rng)
    return state


def _require_normalized(state: StateVector):
    if abs(state.norm() - 1) > NORM_TOL:
        raise CircuitError(f"state not normalized (norm {state.norm():.12f})")


def measure_all(state, rng: np.random.Generator) -> str:
    """Sample a bitstring (qubit 0 first) by the Born rule."""
    if isinstance(state, BasisState):
        return state.bits()
    _require_normalized(state)
    p = state.probabilities()
    i = int(rng.choice(p.size, p=p / p.sum()))
    return index_to_bits(i, state.n_qubits)


def reset_qubit(state, qubit: int, rng: np.random.Generator | None = None):
    """Measure ``qubit`` and flip it to |0> if the outcome was 1.

    A random draw is consumed only when both outcomes have non-zero
    probability, so deterministic resets need no rng.
    """
    if not 0 <= qubit < state.n_qubits:
        raise CircuitError(f"qubit {qubit} out of range")
    if isinstance(state, BasisState):
        return BasisState(state.n_qubits, state.index & ~(1 << qubit), state.phase)
    amps = state.amplitudes
    one = ((np.arange(amps.size) >> qubit) & 1).astype(bool)
    p1 = float(np.sum(np.abs(amps[one]) ** 2))
    if p1 <= 1e-15:
        outcome = 0
    elif p1 >= 1 - 1e-15:
        outcome = 1
    else:
        if rng is None:
            raise CircuitError("reset of a superposed qubit needs an rng")
        outcome = int(rng.random() < p1)
    kept = np.where(one == bool(outcome), amps, 0)
    kept = kept / np.linalg.norm(kept)
    if outcome:
        kept = kept[_permutation(state.n_qubits, "X", (qubit,))]
    return StateVector(kept)


def expectation_z(state, qubit: int) -> float:
    if not 0 <= qubit < state.n_qubits:
        raise CircuitError(f"qubit {qubit} out of range")
    if isinstance(state, BasisState):
        return -1.0 if state.bit(qubit) else 1.0
    p = state.probabilities()
    sign = 1 - 2 * ((np.arange(p.size) >> qubit) & 1)
    return float(np.dot(sign, p))


def overlap(a, b) -> float:
    """``|<a|b>|``; 1 means equal up to global phase."""
    return float(abs(np.vdot(a.to_dense().amplitudes, b.to_dense().amplitudes)))


def fidelity(a, b) -> float:
    return overlap(a, b) ** 2


def equal_up_to_phase(a, b, tol: float = 1e-9) -> bool:
    if isinstance(a, BasisState) and isinstance(b, BasisState):
        return a.n_qubits == b.n_qubits and a.index == b.index
    return overlap(a, b) >= 1 - tol


def tensor(low, high):
    """State of ``low`` on the first qubits and ``high`` above them."""
    if isinstance(low, BasisState) and isinstance(high, BasisState):
        return BasisState(
            low.n_qubits + high.n_qubits,
            low.index | (high.index << low.n_qubits),
            low.phase * high.phase,
        )
    amps = np.kron(high.to_dense().amplitudes, low.to_dense().amplitudes)
    return StateVector(amps, check_norm=False)


def split_zero(state, qubits: Iterable[int]):
    """Drop ``qubits`` that are exactly |0>; returns the state of the rest.

    Remaining qubits keep their relative order. Raises if any dropped qubit
    has non-zero population in |1>.
    """
    qubits = sorted(set(qubits))
    keep = [q for q in range(state.n_qubits) if q not in qubits]
    if isinstance(state, BasisState):
        if any(state.bit(q) for q in qubits):
            raise CircuitError("qubits to drop are not in |0>")
        index = sum(state.bit(q) << i for i, q in enumerate(keep))
        return BasisState(len(keep), index, state.phase)
    amps = state.amplitudes
    idx = np.arange(amps.size)
    mask = sum(1 << q for q in qubits)
    if np.any(np.abs(amps[(idx & mask) != 0]) > 1e-12):
        raise CircuitError("qubits to drop are not in |0>")
    sel = idx[(idx & mask) == 0]
    return StateVector(amps[sel], check_norm=False)
