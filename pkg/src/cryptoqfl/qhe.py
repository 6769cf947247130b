"""Homomorphic evaluation of circuits on QOTP ciphertexts.

Clifford gates are applied to the ciphertext as-is and the Pauli key is
updated by linear bit rules. A Toffoli ``CCX(c1, c2 -> t)`` leaves behind the
Clifford error ``CX(c2->t)^x_c1 . CX(c1->t)^x_c2 . CZ(c1,c2)^z_t`` which the
evaluator removes through a :class:`GadgetOracle` that applies a gate
conditioned on an encrypted key bit. The evaluator never sees a
:class:`PauliKey`; it only talks to a key *view* (see :class:`CheKeyView` and
:class:`ClientKeyView`).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol

from .che import CheBit, CheEvaluator, CheKeypair, che_decrypt
from .meter import LatencyMeter
from .qotp import PauliKey, bits_to_hex
from .qsim import Circuit, Gate, apply_gate, reset_qubit

CLIFFORD_KINDS = frozenset({"X", "Z", "H", "P", "CX", "CZ"})
SUPPORTED_KINDS = CLIFFORD_KINDS | {"CCX", "RESET"}
GADGET_LATENCY = 25


class QHEError(Exception):
    pass


@dataclass(frozen=True)
class QCiphertext:
    state: object
    key_id: str


# ------------------------------------------------------------ key update rules


def update_key_clifford(g: Gate, key: PauliKey) -> PauliKey:
    """Key after homomorphically applying a Clifford gate ``g``."""
    if g.kind not in CLIFFORD_KINDS:
        raise QHEError(f"no Clifford key-update rule for {g.kind}")
    z, x = list(key.z), list(key.x)
    _clifford_rule(g, z, x, xor=lambda a, b: a ^ b)
    return PauliKey(z, x)


def update_key(g: Gate, key: PauliKey) -> PauliKey:
    """Plaintext key update for any gate the evaluator supports."""
    if g.kind in CLIFFORD_KINDS:
        return update_key_clifford(g, key)
    z, x = list(key.z), list(key.x)
    if g.kind == "CCX":
        _ccx_rule(g, z, x, xor=lambda a, b: a ^ b, and_=lambda a, b: a & b)
    elif g.kind == "RESET":
        z[g.targets[0]] = x[g.targets[0]] = 0
    else:
        raise QHEError(f"gate {g.kind} is not supported homomorphically")
    return PauliKey(z, x)


def _clifford_rule(g: Gate, z: list, x: list, xor):
    # in-place on bit containers so the same rule drives plaintext and CHE keys
    k, t = g.kind, g.targets
    if k in ("X", "Z"):
        return "none"
    if k == "H":
        i = t[0]
        z[i], x[i] = x[i], z[i]
        return "swap"
    if k == "P":
        i = t[0]
        z[i] = xor(z[i], x[i])
        return "z^=x"
    if k == "CX":
        c, tt = t
        x[tt] = xor(x[tt], x[c])
        z[c] = xor(z[c], z[tt])
        return "xt^=xc,zc^=zt"
    if k == "CZ":
        a, b = t
        za, zb = z[a], z[b]
        z[a] = xor(za, x[b])
        z[b] = xor(zb, x[a])
        return "za^=xb,zb^=xa"
    raise QHEError(k)


def _ccx_rule(g: Gate, z: list, x: list, xor, and_):
    c1, c2, t = g.targets
    xc1, xc2, zt = x[c1], x[c2], z[t]
    x[t] = xor(x[t], and_(xc1, xc2))
    z[c1] = xor(z[c1], and_(zt, xc2))
    z[c2] = xor(z[c2], and_(zt, xc1))
    return "ccx"


def ccx_correction(g: Gate) -> list[tuple[Gate, str, int]]:
    """Correction gates for ``g`` and the key bit each is conditioned on.

    Entries are ``(gate, 'x' | 'z', qubit)``; the three gates commute.
    """
    c1, c2, t = g.targets
    return [
        (Gate("CX", (c2, t)), "x", c1),
        (Gate("CX", (c1, t)), "x", c2),
        (Gate("CZ", (c1, c2)), "z", t),
    ]


@dataclass
class KeyTrace:
    initial: PauliKey
    updates: list = field(default_factory=list)
    final: PauliKey | None = None

    def replay(self) -> PauliKey:
        key = self.initial
        for g, _rule in self.updates:
            key = update_key(g, key)
        return key

    def dump(self) -> str:
        lines = []
        key = self.initial
        for g, _rule in self.updates:
            key = update_key(g, key)
            lines.append(
                f"{g.kind} {','.join(map(str, g.targets))} | "
                f"z:{bits_to_hex(key.z)} x:{bits_to_hex(key.x)}"
            )
        return "\n".join(lines) + ("\n" if lines else "")


def trace_keys(circuit: Circuit, key: PauliKey) -> KeyTrace:
    """Client-side replay of the key updates a circuit induces."""
    trace = KeyTrace(initial=key)
    for g in circuit.gates:
        if g.kind == "CCX":
            rule = "ccx"
        elif g.kind == "RESET":
            rule = "reset"
        else:
            rule = _clifford_rule(g, [0] * key.n_qubits, [0] * key.n_qubits, xor=lambda a, b: a ^ b)
        key = update_key(g, key)
        trace.updates.append((g, rule))
    trace.final = key
    return trace


# ------------------------------------------------------------ key views


class KeyView(Protocol):
    """What the evaluator may know about the key: opaque handles only."""

    def cond(self, kind: str, qubit: int): ...

    def update(self, g: Gate) -> None: ...


class CheKeyView:
    """Key bits held as CHE ciphertexts and updated homomorphically (baseline)."""

    def __init__(self, z: list[CheBit], x: list[CheBit], evaluator: CheEvaluator):
        if len(z) != len(x):
            raise QHEError("z and x views differ in length")
        self.z = list(z)
        self.x = list(x)
        self.evaluator = evaluator

    @classmethod
    def encrypt(cls, key: PauliKey, keypair: CheKeypair, evaluator: CheEvaluator, rng=None):
        """Client-side: wrap a plaintext key for upload."""
        from .che import che_encrypt

        return cls(
            [che_encrypt(b, keypair, rng) for b in key.z],
            [che_encrypt(b, keypair, rng) for b in key.x],
            evaluator,
        )

    def __len__(self):
        return len(self.z)

    def cond(self, kind: str, qubit: int) -> CheBit:
        return (self.z if kind == "z" else self.x)[qubit]

    def update(self, g: Gate) -> None:
        ev = self.evaluator
        if g.kind in CLIFFORD_KINDS:
            _clifford_rule(g, self.z, self.x, xor=ev.xor)
        elif g.kind == "CCX":
            _ccx_rule(g, self.z, self.x, xor=ev.xor, and_=ev.and_)
        elif g.kind == "RESET":
            q = g.targets[0]
            self.z[q] = ev.encrypt(0)
            self.x[q] = ev.encrypt(0)
        else:
            raise QHEError(f"gate {g.kind} is not supported homomorphically")

    @classmethod
    def public_zero(cls, n: int, evaluator: CheEvaluator):
        """Encrypted all-zero key for server-initialized registers."""
        return cls([evaluator.encrypt(0) for _ in range(n)],
                   [evaluator.encrypt(0) for _ in range(n)], evaluator)

    def load(self, qubits, other: CheKeyView) -> None:
        """Splice ``other``'s key bits in at ``qubits`` (operand loading)."""
        if len(qubits) != len(other):
            raise QHEError("operand key width mismatch")
        for i, q in enumerate(qubits):
            self.z[q] = other.z[i]
            self.x[q] = other.x[i]

    def decrypt(self, keypair: CheKeypair) -> PauliKey:
        """Client-side: recover the plaintext key."""
        return PauliKey(
            [che_decrypt(b, keypair) for b in self.z],
            [che_decrypt(b, keypair) for b in self.x],
        )


class _Sealed:
    """Plaintext key tracker living on the client side of the boundary."""

    def __init__(self, key: PauliKey):
        self.key = key


class ClientKeyView:
    """Key tracked by the clients themselves (optimized workflow).

    The server receives only integer handles; the clients replay the public
    gate sequence on their plaintext copy. ``meter`` collects the clients'
    bookkeeping cost (one XOR unit per updated bit).
    """

    def __init__(self, key: PauliKey, meter: LatencyMeter | None = None,
                 xor_cost: int = 1, category: str = "client_key_update"):
        self.__sealed = _Sealed(key)
        self.__tokens: dict[int, int] = {}
        self.meter = meter if meter is not None else LatencyMeter()
        self.xor_cost = xor_cost
        self.category = category

    def __len__(self):
        return self.__sealed.key.n_qubits

    def cond(self, kind: str, qubit: int) -> int:
        key = self.__sealed.key
        bit = (key.z if kind == "z" else key.x)[qubit]
        token = len(self.__tokens)
        self.__tokens[token] = bit
        return token

    def update(self, g: Gate) -> None:
        ops = {"X": 0, "Z": 0, "H": 0, "P": 1, "CX": 2, "CZ": 2, "CCX": 6, "RESET": 0}
        self.meter.charge(self.category, self.xor_cost * ops.get(g.kind, 0))
        self.__sealed.key = update_key(g, self.__sealed.key)

    def load(self, qubits, other: ClientKeyView) -> None:
        """Splice ``other``'s key bits in at ``qubits`` (operand loading)."""
        new = other.client_key()
        if len(qubits) != new.n_qubits:
            raise QHEError("operand key width mismatch")
        z, x = list(self.__sealed.key.z), list(self.__sealed.key.x)
        for i, q in enumerate(qubits):
            z[q], x[q] = new.z[i], new.x[i]
        self.__sealed.key = PauliKey(z, x)

    def _resolve(self, token: int) -> int:
        return self.__tokens.pop(token)

    def client_key(self) -> PauliKey:
        """Client-side read of the current key."""
        return self.__sealed.key


# ------------------------------------------------------------ gadget


class GadgetOracle:
    """Sealed stand-in for the encrypted conditional-gate construction.

    ``apply_conditioned`` applies ``g`` iff the plaintext bit behind the
    handle is 1 and charges ``latency`` whether or not the gate fires.
    Resolution of handles happens only inside this class.
    """

    def __init__(self, latency: float = GADGET_LATENCY, meter: LatencyMeter | None = None,
                 category: str = "gadget"):
        if latency < 0:
            raise ValueError("gadget latency must be non-negative")
        self.latency = latency
        self.meter = meter if meter is not None else LatencyMeter()
        self.category = category
        self.uses = 0

    def _resolve(self, view: KeyView, handle) -> int:
        if isinstance(view, CheKeyView):
            return view.evaluator._reveal(handle)
        if isinstance(view, ClientKeyView):
            return view._resolve(handle)
        raise QHEError(f"gadget cannot resolve handles from {type(view).__name__}")

    def apply_conditioned(self, state, g: Gate, view: KeyView, handle):
        self.meter.charge(self.category, self.latency)
        self.uses += 1
        if self._resolve(view, handle):
            return apply_gate(state, g)
        return state


# ------------------------------------------------------------ evaluation


def homomorphic_apply(g: Gate, ct: QCiphertext, view: KeyView, gadget: GadgetOracle,
                      rng=None) -> QCiphertext:
    """Apply ``g`` to the ciphertext and advance the key view in place."""
    if g.kind not in SUPPORTED_KINDS:
        raise QHEError(f"gate {g.kind} is not supported homomorphically")
    state = ct.state
    if g.kind == "CCX":
        handles = [(cg, view.cond(kind, q)) for cg, kind, q in ccx_correction(g)]
        state = apply_gate(state, g)
        for cg, handle in handles:
            state = gadget.apply_conditioned(state, cg, view, handle)
    elif g.kind == "RESET":
        state = reset_qubit(state, g.targets[0], rng)
    else:
        state = apply_gate(state, g)
    view.update(g)
    return QCiphertext(state, ct.key_id)


def homomorphic_run(circuit: Circuit, ct: QCiphertext, view: KeyView, gadget: GadgetOracle,
                    rng=None) -> QCiphertext:
    if circuit.n_qubits != ct.state.n_qubits:
        raise QHEError("circuit and ciphertext widths differ")
    for g in circuit.gates:
        ct = homomorphic_apply(g, ct, view, gadget, rng)
    return ct
