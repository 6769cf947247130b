"""Quantum one-time pad: Pauli keys, encryption and decryption.

A key holds one ``(z, x)`` bit pair per qubit and encrypts a state as
``Z^z X^x |psi>`` (X hits the ket first). Decryption applies the adjoint,
``X^x Z^z``, which equals the encryption up to a global phase.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .qsim import Gate, apply_gate


@dataclass(frozen=True)
class PauliKey:
    z: tuple[int, ...]
    x: tuple[int, ...]

    def __post_init__(self):
        z = tuple(int(b) for b in self.z)
        x = tuple(int(b) for b in self.x)
        if len(z) != len(x):
            raise ValueError("z and x key vectors differ in length")
        if any(b not in (0, 1) for b in z + x):
            raise ValueError("key bits must be 0 or 1")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "x", x)

    @property
    def n_qubits(self) -> int:
        return len(self.z)

    @classmethod
    def zeros(cls, n: int) -> PauliKey:
        return cls((0,) * n, (0,) * n)

    def __xor__(self, other: PauliKey) -> PauliKey:
        if other.n_qubits != self.n_qubits:
            raise ValueError("key length mismatch")
        return PauliKey(
            tuple(a ^ b for a, b in zip(self.z, other.z)),
            tuple(a ^ b for a, b in zip(self.x, other.x)),
        )

    def concat(self, other: PauliKey) -> PauliKey:
        """Key of a register with ``self`` on the low qubits and ``other`` above."""
        return PauliKey(self.z + other.z, self.x + other.x)

    def sub(self, qubits) -> PauliKey:
        return PauliKey(tuple(self.z[q] for q in qubits), tuple(self.x[q] for q in qubits))

    def to_hex(self) -> tuple[str, str]:
        return bits_to_hex(self.z), bits_to_hex(self.x)

    @classmethod
    def from_hex(cls, z_hex: str, x_hex: str, n: int) -> PauliKey:
        return cls(hex_to_bits(z_hex, n), hex_to_bits(x_hex, n))


def bits_to_hex(bits) -> str:
    """Bit 0 is the least significant bit of the hex number."""
    value = sum(b << i for i, b in enumerate(bits))
    width = max(1, (len(bits) + 3) // 4)
    return f"{value:0{width}x}"


def hex_to_bits(text: str, n: int) -> tuple[int, ...]:
    value = int(text, 16)
    if value >> n:
        raise ValueError(f"hex key {text!r} wider than {n} qubits")
    return tuple((value >> i) & 1 for i in range(n))


def keygen(n: int, rng: np.random.Generator) -> PauliKey:
    if n < 1:
        raise ValueError("key needs at least one qubit")
    bits = rng.integers(0, 2, size=2 * n)
    return PauliKey(tuple(bits[:n]), tuple(bits[n:]))


def _check(state, key: PauliKey):
    if state.n_qubits != key.n_qubits:
        raise ValueError(f"key covers {key.n_qubits} qubits, state has {state.n_qubits}")


def qotp_encrypt(state, key: PauliKey):
    _check(state, key)
    for q in range(key.n_qubits):
        if key.x[q]:
            state = apply_gate(state, Gate("X", (q,)))
        if key.z[q]:
            state = apply_gate(state, Gate("Z", (q,)))
    return state


def qotp_decrypt(state, key: PauliKey):
    _check(state, key)
    for q in range(key.n_qubits):
        if key.z[q]:
            state = apply_gate(state, Gate("Z", (q,)))
        if key.x[q]:
            state = apply_gate(state, Gate("X", (q,)))
    return state
