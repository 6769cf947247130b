import numpy as np
import pytest

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Z = np.diag([1, -1]).astype(complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
P0 = np.diag([1, 0]).astype(complex)
P1 = np.diag([0, 1]).astype(complex)


def single(n, q, m):
    """Full 2^n matrix of a one-qubit operator ``m`` on qubit q (little-endian)."""
    out = np.eye(1, dtype=complex)
    for k in reversed(range(n)):
        out = np.kron(out, m if k == q else I2)
    return out


def controlled(n, controls, target, m):
    """Full matrix of ``m`` on ``target`` conditioned on all ``controls`` being 1."""
    dim = 1 << n
    proj = np.eye(dim, dtype=complex)
    for c in controls:
        proj = proj @ single(n, c, P1)
    return np.eye(dim) - proj + proj @ single(n, target, m)


def dense_gate(n, g):
    """Independent dense oracle for a qsim Gate, built from Kronecker products."""
    k, t = g.kind, g.targets
    if k == "CX":
        return controlled(n, [t[0]], t[1], X)
    if k == "CCX":
        return controlled(n, [t[0], t[1]], t[2], X)
    if k == "CZ":
        return controlled(n, [t[0]], t[1], Z)
    th = g.angle
    mats = {
        "X": X, "Z": Z, "H": H,
        "P": np.diag([1, 1j]),
        "T": np.diag([1, np.exp(1j * np.pi / 4)]),
        "RX": np.cos(th / 2) * I2 - 1j * np.sin(th / 2) * X if th is not None else None,
        "RY": np.array([[np.cos(th / 2), -np.sin(th / 2)], [np.sin(th / 2), np.cos(th / 2)]])
        if th is not None else None,
        "RZ": np.diag([np.exp(-0.5j * th), np.exp(0.5j * th)]) if th is not None else None,
    }
    return single(n, t[0], mats[k])


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
