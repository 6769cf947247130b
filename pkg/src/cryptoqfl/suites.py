"""Standalone verification suites shared by the command line and the test suite.

Each suite returns a :class:`SuiteResult`; ``ok`` is true iff every trial passed.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .qhe import ClientKeyView, GadgetOracle, QCiphertext, homomorphic_run
from .qotp import PauliKey, keygen, qotp_decrypt, qotp_encrypt
from .qsim import Circuit, Gate, StateVector, overlap, run_circuit
from .terngrad import deserialize, serialize, ternarize

QHE_KINDS = ("X", "Z", "H", "P", "CX", "CZ", "CCX")
ARITY = {"CX": 2, "CZ": 2, "CCX": 3}


@dataclass
class SuiteResult:
    name: str
    passed: int
    total: int
    failures: list = field(default_factory=list)
    detail: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.passed == self.total and not self.failures

    def report(self) -> dict:
        return {"suite": self.name, "passed": self.passed, "total": self.total,
                "ok": self.ok, "failures": self.failures[:20], **self.detail}


def random_circuit(n: int, depth: int, rng: np.random.Generator) -> Circuit:
    kinds = [k for k in QHE_KINDS if ARITY.get(k, 1) <= n]
    gates = []
    for _ in range(depth):
        k = kinds[rng.integers(len(kinds))]
        gates.append(Gate(k, tuple(int(t) for t in rng.permutation(n)[:ARITY.get(k, 1)])))
    return Circuit(n, gates)


def qhe_round_trips(trials: int = 1000, seed: int = 0, max_qubits: int = 4, max_depth: int = 20,
                    tol: float = 1e-9) -> SuiteResult:
    """Dec(Eval(Enc(psi))) against plaintext simulation on random circuits."""
    rng = np.random.default_rng(seed)
    passed, failures, worst = 0, [], 1.0
    for i in range(trials):
        n = int(rng.integers(1, max_qubits + 1))
        circ = random_circuit(n, int(rng.integers(0, max_depth + 1)), rng)
        psi = StateVector.random(n, rng)
        key = keygen(n, rng)
        view = ClientKeyView(key)
        out = homomorphic_run(circ, QCiphertext(qotp_encrypt(psi, key), "t"), view, GadgetOracle())
        fid = overlap(qotp_decrypt(out.state, view.client_key()), run_circuit(circ, psi)) ** 2
        worst = min(worst, fid)
        if fid >= 1 - tol:
            passed += 1
        else:
            failures.append({"trial": i, "fidelity": fid})
    return SuiteResult("qhe", passed, trials, failures, {"min_fidelity": worst})


def qotp_hiding(states: int = 20, seed: int = 0, tol: float = 1e-12) -> SuiteResult:
    """Average over all keys of the ciphertext density matrix is maximally mixed."""
    rng = np.random.default_rng(seed)
    passed, total, failures, worst = 0, 0, [], 0.0
    for n in (1, 2):
        keys = [PauliKey(b[:n], b[n:]) for b in itertools.product((0, 1), repeat=2 * n)]
        for i in range(states):
            psi = StateVector.random(n, rng)
            rho = np.zeros((1 << n, 1 << n), dtype=complex)
            for k in keys:
                v = qotp_encrypt(psi, k).amplitudes
                rho += np.outer(v, v.conj())
            dev = float(np.max(np.abs(rho / len(keys) - np.eye(1 << n) / (1 << n))))
            worst = max(worst, dev)
            total += 1
            if dev <= tol:
                passed += 1
            else:
                failures.append({"n": n, "state": i, "deviation": dev})
    return SuiteResult("qotp", passed, total, failures, {"max_deviation": worst})


def ternary_unbiasedness(samples: int = 100_000, seed: int = 0) -> SuiteResult:
    """Per-coordinate mean of ``s*t`` within ``4 s / sqrt(M)`` of ``g``, plus wire sizes."""
    rng = np.random.default_rng(seed)
    g = np.array([1.0, -0.75, 0.5, -0.25, 0.1, -0.01, 0.0, 0.9])
    s = float(np.float32(np.max(np.abs(g))))
    total = np.zeros(g.size, dtype=np.int64)
    wire_bad = 0
    for i in range(samples):
        u = ternarize(g, rng)
        total += u.dense()
        if i < 2000:
            data = serialize(u)
            if len(data) != 17 + 4 * u.nnz or deserialize(data) != u:
                wire_bad += 1
    mean = s * total / samples
    bound = 4 * s / math.sqrt(samples)
    err = np.abs(mean - g)
    failures = [{"coord": int(i), "error": float(err[i]), "bound": bound}
                for i in np.flatnonzero(err > bound)]
    if wire_bad:
        failures.append({"wire_mismatches": wire_bad})
    passed = int(np.sum(err <= bound)) + (1 if not wire_bad else 0)
    return SuiteResult("terngrad", passed, g.size + 1, failures,
                       {"max_error": float(err.max()), "bound": bound})


SUITES = {"qhe": qhe_round_trips, "qotp": qotp_hiding, "terngrad": ternary_unbiasedness}
