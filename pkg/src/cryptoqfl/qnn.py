"""Variational quantum circuits: embedding, ansatz, losses, parameter-shift gradients.

The ansatz is hardware-efficient: each layer applies RY then RZ on every
qubit followed by a ring of CX gates. Parameters are ordered layer by layer,
RY slots before RZ slots, qubit-ascending within each block.

Single-circuit evaluation (:func:`forward`) goes through :mod:`qsim`.
Training uses a vectorized simulator that evaluates every shifted parameter
set for a whole batch in one pass; tests hold the two paths equal.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .qsim import Circuit, Gate, StateVector, expectation_z, run_circuit
from .terngrad import cyclic_wrap

SHIFT = math.pi / 2
CHECKPOINT_MAGIC = b"QNNC"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class Ansatz:
    n_qubits: int
    n_layers: int

    def __post_init__(self):
        if self.n_qubits < 1 or self.n_layers < 1:
            raise ValueError("ansatz needs at least one qubit and one layer")

    @property
    def n_params(self) -> int:
        return 2 * self.n_qubits * self.n_layers

    @property
    def periods(self) -> np.ndarray:
        return np.full(self.n_params, 2 * math.pi)

    def slots(self) -> list[tuple[str, int]]:
        """(gate kind, qubit) for every parameter, in parameter order."""
        out = []
        for _ in range(self.n_layers):
            out += [("RY", q) for q in range(self.n_qubits)]
            out += [("RZ", q) for q in range(self.n_qubits)]
        return out

    def entanglers(self) -> list[tuple[int, int]]:
        n = self.n_qubits
        if n == 1:
            return []
        if n == 2:
            return [(0, 1)]
        return [(q, (q + 1) % n) for q in range(n)]

    def circuit(self, params) -> Circuit:
        params = np.asarray(params, dtype=float)
        if params.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {params.shape}")
        gates = []
        k = 0
        for _ in range(self.n_layers):
            for kind in ("RY", "RZ"):
                for q in range(self.n_qubits):
                    gates.append(Gate(kind, (q,), params[k]))
                    k += 1
            gates += [Gate("CX", pair) for pair in self.entanglers()]
        return Circuit(self.n_qubits, gates)

    def init_params(self, rng: np.random.Generator, spread: float = 0.1) -> np.ndarray:
        return rng.uniform(-spread, spread, self.n_params)


def embed(x, n_qubits: int | None = None) -> Circuit:
    """Angle encoding: RY(x_j) on qubit j."""
    x = np.asarray(x, dtype=float)
    n = x.size if n_qubits is None else n_qubits
    if x.size > n:
        raise ValueError(f"{x.size} features do not fit on {n} qubits")
    return Circuit(n, [Gate("RY", (j,), xj) for j, xj in enumerate(x)])


def forward(ansatz: Ansatz, params, x, n_classes: int = 2, shots: int | None = None,
            rng: np.random.Generator | None = None) -> np.ndarray:
    """Logits ``<Z_c>`` for the first ``n_classes`` qubits.

    Exact by default; with ``shots`` each expectation is estimated from that
    many Born-rule samples.
    """
    circ = embed(x, ansatz.n_qubits) + ansatz.circuit(params)
    state = run_circuit(circ, StateVector.zero(ansatz.n_qubits))
    if shots is None:
        return np.array([expectation_z(state, c) for c in range(n_classes)])
    if rng is None:
        raise ValueError("shot sampling needs an rng")
    counts = rng.multinomial(shots, state.probabilities())
    idx = np.arange(counts.size)
    return np.array([np.dot(1 - 2 * ((idx >> c) & 1), counts) / shots for c in range(n_classes)])


def loss(logits, label: int) -> float:
    """Softmax cross-entropy."""
    z = np.asarray(logits, dtype=float)
    m = z.max()
    return float(m + math.log(np.exp(z - m).sum()) - z[label])


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def sgd_step(params, grad, lr: float, periods=2 * math.pi) -> np.ndarray:
    return cyclic_wrap(np.asarray(params, dtype=float) - lr * np.asarray(grad, dtype=float), periods)


# ---------------------------------------------------------------- batched simulation


def _ry(theta: np.ndarray) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2).astype(complex)


def _rz(theta: np.ndarray) -> np.ndarray:
    u = np.zeros(theta.shape + (2, 2), dtype=complex)
    u[..., 0, 0] = np.exp(-0.5j * theta)
    u[..., 1, 1] = np.exp(0.5j * theta)
    return u


def embed_states(X: np.ndarray, n_qubits: int) -> np.ndarray:
    """(B, 2^n) product states RY(x_j)|0> for a batch of feature rows."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    psi = np.ones((X.shape[0], 1), dtype=complex)
    for q in range(n_qubits):
        xq = X[:, q] if q < X.shape[1] else np.zeros(X.shape[0])
        single = np.stack([np.cos(xq / 2), np.sin(xq / 2)], -1)
        # qubit q is the more significant factor as q grows
        psi = (single[:, :, None] * psi[:, None, :]).reshape(X.shape[0], -1)
    return psi


def simulate_batch(ansatz: Ansatz, param_sets: np.ndarray, init: np.ndarray) -> np.ndarray:
    """Run the ansatz for S parameter sets on B initial states -> (S, B, 2^n)."""
    param_sets = np.atleast_2d(param_sets)
    n = ansatz.n_qubits
    S, B, dim = param_sets.shape[0], init.shape[0], 1 << n
    psi = np.broadcast_to(init, (S, B, dim)).astype(complex)
    k = 0
    idx = np.arange(dim)
    for _ in range(ansatz.n_layers):
        for make in (_ry, _rz):
            for q in range(n):
                u = make(param_sets[:, k])
                k += 1
                v = psi.reshape(S, B, dim >> (q + 1), 2, 1 << q)
                psi = np.einsum("sij,sbhjl->sbhil", u, v).reshape(S, B, dim)
        for c, t in ansatz.entanglers():
            perm = np.where((idx >> c) & 1, idx ^ (1 << t), idx)
            psi = psi[..., perm]
    return psi


def z_expectations(psi: np.ndarray, n_out: int) -> np.ndarray:
    p = np.abs(psi) ** 2
    n_states = p.shape[-1]
    idx = np.arange(n_states)
    signs = np.stack([1 - 2 * ((idx >> c) & 1) for c in range(n_out)], -1)
    return p @ signs


def shifted_param_sets(params: np.ndarray) -> np.ndarray:
    """Rows: params, then params +- pi/2 on each coordinate (interleaved)."""
    P = params.size
    sets = np.tile(params, (2 * P + 1, 1))
    for k in range(P):
        sets[1 + 2 * k, k] += SHIFT
        sets[2 + 2 * k, k] -= SHIFT
    return sets


# ---------------------------------------------------------------- tasks


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.y = np.asarray(self.y, dtype=np.int64)
        if len(self.X) != len(self.y):
            raise ValueError("features and labels differ in length")

    def __len__(self):
        return len(self.y)

    def subset(self, idx) -> Dataset:
        return Dataset(self.X[idx], self.y[idx])

    def to_csv(self, path):
        d = self.X.shape[1]
        lines = [",".join([f"x{j}" for j in range(d)] + ["label"])]
        for row, label in zip(self.X, self.y):
            lines.append(",".join([repr(float(v)) for v in row] + [str(int(label))]))
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path) -> Dataset:
        rows = Path(path).read_text().strip().splitlines()
        header = rows[0].split(",")
        if header[-1] != "label":
            raise ValueError("last CSV column must be 'label'")
        data = [r.split(",") for r in rows[1:]]
        return cls([[float(v) for v in r[:-1]] for r in data], [int(r[-1]) for r in data])


@dataclass
class ClassifyTask:
    """Softmax cross-entropy over ``<Z_c>`` logits of angle-encoded features."""

    ansatz: Ansatz
    n_classes: int = 2
    name: str = "classify"

    def __post_init__(self):
        if self.n_classes > self.ansatz.n_qubits:
            raise ValueError("more classes than readout qubits")

    def outputs(self, param_sets, data: Dataset) -> np.ndarray:
        init = embed_states(data.X, self.ansatz.n_qubits)
        return z_expectations(simulate_batch(self.ansatz, param_sets, init), self.n_classes)

    def loss_from_outputs(self, out: np.ndarray, data: Dataset):
        """Per-sample losses and their gradients w.r.t. the outputs."""
        prob = _softmax(out)
        picked = prob[np.arange(len(data)), data.y]
        onehot = np.eye(self.n_classes)[data.y]
        return -np.log(picked), prob - onehot

    def accuracy(self, params, data: Dataset) -> float:
        out = self.outputs(params[None], data)[0]
        return float(np.mean(out.argmax(-1) == data.y))


@dataclass
class StatePrepTask:
    """Infidelity ``1 - |<target|psi(theta)>|^2`` from |0...0>, averaged over targets."""

    ansatz: Ansatz
    name: str = "stateprep"

    def outputs(self, param_sets, data: Dataset) -> np.ndarray:
        dim = 1 << self.ansatz.n_qubits
        init = np.zeros((1, dim), dtype=complex)
        init[0, 0] = 1
        psi = simulate_batch(self.ansatz, param_sets, init)[:, 0]
        targets = data.X[:, :dim] + 1j * data.X[:, dim:]
        return (np.abs(psi.conj() @ targets.T) ** 2)[..., None]

    def loss_from_outputs(self, out, data):
        return 1 - out[:, 0], -np.ones_like(out)

    def accuracy(self, params, data) -> float:
        return float(np.mean(self.outputs(params[None], data)[0, :, 0]))


@dataclass
class QCOTask:
    """Quadratic binary optimization: normalized expectation of a diagonal cost.

    ``data.X`` holds return samples (one asset per column); the cost of a
    selection ``b`` is ``risk * b^T Cov b - mu^T b + penalty * (sum b - budget)^2``
    with mean and covariance estimated from the rows given.
    """

    ansatz: Ansatz
    risk: float = 1.0
    budget: int = 2
    penalty: float = 1.0
    name: str = "qco"
    _reference: np.ndarray | None = field(default=None, repr=False)

    def costs(self, data: Dataset) -> np.ndarray:
        n = self.ansatz.n_qubits
        mu = data.X.mean(0)
        cov = np.cov(data.X.T) if len(data) > 1 else np.zeros((n, n))
        idx = np.arange(1 << n)
        b = ((idx[:, None] >> np.arange(n)) & 1).astype(float)
        c = self.risk * np.einsum("ki,ij,kj->k", b, cov, b) - b @ mu
        return c + self.penalty * (b.sum(1) - self.budget) ** 2

    def outputs(self, param_sets, data):
        dim = 1 << self.ansatz.n_qubits
        init = np.zeros((1, dim), dtype=complex)
        init[0, 0] = 1
        c = self.costs(data)
        c = (c - c.min()) / (c.max() - c.min())
        psi = simulate_batch(self.ansatz, param_sets, init)[:, 0]
        return (np.abs(psi) ** 2 @ c)[:, None, None]

    def loss_from_outputs(self, out, data):
        return out[:, 0], np.ones_like(out)

    def accuracy(self, params, data) -> float:
        """Approximation quality ``1 - E[normalized cost]``; 1 means all mass on the optimum."""
        return float(1 - self.outputs(np.asarray(params)[None], data)[0, 0, 0])


def evaluate(task, params, data: Dataset) -> tuple[float, float]:
    out = task.outputs(np.asarray(params)[None], data)[0]
    losses, _ = task.loss_from_outputs(out, data)
    return float(np.mean(losses)), task.accuracy(np.asarray(params), data)


def task_grad(task, params, batch: Dataset) -> np.ndarray:
    """Batch-averaged parameter-shift gradient of the task loss."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    params = np.asarray(params, dtype=float)
    out = task.outputs(shifted_param_sets(params), batch)  # (2P+1, B, K)
    _, dl_dout = task.loss_from_outputs(out[0], batch)  # (B, K)
    dout = (out[1::2] - out[2::2]) / 2  # (P, B, K)
    return np.einsum("pbk,bk->p", dout, dl_dout) / dl_dout.shape[0]


def parameter_shift_grad(ansatz: Ansatz, params, batch: Dataset, n_classes: int = 2) -> np.ndarray:
    return task_grad(ClassifyTask(ansatz, n_classes), params, batch)


# ---------------------------------------------------------------- data


def gaussian_blobs(n_samples: int, n_features: int, rng: np.random.Generator,
                   spread: float = 0.45) -> Dataset:
    """Two Gaussian classes in ``[0, pi]^d`` centred at pi/4 and 3pi/4 per feature."""
    y = rng.integers(0, 2, n_samples)
    centres = np.where(y[:, None] == 0, math.pi / 4, 3 * math.pi / 4)
    X = np.clip(centres + spread * rng.normal(size=(n_samples, n_features)), 0, math.pi)
    return Dataset(X, y)


def noisy_targets(n_samples: int, n_qubits: int, rng: np.random.Generator,
                  noise: float = 0.05, target: np.ndarray | None = None) -> Dataset:
    """Noisy copies of one target state, stored as [Re | Im] feature rows."""
    dim = 1 << n_qubits
    if target is None:
        target = StateVector.random(n_qubits, np.random.default_rng(1234)).amplitudes
    rows = []
    for _ in range(n_samples):
        v = target + noise * (rng.normal(size=dim) + 1j * rng.normal(size=dim))
        v = v / np.linalg.norm(v)
        rows.append(np.concatenate([v.real, v.imag]))
    return Dataset(np.array(rows), np.zeros(n_samples, dtype=np.int64))


def synthetic_returns(n_samples: int, n_assets: int, rng: np.random.Generator) -> Dataset:
    """Correlated asset returns from a fixed factor model."""
    base = np.random.default_rng(4321)
    mu = base.uniform(0.0, 0.6, n_assets)
    load = base.normal(scale=0.3, size=(n_assets, 2))
    X = mu + rng.normal(size=(n_samples, 2)) @ load.T + 0.1 * rng.normal(size=(n_samples, n_assets))
    return Dataset(X, np.zeros(n_samples, dtype=np.int64))


# ---------------------------------------------------------------- checkpoints


def save_checkpoint(path, params):
    params = np.asarray(params, dtype="<f8")
    header = CHECKPOINT_MAGIC + struct.pack("<III", CHECKPOINT_VERSION, params.size, 0)
    Path(path).write_bytes(header + params.tobytes())


def load_checkpoint(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 16 or data[:4] != CHECKPOINT_MAGIC:
        raise ValueError("not a checkpoint file")
    version, count, _ = struct.unpack_from("<III", data, 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    if len(data) != 16 + 8 * count:
        raise ValueError("checkpoint length does not match its header")
    return np.frombuffer(data, dtype="<f8", offset=16).copy()
