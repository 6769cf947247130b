"""Federated rounds with encrypted aggregation.

Two workflows share one round skeleton:

* ``baseline``: every client pads its operand registers under its own QOTP
  key, uploads the key bits under CHE, and the server tracks the key updates
  homomorphically while it runs the adder.
* ``cryptoqfl``: clients share one QOTP key per parameter per round, upload
  only ciphertext registers and replay the adder's key-update rules locally.
  The server does no CHE work.

Both keep the gadget for the CCX corrections, so the server-side quantum
work is the same and the decrypted aggregates are identical.

Gradients travel as integers in basis-state registers: ternary digits by
default, or dense stochastic fixed-point digits for comparison runs. Every
latency figure is a modeled cost unit, never wall-clock time. Client steps
run in parallel (the slowest client counts), server steps add up.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .aggadder import (
    AdderCircuit, GateCostModel, aggregate_encrypted, aggregation_latency, build_adder,
    decode_operand, encode_operand, zero_register,
)
from .che import CHEBIT_BYTES, CheCostModel, CheEvaluator, che_keygen
from .meter import LatencyMeter
from .qhe import CheKeyView, ClientKeyView, GadgetOracle, QCiphertext, trace_keys
from .qnn import (
    Ansatz, ClassifyTask, Dataset, QCOTask, StatePrepTask, embed, evaluate, gaussian_blobs,
    noisy_targets, sgd_step, synthetic_returns, task_grad,
)
from .qotp import PauliKey, keygen, qotp_decrypt, qotp_encrypt
from .qsim import BasisState
from .terngrad import HEADER_BYTES, dequantize, ternarize, wire_size

STEPS = ("local_train", "qotp_encrypt", "che_compute", "upload", "aggregate",
         "download", "decrypt", "model_update")
WORKFLOWS = ("baseline", "cryptoqfl", "centralized")
TASKS = ("classify", "stateprep", "qco")
DEFAULT_QUBITS = {"classify": 4, "stateprep": 2, "qco": 4}
SCALE_BYTES = 4
PAULI_COST = 1


class FedError(ValueError):
    pass


@dataclass(frozen=True)
class FedConfig:
    task: str = "classify"
    workflow: str = "cryptoqfl"
    n_clients: int = 8
    rounds: int = 60
    n_qubits: int = 0  # 0 picks the task default
    n_layers: int = 2
    shard_size: int = 25
    batch_size: int = 8
    test_size: int = 200
    lr: float = 1.5
    lr_decay: float = 0.08  # lr_t = lr / (1 + lr_decay * t)
    width: int = 0  # 0 picks the smallest safe width
    quantization: str = "ternary"  # or "dense"
    dense_bits: int = 5
    seed: int = 0
    link_cost_per_byte: float = 0.01
    gadget_latency: float = 25
    che_encrypt: int = 10
    che_xor: int = 1
    che_and: int = 100
    che_decrypt: int = 10
    cost_cx: float = 1
    cost_ccx: float = 5
    cost_reset: float = 0.1

    def __post_init__(self):
        if self.task not in TASKS:
            raise FedError(f"unknown task {self.task!r}")
        if self.workflow not in WORKFLOWS:
            raise FedError(f"unknown workflow {self.workflow!r}")
        if self.quantization not in ("ternary", "dense"):
            raise FedError(f"unknown quantization {self.quantization!r}")
        if self.workflow == "cryptoqfl" and self.quantization != "ternary":
            raise FedError("the cryptoqfl workflow requires ternary updates")
        if self.workflow != "centralized" and self.n_clients < 2:
            raise FedError("federated workflows need at least 2 clients")
        if self.n_qubits < 0:
            raise FedError("n_qubits must be non-negative")
        for name in ("n_clients", "rounds", "n_layers", "shard_size", "batch_size", "test_size"):
            if getattr(self, name) < 1:
                raise FedError(f"{name} must be positive")
        if self.batch_size > self.shard_size:
            raise FedError("batch_size exceeds shard_size")
        if not 2 <= self.dense_bits <= 8:
            raise FedError("dense_bits must be in [2, 8]")
        if self.lr <= 0:
            raise FedError("lr must be positive")
        if self.lr_decay < 0:
            raise FedError("lr_decay must be non-negative")

    def lr_at(self, round_idx: int) -> float:
        return self.lr / (1 + self.lr_decay * round_idx)

    @property
    def qubits(self) -> int:
        return self.n_qubits or DEFAULT_QUBITS[self.task]

    @property
    def levels(self) -> int:
        """Largest digit magnitude one client may send."""
        return 1 if self.quantization == "ternary" else (1 << (self.dense_bits - 1)) - 1

    def required_width(self) -> int:
        return math.ceil(math.log2(self.n_clients * self.levels + 1)) + 1

    def resolved_width(self) -> int:
        need = self.required_width()
        if self.width and self.width < need:
            raise FedError(f"width {self.width} overflows for {self.n_clients} clients (need {need})")
        return self.width or need

    def gate_model(self) -> GateCostModel:
        return GateCostModel(
            cost={"CX": self.cost_cx, "CCX": self.cost_ccx, "RESET": self.cost_reset},
            latency={"CX": self.cost_cx, "CCX": self.cost_ccx, "RESET": self.cost_reset},
        )

    def che_model(self) -> CheCostModel:
        return CheCostModel(self.che_encrypt, self.che_xor, self.che_and, self.che_decrypt)

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


# ---------------------------------------------------------------- state


@dataclass
class ClientState:
    client_id: int
    params: np.ndarray
    shard: Dataset
    rng: np.random.Generator
    key_rng: np.random.Generator


@dataclass
class ServerState:
    """Everything the aggregator sees. Holds ciphertexts and sealed evaluators only."""

    adder: AdderCircuit
    gadget: GadgetOracle
    registers: dict = field(default_factory=dict)
    che_views: dict = field(default_factory=dict)
    che_evaluator: CheEvaluator | None = None


@dataclass
class RoundMetrics:
    round: int
    latency: dict
    bytes_up: dict
    bytes_down: dict
    loss: float
    accuracy: float
    aggregate: np.ndarray = field(repr=False, default=None)
    nnz: dict = field(default_factory=dict)
    scale: float = 0.0
    server_che: float = 0.0

    @property
    def total(self) -> float:
        return float(sum(self.latency.values()))

    def shares(self) -> dict:
        tot = self.total
        return {k: (v / tot if tot else 0.0) for k, v in self.latency.items()}


@dataclass
class ExperimentResult:
    config: FedConfig
    rounds: list
    params: np.ndarray
    final_loss: float
    final_accuracy: float
    key_trace: str = ""

    def metrics_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["round", "step", "latency_units", "bytes_up", "bytes_down", "loss", "accuracy"])
        for m in self.rounds:
            up = sum(m.bytes_up.values())
            down = sum(m.bytes_down.values())
            for step in STEPS:
                w.writerow([m.round, step, repr(float(m.latency[step])),
                            up if step == "upload" else 0, down if step == "download" else 0,
                            repr(m.loss), repr(m.accuracy)])
        return buf.getvalue()

    def summary(self) -> dict:
        breakdown = {s: float(sum(m.latency[s] for m in self.rounds)) for s in STEPS}
        total_bytes = sum(sum(m.bytes_up.values()) + sum(m.bytes_down.values()) for m in self.rounds)
        return {
            "config_hash": self.config.digest(),
            "rounds": len(self.rounds),
            "final_accuracy": self.final_accuracy,
            "latency_breakdown": breakdown,
            "bytes_total": int(total_bytes),
        }


# ---------------------------------------------------------------- setup


def make_task(config: FedConfig):
    ansatz = Ansatz(config.qubits, config.n_layers)
    if config.task == "classify":
        return ClassifyTask(ansatz, 2)
    if config.task == "stateprep":
        return StatePrepTask(ansatz)
    return QCOTask(ansatz)


def make_data(config: FedConfig, n_samples: int, rng: np.random.Generator) -> Dataset:
    if config.task == "classify":
        return gaussian_blobs(n_samples, config.qubits, rng)
    if config.task == "stateprep":
        return noisy_targets(n_samples, config.qubits, rng)
    return synthetic_returns(n_samples, config.qubits, rng)


def _streams(seed: int):
    root = np.random.SeedSequence(seed)
    data, init, clients, keys, che, shared = root.spawn(6)
    return data, init, clients, keys, che, shared


def setup(config: FedConfig):
    """Build the task, clients (with disjoint shards), test set and server."""
    data_ss, init_ss, client_ss, key_ss, che_ss, shared_ss = _streams(config.seed)
    data_rng = np.random.default_rng(data_ss)
    task = make_task(config)
    n_clients = 1 if config.workflow == "centralized" else config.n_clients
    shard = config.shard_size * (config.n_clients if config.workflow == "centralized" else 1)
    pool = make_data(config, n_clients * shard, data_rng)
    test = make_data(config, config.test_size, data_rng)
    params = task.ansatz.init_params(np.random.default_rng(init_ss))
    clients = []
    for j, (css, kss) in enumerate(zip(client_ss.spawn(n_clients), key_ss.spawn(n_clients))):
        idx = np.arange(j * shard, (j + 1) * shard)
        clients.append(ClientState(j, params.copy(), pool.subset(idx),
                                   np.random.default_rng(css), np.random.default_rng(kss)))
    server = None
    che_kp = None
    if config.workflow != "centralized":
        width = config.resolved_width()
        server = ServerState(build_adder(width), GadgetOracle(config.gadget_latency))
        if config.workflow == "baseline":
            # one CHE keypair held jointly by the clients; the server only gets the sealed evaluator
            che_rng = np.random.default_rng(che_ss)
            che_kp = che_keygen(che_rng)
            server.che_evaluator = CheEvaluator(che_kp, config.che_model(), rng=che_rng)
    shared_rng = np.random.default_rng(shared_ss)
    return task, clients, test, server, che_kp, shared_rng


# ---------------------------------------------------------------- client side


def local_gradients(task, clients, config: FedConfig):
    """Mini-batch gradient per client and the modeled training latency."""
    grads = []
    n_gates = len(task.ansatz.circuit(clients[0].params).gates) + len(embed([0.0] * config.qubits).gates)
    for c in clients:
        idx = c.rng.choice(len(c.shard), size=config.batch_size, replace=False)
        grads.append(task_grad(task, c.params, c.shard.subset(np.sort(idx))))
    evals = (2 * task.ansatz.n_params + 1) * config.batch_size
    return np.array(grads), float(evals * n_gates)


def quantize(grads: np.ndarray, clients, config: FedConfig):
    """Integer digits per client under one common scale.

    The common scale is the maximum of the clients' local scales, agreed by
    exchanging one float each before quantizing, so every client stays
    unbiased.
    """
    scale = float(np.float32(np.max(np.abs(grads))))
    digits = []
    for c, g in zip(clients, grads):
        if config.quantization == "ternary":
            digits.append(ternarize(g, c.rng, scale=scale).dense())
        else:
            q = config.levels
            u = c.rng.random(g.size)
            x = g / scale * q if scale > 0 else np.zeros_like(g)
            lo = np.floor(x)
            digits.append((lo + (u < x - lo)).astype(np.int64))
    return np.array(digits), scale


def _payload_bytes(n_qubits: int) -> int:
    # a qubit register is charged like the classical bits it carries
    return math.ceil(n_qubits / 8)


def _client_entries(digits_row: np.ndarray, config: FedConfig) -> list[int]:
    if config.quantization == "ternary":
        return [int(i) for i in np.flatnonzero(digits_row)]
    return list(range(digits_row.size))


# ---------------------------------------------------------------- rounds


def _operand(value: int, width: int) -> BasisState:
    return BasisState(width, sum(b << i for i, b in enumerate(encode_operand(value, width))))


def _run_round(workflow: str, task, clients, server: ServerState, config: FedConfig,
               che_kp, shared_rng, round_idx: int, test: Dataset | None, grads=None):
    if workflow not in ("baseline", "cryptoqfl"):
        raise FedError(f"unknown workflow {workflow!r}")
    if len(clients) != config.n_clients:
        raise FedError("client dropout is not supported: every client must participate")
    if len(clients) < 2:
        raise FedError("need at least 2 clients")
    adder = server.adder
    width = adder.width
    n_reg = adder.n_qubits
    link = config.link_cost_per_byte
    gm = config.gate_model()
    che = config.che_model()
    P = task.ansatz.n_params
    lat = dict.fromkeys(STEPS, 0.0)
    up, down = {}, {}

    if grads is None:
        grads, train_cost = local_gradients(task, clients, config)
    else:
        grads, train_cost = np.asarray(grads, dtype=float), 0.0
    lat["local_train"] = train_cost
    digits, scale = quantize(grads, clients, config)
    if np.any(np.abs(digits.sum(0)) > (1 << (width - 1)) - 1):
        raise FedError("aggregate overflows the register width")

    # step: encryption on every client
    shared = [keygen(width, shared_rng) for _ in range(P)] if workflow == "cryptoqfl" else None
    uploads = {}  # param -> list of (ciphertext, key view) in client order
    enc_cost, che_client_cost, entries = [], [], {}
    for c in clients:
        mine = _client_entries(digits[c.client_id], config)
        entries[c.client_id] = len(mine)
        for p in mine:
            key = shared[p] if shared is not None else keygen(width, c.key_rng)
            ct = QCiphertext(qotp_encrypt(_operand(int(digits[c.client_id, p]), width), key), f"c{c.client_id}p{p}")
            if workflow == "baseline":
                view = CheKeyView.encrypt(key, che_kp, server.che_evaluator, c.key_rng)
            else:
                view = ClientKeyView(key)
            uploads.setdefault(p, []).append((ct, view))
        enc_cost.append(2 * width * len(mine) * PAULI_COST)
        che_client_cost.append(2 * width * len(mine) * che.cost_encrypt if workflow == "baseline" else 0)
        framing = wire_size(len(mine)) if config.quantization == "ternary" else HEADER_BYTES
        key_bytes = 2 * width * len(mine) * CHEBIT_BYTES if workflow == "baseline" else 0
        up[c.client_id] = framing + _payload_bytes(width * len(mine)) + key_bytes + SCALE_BYTES
    lat["qotp_encrypt"] = float(max(enc_cost))
    lat["upload"] = max(up.values()) * link

    # step: server aggregation, ascending client id within each parameter
    gmeter = LatencyMeter()
    server.gadget.meter = gmeter
    che_meter = LatencyMeter()
    client_meter = LatencyMeter()
    if workflow == "baseline":
        server.che_evaluator.meter = che_meter
    trackers = {}
    agg_cost = 0.0
    for p in range(P):
        ops = uploads.get(p, [])
        acc = QCiphertext(zero_register(adder), f"acc{p}")
        if workflow == "baseline":
            view = CheKeyView.public_zero(n_reg, server.che_evaluator)
        else:
            view = ClientKeyView(PauliKey.zeros(n_reg), meter=client_meter, xor_cost=che.cost_xor)
        acc = aggregate_encrypted(ops, acc, view, server.gadget, adder)
        server.registers[p] = acc
        if workflow == "baseline":
            server.che_views[p] = view
        else:
            trackers[p] = view
        agg_cost += aggregation_latency(adder, len(ops), gm)
    lat["aggregate"] = agg_cost + gmeter.total
    server_che = float(che_meter.total)
    if workflow == "baseline":
        lat["che_compute"] = float(max(che_client_cost)) + server_che
    else:
        # every client replays the same public gate sequence; they run in parallel
        lat["che_compute"] = float(client_meter.total)

    # step: download of the accumulators (and their CHE keys in the baseline)
    acc_bytes = P * _payload_bytes(width)
    key_bytes = P * 2 * width * CHEBIT_BYTES if workflow == "baseline" else 0
    for c in clients:
        down[c.client_id] = acc_bytes + key_bytes + SCALE_BYTES
    lat["download"] = max(down.values()) * link

    # step: decryption, identical on every client
    sums = np.zeros(P, dtype=np.int64)
    for p in range(P):
        if workflow == "baseline":
            key = server.che_views[p].decrypt(che_kp)
        else:
            key = trackers[p].client_key()
        plain = qotp_decrypt(server.registers[p].state, key)
        sums[p] = decode_operand([plain.bit(q) for q in adder.accumulator])
    dec = 2 * n_reg * P * PAULI_COST
    if workflow == "baseline":
        dec += 2 * n_reg * P * che.cost_decrypt
    lat["decrypt"] = float(dec)

    # step: model update
    avg = dequantize(sums, scale, config.n_clients) / config.levels
    for c in clients:
        c.params = sgd_step(c.params, avg, config.lr_at(round_idx), task.ansatz.periods)
    lat["model_update"] = float(P)

    loss, acc = evaluate(task, clients[0].params, test) if test is not None else (float("nan"),) * 2
    return clients, RoundMetrics(round_idx, lat, up, down, loss, acc, sums, entries, scale, server_che)


def run_round_baseline(task, clients, server, config, che_kp, shared_rng, round_idx=0, test=None,
                       grads=None):
    """One baseline round. ``grads`` (clients x params) replaces local training when given."""
    return _run_round("baseline", task, clients, server, config, che_kp, shared_rng, round_idx,
                      test, grads)


def run_round_cryptoqfl(task, clients, server, config, che_kp, shared_rng, round_idx=0, test=None,
                        grads=None):
    """One optimized round; same contract as :func:`run_round_baseline`."""
    return _run_round("cryptoqfl", task, clients, server, config, che_kp, shared_rng, round_idx,
                      test, grads)


def run_round_centralized(task, clients, config: FedConfig, round_idx=0, test=None):
    """Reference round: one party, full-precision gradient, no encryption."""
    c = clients[0]
    lat = dict.fromkeys(STEPS, 0.0)
    batch = config.batch_size * config.n_clients
    idx = np.sort(c.rng.choice(len(c.shard), size=batch, replace=False))
    g = task_grad(task, c.params, c.shard.subset(idx))
    n_gates = len(task.ansatz.circuit(c.params).gates) + config.qubits
    lat["local_train"] = float((2 * task.ansatz.n_params + 1) * batch * n_gates)
    c.params = sgd_step(c.params, g, config.lr_at(round_idx), task.ansatz.periods)
    lat["model_update"] = float(task.ansatz.n_params)
    loss, acc = evaluate(task, c.params, test) if test is not None else (float("nan"),) * 2
    return clients, RoundMetrics(round_idx, lat, {0: 0}, {0: 0}, loss, acc, g)


def run_experiment(config: FedConfig) -> ExperimentResult:
    """Multi-round training with evaluation on the held-out set after each round."""
    task, clients, test, server, che_kp, shared_rng = setup(config)
    history = []
    for r in range(config.rounds):
        if config.workflow == "centralized":
            clients, m = run_round_centralized(task, clients, config, r, test)
        else:
            clients, m = _run_round(config.workflow, task, clients, server, config, che_kp,
                                    shared_rng, r, test)
        history.append(m)
    params = clients[0].params
    loss, acc = evaluate(task, params, test)
    trace = ""
    if server is not None:
        trace = trace_keys(server.adder.circuit, keygen(server.adder.n_qubits, np.random.default_rng(config.seed))).dump()
    return ExperimentResult(config, history, params, loss, acc, trace)


def sweep_clients(config: FedConfig, client_counts, seeds) -> list[dict]:
    """Final accuracy for each (client count, seed) with the per-client shard size fixed."""
    from dataclasses import replace

    rows = []
    for n in client_counts:
        for s in seeds:
            res = run_experiment(replace(config, n_clients=n, seed=s))
            rows.append({"n_clients": n, "seed": s, "final_accuracy": res.final_accuracy,
                         "final_loss": res.final_loss})
    return rows


def smooth(values, window: int = 5) -> np.ndarray:
    """Trailing moving average; the first ``window - 1`` points are dropped."""
    v = np.asarray(values, dtype=float)
    if v.size < window:
        return v.copy()
    return np.convolve(v, np.ones(window) / window, mode="valid")
