import math

import numpy as np
import pytest

from cryptoqfl.qnn import (
    Ansatz, ClassifyTask, Dataset, QCOTask, StatePrepTask, embed, embed_states, evaluate, forward,
    gaussian_blobs, load_checkpoint, loss, noisy_targets, parameter_shift_grad, save_checkpoint,
    sgd_step, shifted_param_sets, simulate_batch, synthetic_returns, task_grad, z_expectations,
)
from cryptoqfl.qsim import Gate, StateVector, run_circuit

from conftest import dense_gate


def dense_forward(ansatz, params, x, n_classes):
    # independent oracle: product of Kronecker-built gate matrices
    n = ansatz.n_qubits
    u = np.eye(1 << n, dtype=complex)
    for g in embed(x, n).gates + ansatz.circuit(params).gates:
        u = dense_gate(n, g) @ u
    psi = u[:, 0]
    probs = np.abs(psi) ** 2
    idx = np.arange(1 << n)
    return np.array([np.sum(probs * (1 - 2 * ((idx >> c) & 1))) for c in range(n_classes)])


def test_ansatz_shape():
    a = Ansatz(4, 2)
    assert a.n_params == 16 and len(a.slots()) == 16
    assert np.all(a.periods == 2 * math.pi)
    circ = a.circuit(np.zeros(16))
    assert circ.count("CX") == 8 and circ.count("RY") == 8
    assert Ansatz(2, 1).entanglers() == [(0, 1)]
    with pytest.raises(ValueError):
        a.circuit(np.zeros(3))


def test_embed_examples():
    zero = run_circuit(embed([0.0, 0.0]), StateVector.zero(2))
    assert abs(zero.amplitudes[0]) == pytest.approx(1)
    flipped = run_circuit(embed([math.pi, 0.0]), StateVector.zero(2))
    assert abs(flipped.amplitudes[1]) == pytest.approx(1)


def test_forward_examples(rng):
    a = Ansatz(2, 1)
    assert np.allclose(forward(a, np.zeros(4), [0, 0]), [1, 1])
    single = Ansatz(1, 1)
    assert forward(single, np.array([math.pi, 0.0]), [0.0], n_classes=1)[0] == pytest.approx(-1)
    for _ in range(10):
        a = Ansatz(3, 2)
        p = rng.uniform(-math.pi, math.pi, a.n_params)
        x = rng.uniform(0, math.pi, 3)
        assert np.allclose(forward(a, p, x, 2), dense_forward(a, p, x, 2), atol=1e-12)


def test_loss_examples():
    assert loss(np.array([0.3, 0.3]), 0) == pytest.approx(math.log(2))
    assert loss(np.array([1.0, -1.0]), 0) < loss(np.array([-1.0, 1.0]), 0)
    for z, y in [([0.2, -0.4], 0), ([1, 1], 1), ([0.5, 0.1], 1), ([-1, 0.7], 0), ([0, 0.9], 1)]:
        z = np.array(z, dtype=float)
        ref = -z[y] + math.log(sum(math.exp(v) for v in z))
        assert loss(z, y) == pytest.approx(ref)


def test_batch_simulator_matches_circuit_path(rng):
    a = Ansatz(3, 2)
    params = rng.uniform(-3, 3, (4, a.n_params))
    X = rng.uniform(0, math.pi, (5, 3))
    out = z_expectations(simulate_batch(a, params, embed_states(X, 3)), 2)
    for s in range(4):
        for b in range(5):
            assert np.allclose(out[s, b], forward(a, params[s], X[b], 2), atol=1e-12)


def test_shifted_param_sets():
    p = np.array([0.1, 0.2])
    sets = shifted_param_sets(p)
    assert sets.shape == (5, 2)
    assert np.allclose(sets[1], [0.1 + math.pi / 2, 0.2])
    assert np.allclose(sets[4], [0.1, 0.2 - math.pi / 2])


def _batch_loss(task, params, batch):
    out = task.outputs(np.asarray(params)[None], batch)[0]
    return float(np.mean(task.loss_from_outputs(out, batch)[0]))


def test_parameter_shift_matches_finite_differences(rng):
    a = Ansatz(2, 2)
    task = ClassifyTask(a, 2)
    batch = gaussian_blobs(6, 2, rng)
    for _ in range(10):
        theta = rng.uniform(-math.pi, math.pi, a.n_params)
        grad = parameter_shift_grad(a, theta, batch, 2)
        h = 1e-4
        for k in range(a.n_params):
            e = np.zeros(a.n_params)
            e[k] = h
            fd = (_batch_loss(task, theta + e, batch) - _batch_loss(task, theta - e, batch)) / (2 * h)
            assert abs(grad[k] - fd) <= 1e-3


def test_single_ry_closed_form():
    # loss = <Z> after RY(theta) on |0>: d/dtheta cos(theta) = -sin(theta)
    a = Ansatz(1, 1)

    class ZTask(QCOTask):
        def outputs(self, param_sets, data):
            init = np.zeros((1, 2), dtype=complex)
            init[0, 0] = 1
            psi = simulate_batch(self.ansatz, param_sets, init)[:, 0]
            return (np.abs(psi[:, 0]) ** 2 - np.abs(psi[:, 1]) ** 2)[:, None, None]

    task = ZTask(a)
    data = Dataset(np.zeros((1, 1)), np.zeros(1, dtype=np.int64))
    for theta in (0.3, 1.2, -2.0):
        g = task_grad(task, np.array([theta, 0.0]), data)
        assert g[0] == pytest.approx(-math.sin(theta), abs=1e-12)
        assert g[1] == pytest.approx(0, abs=1e-12)


def test_zero_gradient_in_flat_region():
    a = Ansatz(1, 1)
    task = StatePrepTask(a)
    # target |0>, start at |0>: fidelity is maximal, gradient vanishes
    data = Dataset(np.array([[1.0, 0.0, 0.0, 0.0]]), np.zeros(1, dtype=np.int64))
    assert np.allclose(task_grad(task, np.zeros(2), data), 0, atol=1e-12)


def test_empty_batch():
    a = Ansatz(2, 1)
    with pytest.raises(ValueError):
        parameter_shift_grad(a, np.zeros(4), Dataset(np.zeros((0, 2)), np.zeros(0, dtype=np.int64)))


def test_sgd_step_wraps():
    p = np.array([0.1, 3.0])
    assert np.array_equal(sgd_step(p, np.zeros(2), 0.5), p)
    out = sgd_step(p, np.array([0.0, -1.0]), 0.5)
    assert out[1] == pytest.approx(3.5 - 2 * math.pi)


def test_training_decreases_loss(rng):
    a = Ansatz(2, 2)
    task = ClassifyTask(a, 2)
    data = gaussian_blobs(60, 2, rng)
    params = a.init_params(rng)
    start = evaluate(task, params, data)[0]
    history = [start]
    for _ in range(50):
        params = sgd_step(params, task_grad(task, params, data), 0.5)
        history.append(evaluate(task, params, data)[0])
    assert history[-1] < start
    assert min(history) >= 0
    drops = np.mean(np.diff(history) < 0)
    assert drops >= 0.8


def test_training_deterministic():
    def run(seed):
        r = np.random.default_rng(seed)
        a = Ansatz(2, 1)
        data = gaussian_blobs(20, 2, r)
        p = a.init_params(r)
        for _ in range(5):
            p = sgd_step(p, parameter_shift_grad(a, p, data), 0.3)
        return p

    assert np.array_equal(run(4), run(4))


def test_stateprep_and_qco_tasks(rng):
    sp = StatePrepTask(Ansatz(2, 2))
    data = noisy_targets(5, 2, rng)
    l, f = evaluate(sp, np.zeros(sp.ansatz.n_params), data)
    assert 0 <= l <= 1 and f == pytest.approx(1 - l)
    qco = QCOTask(Ansatz(4, 1))
    ret = synthetic_returns(50, 4, rng)
    c = qco.costs(ret)
    assert c.shape == (16,)
    l, q = evaluate(qco, np.zeros(qco.ansatz.n_params), ret)
    # all mass on |0000>, whose selection is empty
    assert l == pytest.approx((c[0] - c.min()) / (c.max() - c.min()))
    assert q == pytest.approx(1 - l)


def test_dataset_csv_and_checkpoint(tmp_path, rng):
    data = gaussian_blobs(7, 3, rng)
    data.to_csv(tmp_path / "d.csv")
    back = Dataset.from_csv(tmp_path / "d.csv")
    assert np.allclose(back.X, data.X) and np.array_equal(back.y, data.y)
    assert (tmp_path / "d.csv").read_text().splitlines()[0].endswith("label")
    p = rng.normal(size=9)
    save_checkpoint(tmp_path / "m.bin", p)
    assert (tmp_path / "m.bin").stat().st_size == 16 + 8 * 9
    assert np.array_equal(load_checkpoint(tmp_path / "m.bin"), p)
    (tmp_path / "bad.bin").write_bytes(b"nope")
    with pytest.raises(ValueError):
        load_checkpoint(tmp_path / "bad.bin")


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 2)), np.zeros(3, dtype=np.int64))


def test_shots_mode(rng):
    a = Ansatz(2, 1)
    p = rng.normal(size=4)
    exact = forward(a, p, [0.3, 0.4])
    sampled = forward(a, p, [0.3, 0.4], shots=20_000, rng=np.random.default_rng(1))
    assert np.allclose(exact, sampled, atol=0.03)
