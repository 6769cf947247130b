import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cryptoqfl.aggadder import (
    AdderError, GateCostModel, aggregate_encrypted, aggregation_latency, build_adder,
    classical_add_oracle, comparison_csv, decode_operand, encode_operand, report_comparison,
    run_plain, verify_exhaustive, zero_register,
)
from cryptoqfl.che import CheEvaluator, che_keygen
from cryptoqfl.qhe import CheKeyView, ClientKeyView, GadgetOracle, QCiphertext
from cryptoqfl.qotp import PauliKey, keygen, qotp_decrypt, qotp_encrypt
from cryptoqfl.qsim import BasisState, Circuit, parse_circuit, run_circuit


def operand_state(t, width):
    return BasisState(width, sum(b << i for i, b in enumerate(encode_operand(t, width))))


def test_encode_operand():
    assert encode_operand(-1, 4) == (1, 1, 1, 1)
    assert encode_operand(1, 4) == (1, 0, 0, 0)
    assert encode_operand(-8, 4) == (0, 0, 0, 1)
    with pytest.raises(AdderError):
        encode_operand(8, 4)
    for t in range(-8, 8):
        assert decode_operand(encode_operand(t, 4)) == t


def test_oracle_examples():
    assert classical_add_oracle(3, 2, 0, 4) == 5
    assert classical_add_oracle(-1, 1, 0, 4) == 0
    assert classical_add_oracle(7, 1, 0, 4) == -8


def test_width_range():
    for w in (1, 9):
        with pytest.raises(AdderError):
            build_adder(w)


@pytest.mark.parametrize("width", [2, 3, 4])
def test_exhaustive_correctness(width):
    adder = build_adder(width)
    assert verify_exhaustive(adder) == []
    mask = (1 << width) - 1
    for a, b, cin in itertools.product(range(1 << width), range(1 << width), (0, 1)):
        _, acc, _ = run_plain(adder, a, b, cin)
        # independent oracle: Python integers
        assert acc == (a + b + cin) & mask


def test_without_carry_in_ancilla_clean():
    adder = build_adder(3, with_carry_in=False)
    assert adder.ancillas == (6,) and adder.carry_in is None
    for a, b in itertools.product(range(8), repeat=2):
        _, acc, anc = run_plain(adder, a, b)
        assert anc == 0 and acc == (a + b) & 7


def test_add_zero_is_identity():
    adder = build_adder(4)
    for b in range(16):
        assert run_plain(adder, 0, b, 0) == (0, b, 0)


def test_only_cx_ccx_and_counts():
    for w in range(2, 9):
        adder = build_adder(w)
        assert {g.kind for g in adder.circuit.gates} <= {"CX", "CCX"}
        assert adder.counts == adder.recount()
        assert adder.counts == {"qubits": 2 * w + 1, "cx": 4 * w - 2, "ccx": 2 * w - 2}


def test_cost_model():
    model = GateCostModel()
    adder = build_adder(3)
    assert model.circuit_cost(adder.circuit) == 30
    assert model.circuit_latency(adder.circuit) == 28
    # disjoint gates share a time step
    par = parse_circuit("CX 0,1\nCX 2,3\nCCX 0,2,4\n")
    assert model.circuit_latency(par) == 6
    assert model.circuit_latency(Circuit(2)) == 0
    with pytest.raises(ValueError):
        GateCostModel(cost={"CX": -1})


def test_text_export_round_trip():
    adder = build_adder(3)
    assert parse_circuit(adder.to_text(), adder.n_qubits) == adder.circuit


def test_report_comparison():
    rows, flags = report_comparison()
    by = {r.scheme: r for r in rows}
    assert by["QA2"].cost == 50
    assert by["QA1"].cost == 50
    assert (by["Ours"].cx, by["Ours"].ccx, by["Ours"].cost, by["Ours"].latency) == (10, 4, 30, 28)
    assert any(f.startswith("QA1") for f in flags)
    assert any("qubits" in f for f in flags)
    csv = comparison_csv(rows).splitlines()
    assert csv[0] == "scheme,qubits,cx,ccx,cost,latency"
    assert csv[-1] == "Ours,7,10,4,30,28"


def _encrypted_aggregate(values, width, rng, workflow="client", shared=None):
    adder = build_adder(width)
    n = adder.n_qubits
    gadget = GadgetOracle()
    if workflow == "che":
        kp = che_keygen(rng)
        ev = CheEvaluator(kp, rng=rng)
        view = CheKeyView.public_zero(n, ev)
    else:
        view = ClientKeyView(PauliKey.zeros(n))
    updates = []
    for t in values:
        key = shared if shared is not None else keygen(width, rng)
        ct = QCiphertext(qotp_encrypt(operand_state(t, width), key), "op")
        op_view = CheKeyView.encrypt(key, kp, ev, rng) if workflow == "che" else ClientKeyView(key)
        updates.append((ct, op_view))
    acc = QCiphertext(zero_register(adder), "acc")
    out = aggregate_encrypted(updates, acc, view, gadget, adder, rng)
    final = view.decrypt(kp) if workflow == "che" else view.client_key()
    plain = qotp_decrypt(out.state, final)
    bits = [plain.bit(q) for q in adder.accumulator]
    # operand and carry-in slots end reset
    assert all(plain.bit(q) == 0 for q in adder.operand + (adder.carry_in,))
    return decode_operand(bits)


def test_five_ones(rng):
    assert _encrypted_aggregate([1] * 5, 4, rng) == 5


def test_cancellation_any_order(rng):
    for perm in itertools.permutations([1, -1, 0]):
        assert _encrypted_aggregate(list(perm), 3, rng) == 0


@pytest.mark.parametrize("workflow", ["client", "che"])
def test_random_ternary_sums(workflow, rng):
    trials = 200 if workflow == "client" else 20
    for _ in range(trials):
        vals = [int(v) for v in rng.integers(-1, 2, 8)]
        assert _encrypted_aggregate(vals, 5, rng, workflow) == sum(vals)


def test_shared_key_aggregation(rng):
    key = keygen(4, rng)
    vals = [1, 1, -1, 1, 0, 1]
    assert _encrypted_aggregate(vals, 4, rng, shared=key) == 3


def test_encrypted_equals_plaintext_bitwise(rng):
    for _ in range(100):
        w = int(rng.integers(2, 5))
        a = int(rng.integers(-(1 << (w - 1)), 1 << (w - 1)))
        b = int(rng.integers(-(1 << (w - 1)), 1 << (w - 1)))
        got = _encrypted_aggregate([a, b], w, rng)
        assert got == classical_add_oracle(a, b, 0, w)


def test_no_garbage_exact_amplitudes():
    adder = build_adder(3)
    for idx in range(1 << adder.n_qubits):
        out = run_circuit(adder.circuit, BasisState(adder.n_qubits, idx).to_dense())
        cin = adder.carry_in
        probs = np.abs(out.amplitudes) ** 2
        ones = sum(p for i, p in enumerate(probs) if (i >> cin) & 1 != (idx >> cin) & 1)
        assert ones == 0


def test_operand_width_mismatch(rng):
    adder = build_adder(3)
    view = ClientKeyView(PauliKey.zeros(adder.n_qubits))
    bad = (QCiphertext(BasisState(4, 0), "op"), ClientKeyView(PauliKey.zeros(4)))
    with pytest.raises(AdderError):
        aggregate_encrypted([bad], QCiphertext(zero_register(adder), "acc"), view, GadgetOracle(), adder)


def test_aggregation_latency():
    adder = build_adder(3)
    assert aggregation_latency(adder, 4, GateCostModel()) == pytest.approx(4 * 28.1)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(-1, 1), min_size=1, max_size=7), st.integers(0, 2**32 - 1))
def test_order_insensitive(values, seed):
    rng = np.random.default_rng(seed)
    forward = _encrypted_aggregate(values, 4, rng)
    backward = _encrypted_aggregate(values[::-1], 4, rng)
    assert forward == backward == sum(values)
