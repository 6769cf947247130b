"""Classical homomorphic encryption of single key bits.

WARNING: the only backend here is a functional mock and is NOT secure. A
ciphertext is a random nonce plus the plaintext bit masked by a keyed
pseudorandom pad, authenticated with a keyed tag. Homomorphic XOR/AND run
inside :class:`CheEvaluator`, a sealed object that holds the secret and
re-encrypts every result under a fresh nonce. The point of the backend is to
reproduce the data flow and the latency bill of a real scheme, which can be
dropped in behind the same interface.
"""

from __future__ import annotations

import hashlib
import hmac
import secrets
from dataclasses import dataclass

from .meter import LatencyMeter

_NONCE = 16
_TAG = 8


class CheError(Exception):
    pass


@dataclass(frozen=True)
class CheCostModel:
    cost_encrypt: int = 10
    cost_xor: int = 1
    cost_and: int = 100
    cost_decrypt: int = 10

    def __post_init__(self):
        for name in ("cost_encrypt", "cost_xor", "cost_and", "cost_decrypt"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.cost_and < self.cost_xor:
            raise ValueError("cost_and must be at least cost_xor")


@dataclass(frozen=True)
class CheBit:
    payload: bytes
    backend_id: str

    def __len__(self):
        return len(self.payload)


CHEBIT_BYTES = _NONCE + 1 + _TAG


@dataclass(frozen=True, repr=False)
class CheKeypair:
    backend_id: str
    _secret: bytes

    def __repr__(self):
        return f"CheKeypair(backend_id={self.backend_id!r})"


def che_keygen(rng=None) -> CheKeypair:
    """``rng`` is a numpy Generator for reproducible runs; ``None`` uses the OS."""
    raw = _random_bytes(40, rng)
    return CheKeypair(backend_id="mock-" + raw[:8].hex(), _secret=raw[8:])


def _random_bytes(n: int, rng) -> bytes:
    return secrets.token_bytes(n) if rng is None else rng.bytes(n)


def _pad(secret: bytes, nonce: bytes) -> int:
    return hashlib.blake2b(nonce, key=secret, digest_size=1, person=b"pad").digest()[0] & 1


def _tag(secret: bytes, body: bytes) -> bytes:
    return hashlib.blake2b(body, key=secret, digest_size=_TAG, person=b"tag").digest()


def _seal(bit: int, kp: CheKeypair, rng) -> CheBit:
    nonce = _random_bytes(_NONCE, rng)
    body = nonce + bytes([bit ^ _pad(kp._secret, nonce)])
    return CheBit(body + _tag(kp._secret, body), kp.backend_id)


def _open(ct: CheBit, kp: CheKeypair) -> int:
    if ct.backend_id != kp.backend_id:
        raise CheError(f"ciphertext from backend {ct.backend_id}, keypair is {kp.backend_id}")
    body, tag = ct.payload[:-_TAG], ct.payload[-_TAG:]
    if len(body) != _NONCE + 1 or not hmac.compare_digest(tag, _tag(kp._secret, body)):
        raise CheError("ciphertext does not authenticate under this keypair")
    return body[-1] ^ _pad(kp._secret, body[:_NONCE])


def che_encrypt(bit: int, keypair: CheKeypair, rng=None) -> CheBit:
    if bit not in (0, 1):
        raise ValueError("can only encrypt a single bit")
    return _seal(int(bit), keypair, rng)


def che_decrypt(ct: CheBit, keypair: CheKeypair) -> int:
    return _open(ct, keypair)


class CheEvaluator:
    """Sealed homomorphic evaluator handed to the server.

    Holds the keypair privately; callers only ever see :class:`CheBit`
    values. Every operation charges the cost model into ``meter``.
    """

    def __init__(self, keypair: CheKeypair, cost: CheCostModel | None = None,
                 meter: LatencyMeter | None = None, rng=None, category: str = "che_compute"):
        self.__kp = keypair
        self.backend_id = keypair.backend_id
        self.cost = cost or CheCostModel()
        self.meter = meter if meter is not None else LatencyMeter()
        self.category = category
        self._rng = rng

    def _check(self, *cts: CheBit):
        for ct in cts:
            if ct.backend_id != self.backend_id:
                raise CheError(f"backend mismatch: {ct.backend_id} vs {self.backend_id}")

    def encrypt(self, bit: int) -> CheBit:
        """Public-key style encryption of a known constant."""
        self.meter.charge(self.category, self.cost.cost_encrypt)
        return che_encrypt(bit, self.__kp, self._rng)

    def xor(self, a: CheBit, b: CheBit) -> CheBit:
        self._check(a, b)
        self.meter.charge(self.category, self.cost.cost_xor)
        return _seal(_open(a, self.__kp) ^ _open(b, self.__kp), self.__kp, self._rng)

    def and_(self, a: CheBit, b: CheBit) -> CheBit:
        self._check(a, b)
        self.meter.charge(self.category, self.cost.cost_and)
        return _seal(_open(a, self.__kp) & _open(b, self.__kp), self.__kp, self._rng)

    def _reveal(self, ct: CheBit) -> int:
        # used only by the gadget oracle's sealed boundary
        self._check(ct)
        return _open(ct, self.__kp)


def che_eval_xor(a: CheBit, b: CheBit, evaluator: CheEvaluator) -> CheBit:
    return evaluator.xor(a, b)


def che_eval_and(a: CheBit, b: CheBit, evaluator: CheEvaluator) -> CheBit:
    return evaluator.and_(a, b)
