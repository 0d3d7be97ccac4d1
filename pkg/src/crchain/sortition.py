"""VRF-based committee sortition primitives.

The VRF is a deterministic-signature-then-hash construction: the proof is an
Ed25519 signature over the message (Ed25519 signing is deterministic per RFC
8032), and the pseudorandom output is the SHA-256 of that signature read as a
big-endian 256-bit integer. Verification checks the signature against the
public key and recomputes the hash, so anyone can audit an election claim.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

TWO_256 = 2**256


def hash256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def expand_bytes(seed: bytes, length: int) -> bytes:
    """Deterministically stretch a seed to `length` bytes (counter-mode hash)."""
    out = bytearray()
    ctr = 0
    while len(out) < length:
        out += hashlib.sha256(seed + ctr.to_bytes(4, "big")).digest()
        ctr += 1
    return bytes(out[:length])


@dataclass(frozen=True, slots=True)
class KeyPair:
    pk: bytes
    sk: bytes


@dataclass(frozen=True, slots=True)
class VrfOutput:
    y: int
    proof: bytes


@lru_cache(maxsize=8192)
def _signer(sk: bytes) -> Ed25519PrivateKey:
    return Ed25519PrivateKey.from_private_bytes(sk)


@lru_cache(maxsize=8192)
def _verifier(pk: bytes) -> Ed25519PublicKey:
    return Ed25519PublicKey.from_public_bytes(pk)


def keygen(seed: bytes | int) -> KeyPair:
    """Derive a signing key pair from 256 bits of entropy. Deterministic."""
    if isinstance(seed, int):
        seed = seed.to_bytes(32, "big")
    if len(seed) != 32:
        seed = hash256(seed)
    sk = Ed25519PrivateKey.from_private_bytes(seed)
    return KeyPair(pk=sk.public_key().public_bytes_raw(), sk=seed)


def evaluate(sk: bytes, msg: bytes) -> VrfOutput:
    """y = sha256(sign(sk, msg)) as a 256-bit integer; proof = the signature."""
    proof = _signer(sk).sign(msg)
    return VrfOutput(y=int.from_bytes(hash256(proof), "big"), proof=proof)


def verify(pk: bytes, msg: bytes, y: int, proof: bytes) -> bool:
    """True iff proof signs msg under pk and y matches the proof hash.

    Never raises; malformed inputs simply fail verification.
    """
    try:
        _verifier(pk).verify(proof, msg)
    except (InvalidSignature, ValueError, TypeError):
        return False
    return y == int.from_bytes(hash256(proof), "big")


def is_elected(y: int, d: int) -> bool:
    return y <= d


@dataclass(frozen=True, slots=True)
class SortitionMsg:
    """Canonical election message: head-request digest, lagged seed, epoch."""

    request_digest: bytes
    seed: bytes
    epoch_index: int

    def to_bytes(self) -> bytes:
        # Fixed-width layout (32 + 32 + 8 bytes): identical fields <=> identical bytes.
        return self.request_digest + self.seed + self.epoch_index.to_bytes(8, "big")


def lagged_seed(seed_ring: Sequence[bytes], f: int) -> bytes:
    """The seed f rounds behind the newest; genesis (index 0) while underfull."""
    idx = len(seed_ring) - 1 - f
    return seed_ring[idx if idx > 0 else 0]


def build_msg(
    q1_digest: bytes, seed_ring: Sequence[bytes], f: int, h: int, epoch_len: int
) -> SortitionMsg:
    if not seed_ring:
        raise ValueError("seed ring is empty")
    return SortitionMsg(
        request_digest=q1_digest,
        seed=lagged_seed(seed_ring, f),
        epoch_index=h // epoch_len,
    )
