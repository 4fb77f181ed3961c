"""One-way reverse reconciliation of a single block.

Bob sends the frozen part of his polar-transformed key, a CRC of his key and a
short Toeplitz hash.  Alice decodes toward Bob's key with the list decoder and
accepts only if the hash of her estimate matches.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..channel import RandomSource
from ..privacy import ToeplitzSeed, toeplitz_hash
from .codec import SclConfig, channel_llr, polar_transform, scl_decode
from .construction import PolarCode

DEFAULT_HASH_BITS = 32


@dataclass(frozen=True)
class SyndromeMessage:
    """Everything Bob discloses for one block."""

    frozen_values: np.ndarray  # u on the frozen set, in index order
    crc: np.ndarray
    hash_seed: ToeplitzSeed | None
    hash_value: np.ndarray

    @property
    def size(self) -> int:
        return self.frozen_values.size + self.crc.size + self.hash_value.size


@dataclass(frozen=True)
class ReconciliationResult:
    success: bool
    corrected_block: np.ndarray
    disclosed_bits: int
    verified: bool
    crc_found: bool = False
    candidates: int = 0

    def __post_init__(self):
        if self.success and not self.verified:
            raise ValueError("a successful block must be hash-verified")


def bob_message(bob_bits, code: PolarCode, cfg: SclConfig, n_hash: int = DEFAULT_HASH_BITS, rng: RandomSource | None = None) -> SyndromeMessage:
    bob = np.asarray(bob_bits, dtype=np.uint8)
    if bob.size != code.block_length:
        raise ValueError("block does not match the code length")
    u = polar_transform(bob)
    crc = cfg.crc.compute(bob) if cfg.crc is not None else np.zeros(0, np.uint8)
    n_hash = min(n_hash, bob.size)
    if n_hash > 0:
        seed = ToeplitzSeed.random(n_hash, bob.size, rng if rng is not None else RandomSource(0))
        h = toeplitz_hash(bob, seed)
    else:
        seed, h = None, np.zeros(0, np.uint8)
    return SyndromeMessage(u[code.frozen], crc, seed, h)


def alice_decode(alice_bits, message: SyndromeMessage, code: PolarCode, cfg: SclConfig, qber: float) -> ReconciliationResult:
    alice = np.asarray(alice_bits, dtype=np.uint8)
    n = code.block_length
    if alice.size != n:
        raise ValueError("block does not match the code length")
    values = np.zeros(n, np.uint8)
    values[code.frozen] = message.frozen_values
    x_hat, found, cands = scl_decode(channel_llr(alice, qber), code.frozen, values, cfg, message.crc)
    if message.hash_seed is not None:
        verified = bool(np.array_equal(toeplitz_hash(x_hat, message.hash_seed), message.hash_value))
    else:
        verified = True
    success = bool(found) and verified
    disclosed = min(message.size, n) if success else n
    return ReconciliationResult(success, x_hat, disclosed, verified, bool(found), int(cands))


def reconcile_block(
    bob_bits,
    alice_bits,
    code: PolarCode,
    cfg: SclConfig,
    qber: float,
    n_hash: int = DEFAULT_HASH_BITS,
    rng: RandomSource | None = None,
) -> ReconciliationResult:
    """Full exchange on one block; ``rng`` keys the verification hash.

    A failed block counts as entirely disclosed.
    """
    bob = np.asarray(bob_bits, dtype=np.uint8)
    alice = np.asarray(alice_bits, dtype=np.uint8)
    if bob.size != alice.size:
        raise ValueError("blocks differ in length")
    if not 0 < qber < 0.5:
        raise ValueError("qber must lie in (0, 0.5)")
    msg = bob_message(bob, code, cfg, n_hash, rng)
    return alice_decode(alice, msg, code, cfg, qber)
