"""Winternitz one-time signatures and a Merkle-tree many-time wrapper.

Chain step:   x_{s+1} = hash(leaf:u32 || chain:u16 || s:u8 || x_s, "wots")
Secret i:     hash(seed || leaf:u32 || chain:u16, "wsk")
Leaf:         hash(wots_public, "leaf")
Node:         hash(left || right, "node")

All chain work goes through the batched kernels in :mod:`.kernels`.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .primitives import hash


@dataclass(frozen=True)
class WotsParams:
    n: int = 32
    w: int = 16

    @property
    def log_w(self) -> int:
        return int(math.log2(self.w))

    @property
    def len1(self) -> int:
        return math.ceil(8 * self.n / self.log_w)

    @property
    def len2(self) -> int:
        return math.floor(math.log2(self.len1 * (self.w - 1)) / self.log_w) + 1

    @property
    def len(self) -> int:
        return self.len1 + self.len2


WOTS = WotsParams()
assert (WOTS.len1, WOTS.len2, WOTS.len) == (64, 3, 67)

WOTS_BYTES = WOTS.len * WOTS.n  # public key and signature: 2144
_CHAINS = WOTS.len
_TOP = WOTS.w - 1
_CHAIN_PREFIX = b"wots\x00"
_SECRET_PREFIX = b"wsk\x00"
_CHAIN_IDX = np.arange(_CHAINS, dtype=">u2").view(np.uint8).reshape(_CHAINS, 2)


def message_digits(msg: bytes) -> np.ndarray:
    """Base-w digits of hash(msg) followed by the base-w checksum digits."""
    digest = hash(msg, b"msg")
    raw = np.frombuffer(digest, dtype=np.uint8)
    digits = np.empty(WOTS.len1, dtype=np.int64)
    digits[0::2] = raw >> 4
    digits[1::2] = raw & 0x0F
    checksum = int((_TOP - digits).sum())
    csum = [(checksum >> (WOTS.log_w * (WOTS.len2 - 1 - i))) & _TOP for i in range(WOTS.len2)]
    return np.concatenate([digits, np.array(csum, dtype=np.int64)])


def _headers(leaves: np.ndarray) -> np.ndarray:
    """One 6-byte header (leaf:u32 || chain:u16) per (leaf, chain) lane."""
    leaf_bytes = np.asarray(leaves, dtype=">u4").view(np.uint8).reshape(-1, 4)
    return np.concatenate(
        [np.repeat(leaf_bytes, _CHAINS, axis=0), np.tile(_CHAIN_IDX, (len(leaves), 1))], axis=1
    )


def _secrets(seed: bytes, headers: np.ndarray) -> np.ndarray:
    seed_rows = np.broadcast_to(np.frombuffer(seed, dtype=np.uint8), (headers.shape[0], 32))
    return kernels.hash_rows(_SECRET_PREFIX, np.concatenate([seed_rows, headers], axis=1))


def wots_publics(seed: bytes, leaves) -> list[bytes]:
    """WOTS public keys (67*32 bytes each) for a batch of leaf indices."""
    leaves = np.asarray(leaves, dtype=np.int64)
    headers = _headers(leaves)
    n = headers.shape[0]
    ends = kernels.chain_rows(
        _CHAIN_PREFIX,
        headers,
        _secrets(seed, headers),
        np.zeros(n, dtype=np.int64),
        np.full(n, _TOP, dtype=np.int64),
    )
    flat = ends.reshape(len(leaves), WOTS_BYTES)
    return [row.tobytes() for row in flat]


def wots_sign(seed: bytes, leaf: int, msg: bytes) -> bytes:
    digits = message_digits(msg)
    headers = _headers(np.array([leaf]))
    sig = kernels.chain_rows(
        _CHAIN_PREFIX, headers, _secrets(seed, headers), np.zeros(_CHAINS, dtype=np.int64), digits
    )
    return sig.tobytes()


def wots_public_from_signature(sig: bytes, leaf: int, msg: bytes) -> bytes:
    """Complete every chain from the signed position to the top."""
    if len(sig) != WOTS_BYTES:
        raise ValueError("bad WOTS signature length")
    digits = message_digits(msg)
    values = np.frombuffer(sig, dtype=np.uint8).reshape(_CHAINS, 32)
    ends = kernels.chain_rows(_CHAIN_PREFIX, _headers(np.array([leaf])), values, digits, _TOP - digits)
    return ends.tobytes()


def leaf_hash(wots_public: bytes) -> bytes:
    return hash(wots_public, b"leaf")


def node_hash(left: bytes, right: bytes) -> bytes:
    return hash(left + right, b"node")


# chunk size for Merkle keygen batches; bounds peak memory at ~1 MB per 512 leaves
_KEYGEN_CHUNK = 512


def merkle_levels(seed: bytes, height: int) -> list[list[bytes]]:
    """All tree levels, leaves first, root last (``levels[-1] == [root]``)."""
    count = 1 << height
    leaves: list[bytes] = []
    for lo in range(0, count, _KEYGEN_CHUNK):
        batch = range(lo, min(count, lo + _KEYGEN_CHUNK))
        leaves.extend(leaf_hash(pk) for pk in wots_publics(seed, np.fromiter(batch, dtype=np.int64)))
    levels = [leaves]
    while len(levels[-1]) > 1:
        prev = levels[-1]
        levels.append([node_hash(prev[i], prev[i + 1]) for i in range(0, len(prev), 2)])
    return levels


def auth_path(levels: list[list[bytes]], leaf: int) -> list[bytes]:
    return [levels[d][(leaf >> d) ^ 1] for d in range(len(levels) - 1)]


def root_from_path(leaf_value: bytes, leaf: int, path: list[bytes]) -> bytes:
    node = leaf_value
    for d, sibling in enumerate(path):
        if (leaf >> d) & 1:
            node = node_hash(sibling, node)
        else:
            node = node_hash(node, sibling)
    return node


def reference_chain(x: bytes, leaf: int, chain: int, start: int, steps: int) -> bytes:
    """Unbatched hashlib chain; slow, kept as an independent cross-check."""
    for s in range(start, start + steps):
        data = leaf.to_bytes(4, "big") + chain.to_bytes(2, "big") + bytes([s]) + x
        x = hashlib.sha256(_CHAIN_PREFIX + data).digest()
    return x
