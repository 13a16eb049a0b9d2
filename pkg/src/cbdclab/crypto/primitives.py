"""Domain-separated hashing, the hash-counter DRBG, and byte-encoding helpers."""

from __future__ import annotations

import hashlib
import struct

from ..errors import CryptoError

DIGEST_SIZE = 32

# tag -> purpose
DOMAIN_TAGS = frozenset(
    {
        b"addr",  # token owner address = hash(public key)
        b"wots",  # WOTS chain step
        b"wsk",  # WOTS secret derivation from seed
        b"leaf",  # Merkle leaf = hash(WOTS public key)
        b"node",  # Merkle interior node
        b"msg",  # message digest fed to WOTS
        b"tx",  # canonical transfer content
        b"drbg",  # DRBG output block
        b"nonce",  # deterministic Schnorr nonce
        b"chal",  # Schnorr challenge
        b"cert",  # certificate serials
        b"link",  # linked-certificate request digest
        b"token",  # token ids
        b"seed",  # child DRBG seeds
    }
)


def hash(data: bytes, domain_tag: bytes | str) -> bytes:  # noqa: A001 - public API name
    """SHA-256 over ``tag || 0x00 || data``."""
    if isinstance(domain_tag, str):
        domain_tag = domain_tag.encode("ascii")
    if domain_tag not in DOMAIN_TAGS:
        raise CryptoError("UNKNOWN_DOMAIN_TAG", repr(domain_tag))
    return hashlib.sha256(domain_tag + b"\x00" + data).digest()


class Drbg:
    """Deterministic byte stream: block i is ``hash(seed || u64(i), "drbg")``."""

    def __init__(self, seed: bytes, counter: int = 0):
        if len(seed) != 32:
            raise ValueError("Drbg seed must be 32 bytes")
        self.seed = bytes(seed)
        self.counter = counter
        self._buf = b""

    @classmethod
    def from_int(cls, value: int) -> "Drbg":
        return cls(hashlib.sha256(b"cbdclab-seed" + value.to_bytes(16, "big", signed=True)).digest())

    def _block(self) -> bytes:
        out = hash(self.seed + struct.pack(">Q", self.counter), b"drbg")
        self.counter += 1
        return out

    def read(self, n: int) -> bytes:
        while len(self._buf) < n:
            self._buf += self._block()
        out, self._buf = self._buf[:n], self._buf[n:]
        return out

    def randbits(self, k: int) -> int:
        nbytes = (k + 7) // 8
        return int.from_bytes(self.read(nbytes), "big") >> (nbytes * 8 - k)

    def randbelow(self, n: int) -> int:
        """Uniform integer in [0, n) by rejection sampling."""
        if n <= 0:
            raise ValueError("randbelow bound must be positive")
        k = max(1, (n - 1).bit_length())
        while True:
            r = self.randbits(k)
            if r < n:
                return r

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi], inclusive."""
        return lo + self.randbelow(hi - lo + 1)

    def random(self) -> float:
        return self.randbits(53) / (1 << 53)

    def shuffle(self, items: list) -> None:
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]

    def spawn(self) -> "Drbg":
        """Independent child stream seeded from this one."""
        return Drbg(hash(self.read(32), b"seed"))

    def state(self) -> tuple[bytes, int, bytes]:
        return self.seed, self.counter, self._buf


# length-prefixed encoding helpers (big-endian, u16 lengths)


def lp(data: bytes) -> bytes:
    if len(data) > 0xFFFF:
        raise ValueError("field too long for u16 length prefix")
    return struct.pack(">H", len(data)) + data


class Reader:
    """Cursor over a byte string; raises ``ValueError`` on truncation."""

    def __init__(self, data: bytes):
        self.data = bytes(data)
        self.pos = 0

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.data):
            raise ValueError("truncated input")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack(">H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack(">I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack(">Q", self.take(8))[0]

    def lp(self) -> bytes:
        return self.take(self.u16())

    def done(self) -> bool:
        return self.pos == len(self.data)

    def expect_end(self) -> None:
        if not self.done():
            raise ValueError("trailing bytes")
