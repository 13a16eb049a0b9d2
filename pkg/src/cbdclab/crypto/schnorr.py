"""Deterministic Schnorr signatures over a prime-order subgroup of Z_p*.

The baked-in group (512-bit p, 160-bit q) is deliberately small so large
simulations stay fast. It is NOT secure; load a bigger group for anything
else via :meth:`GroupParams.from_dict`.
"""

from __future__ import annotations

from dataclasses import dataclass

from .primitives import hash


@dataclass(frozen=True)
class GroupParams:
    p: int
    q: int
    g: int

    def __post_init__(self):
        if (self.p - 1) % self.q:
            raise ValueError("q must divide p - 1")
        if self.g in (0, 1) or pow(self.g, self.q, self.p) != 1:
            raise ValueError("g must generate the order-q subgroup")

    @property
    def p_bytes(self) -> int:
        return (self.p.bit_length() + 7) // 8

    @property
    def q_bytes(self) -> int:
        return (self.q.bit_length() + 7) // 8

    @classmethod
    def from_dict(cls, d: dict) -> "GroupParams":
        return cls(**{k: int(d[k], 0) if isinstance(d[k], str) else int(d[k]) for k in ("p", "q", "g")})

    def to_dict(self) -> dict:
        return {"p": hex(self.p), "q": hex(self.q), "g": hex(self.g)}


# Generated once by hashing fixed labels into candidates (see README).
DEFAULT_GROUP = GroupParams(
    p=0xCFE7875D744DD9FAB7030DACEB9689AB2FFCAE4879C25119968C1E4E17AC6B97C046ACC36887F73DFF5C8DA14BF5849235C34DC66EAB0B387F5E584711BBA351,
    q=0xF53BA6F38BD65DB587CC2106C02ACAD16CBC9B53,
    g=0xA78AD5CC45AD8BC0B4DBCF299BE9AC859EF08B6CBF2B157474C9E9D4885755FD189EC8875346607DFC38AD0125C10E17DB8ADD82B7BD46C910D0BA28567E127A,
)


def keygen(rng, group: GroupParams = DEFAULT_GROUP) -> tuple[bytes, bytes]:
    """Return ``(public, private)`` as fixed-width big-endian integers."""
    x = 1 + rng.randbelow(group.q - 1)
    y = pow(group.g, x, group.p)
    return y.to_bytes(group.p_bytes, "big"), x.to_bytes(group.q_bytes, "big")


def _challenge(r: int, public: bytes, msg: bytes, group: GroupParams) -> int:
    return int.from_bytes(hash(r.to_bytes(group.p_bytes, "big") + public + msg, b"chal"), "big") % group.q


def sign(public: bytes, private: bytes, msg: bytes, group: GroupParams = DEFAULT_GROUP) -> bytes:
    x = int.from_bytes(private, "big")
    k = int.from_bytes(hash(private + msg, b"nonce"), "big") % group.q or 1
    r = pow(group.g, k, group.p)
    e = _challenge(r, public, msg, group)
    s = (k + x * e) % group.q
    return e.to_bytes(group.q_bytes, "big") + s.to_bytes(group.q_bytes, "big")


def decode_signature(payload: bytes, group: GroupParams = DEFAULT_GROUP) -> tuple[int, int]:
    """Split ``e || s``; ``ValueError`` if the encoding is not canonical."""
    n = group.q_bytes
    if len(payload) != 2 * n:
        raise ValueError("bad Schnorr signature length")
    e = int.from_bytes(payload[:n], "big")
    s = int.from_bytes(payload[n:], "big")
    if e >= group.q or s >= group.q:
        raise ValueError("Schnorr scalar out of range")
    return e, s


def verify(public: bytes, msg: bytes, payload: bytes, group: GroupParams = DEFAULT_GROUP) -> bool:
    e, s = decode_signature(payload, group)
    if len(public) != group.p_bytes:
        return False
    y = int.from_bytes(public, "big")
    if not 1 < y < group.p:
        return False
    r = pow(group.g, s, group.p) * pow(y, group.q - e, group.p) % group.p
    return _challenge(r, public, msg, group) == e
