"""Pluggable signature schemes and the composite (hybrid) algebra.

Wire formats (big-endian, u16 length prefixes):

* Signature:   scheme:u8 || lp(payload)
* PQ_MSS payload:  leaf:u32 || wots_sig(2144) || auth_path(32 * h)
* HYBRID_CM payload: lp(classical payload) || lp(pq payload)
* Hybrid public: lp(classical public) || pq_scheme:u8 || lp(pq public)
* KeyPair: scheme:u8 || lp(public) || lp(private) || [height:u8 || next_leaf:u32]
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from ..errors import CryptoError
from . import hashsig, schnorr
from .primitives import Drbg, Reader, lp
from .schnorr import DEFAULT_GROUP, GroupParams


class SchemeId(enum.IntEnum):
    CLASSICAL_SCHNORR = 1
    PQ_WOTS = 2
    PQ_MSS = 3
    HYBRID_CM = 4

    @property
    def cli_name(self) -> str:
        return _CLI_NAMES[self]

    @classmethod
    def from_cli(cls, name: str) -> "SchemeId":
        for k, v in _CLI_NAMES.items():
            if v == name:
                return k
        raise ValueError(f"unknown scheme {name!r}")


_CLI_NAMES = {
    SchemeId.CLASSICAL_SCHNORR: "classical-schnorr",
    SchemeId.PQ_WOTS: "pq-wots",
    SchemeId.PQ_MSS: "pq-mss",
    SchemeId.HYBRID_CM: "hybrid-cm",
}

PQ_SCHEMES = frozenset({SchemeId.PQ_WOTS, SchemeId.PQ_MSS})


class VerificationPolicy(enum.Enum):
    CLASSICAL_ONLY = "classical-only"
    PQ_ONLY = "pq-only"
    BOTH = "both"
    EITHER = "either"


def apply_policy(policy: VerificationPolicy, classical_ok: bool, pq_ok: bool) -> bool:
    if policy is VerificationPolicy.CLASSICAL_ONLY:
        return classical_ok
    if policy is VerificationPolicy.PQ_ONLY:
        return pq_ok
    if policy is VerificationPolicy.BOTH:
        return classical_ok and pq_ok
    return classical_ok or pq_ok


# Stand-in scheme per role, next to the lattice algorithm the role would use
# in production. Metadata only; nothing dispatches on the "reference" column.
ROLE_DEFAULTS = {
    "root_ca": {"schemes": (SchemeId.CLASSICAL_SCHNORR, SchemeId.PQ_MSS), "reference": "FALCON"},
    "sub_ca": {"schemes": (SchemeId.CLASSICAL_SCHNORR, SchemeId.PQ_MSS), "reference": "FALCON or Dilithium"},
    "wallet": {"schemes": (SchemeId.CLASSICAL_SCHNORR, SchemeId.PQ_MSS), "reference": "FALCON"},
    "token_v1": {"schemes": (SchemeId.CLASSICAL_SCHNORR,), "reference": "ECDSA"},
    "token_v2": {"schemes": (SchemeId.PQ_WOTS, SchemeId.PQ_MSS), "reference": "FALCON or Dilithium"},
    "register": {"schemes": (SchemeId.PQ_MSS,), "reference": "Dilithium"},
}


@dataclass(frozen=True)
class SchemeConfig:
    group: GroupParams = DEFAULT_GROUP
    mss_height: int = 8
    hybrid_pq: SchemeId = SchemeId.PQ_MSS


DEFAULT_CONFIG = SchemeConfig()
MIN_HEIGHT, MAX_HEIGHT = 1, 16


@dataclass
class MerkleKeyState:
    height: int
    next_leaf: int = 0
    used_leaves: set[int] = field(default_factory=set)

    @property
    def capacity(self) -> int:
        return 1 << self.height

    @property
    def remaining(self) -> int:
        return self.capacity - self.next_leaf


@dataclass
class KeyPair:
    scheme: SchemeId
    public: bytes
    private: bytes
    ots_state: MerkleKeyState | None = None
    _levels: list | None = field(default=None, repr=False, compare=False)

    def encode(self) -> bytes:
        out = bytes([self.scheme]) + lp(self.public) + lp(self.private)
        if self.ots_state is not None:
            out += bytes([self.ots_state.height]) + self.ots_state.next_leaf.to_bytes(4, "big")
        return out

    @classmethod
    def decode(cls, data: bytes) -> "KeyPair":
        r = Reader(data)
        scheme = SchemeId(r.u8())
        public, private = r.lp(), r.lp()
        state = None
        if scheme in PQ_SCHEMES:
            height, nxt = r.u8(), r.u32()
            state = MerkleKeyState(height, nxt, set(range(nxt)))
        r.expect_end()
        return cls(scheme, public, private, state)

    def exhausted(self) -> bool:
        return self.ots_state is not None and self.ots_state.remaining == 0


@dataclass(frozen=True)
class Signature:
    scheme: SchemeId
    payload: bytes

    @property
    def leaf_index(self) -> int | None:
        if self.scheme is SchemeId.PQ_MSS and len(self.payload) >= 4:
            return int.from_bytes(self.payload[:4], "big")
        return None

    def encode(self) -> bytes:
        return bytes([self.scheme]) + lp(self.payload)

    @classmethod
    def decode(cls, data: bytes) -> "Signature":
        try:
            r = Reader(data)
            sig = cls(SchemeId(r.u8()), r.lp())
            r.expect_end()
        except ValueError as exc:
            raise CryptoError("MALFORMED_SIGNATURE", str(exc)) from exc
        return sig


@dataclass(frozen=True)
class SizeReport:
    public_key_bytes: int
    private_key_bytes: int
    signature_bytes: int


@dataclass(frozen=True)
class HybridPublic:
    classical: bytes
    pq: bytes
    pq_scheme: SchemeId = SchemeId.PQ_MSS

    def encode(self) -> bytes:
        return lp(self.classical) + bytes([self.pq_scheme]) + lp(self.pq)

    @classmethod
    def decode(cls, data: bytes) -> "HybridPublic":
        r = Reader(data)
        classical = r.lp()
        scheme = SchemeId(r.u8())
        pq = r.lp()
        r.expect_end()
        return cls(classical, pq, scheme)


# --------------------------------------------------------------------------


def keygen(scheme: SchemeId, rng: Drbg, config: SchemeConfig = DEFAULT_CONFIG) -> KeyPair:
    scheme = SchemeId(scheme)
    if scheme is SchemeId.CLASSICAL_SCHNORR:
        public, private = schnorr.keygen(rng, config.group)
        return KeyPair(scheme, public, private)
    if scheme is SchemeId.PQ_WOTS:
        seed = rng.read(32)
        (public,) = hashsig.wots_publics(seed, [0])
        return KeyPair(scheme, public, seed, MerkleKeyState(height=0))
    if scheme is SchemeId.PQ_MSS:
        h = config.mss_height
        if not MIN_HEIGHT <= h <= MAX_HEIGHT:
            raise CryptoError("UNSUPPORTED_HEIGHT", f"height {h} outside [{MIN_HEIGHT}, {MAX_HEIGHT}]")
        seed = rng.read(32)
        levels = hashsig.merkle_levels(seed, h)
        return KeyPair(scheme, levels[-1][0], seed, MerkleKeyState(height=h), levels)
    raise CryptoError("UNSUPPORTED_SCHEME", "hybrid keys are pairs; use hybrid_sign")


def _advance(key: KeyPair) -> int:
    state = key.ots_state
    if state.next_leaf >= state.capacity:
        code = "OTS_REUSE" if key.scheme is SchemeId.PQ_WOTS else "MSS_EXHAUSTED"
        raise CryptoError(code, f"{state.next_leaf} of {state.capacity} leaves used")
    leaf = state.next_leaf
    assert leaf not in state.used_leaves
    state.used_leaves.add(leaf)
    state.next_leaf += 1
    return leaf


def sign(key: KeyPair, msg: bytes, config: SchemeConfig = DEFAULT_CONFIG) -> Signature:
    if not key.private:
        raise CryptoError("NO_PRIVATE_KEY")
    if key.scheme is SchemeId.CLASSICAL_SCHNORR:
        return Signature(key.scheme, schnorr.sign(key.public, key.private, msg, config.group))
    if key.scheme is SchemeId.PQ_WOTS:
        _advance(key)
        return Signature(key.scheme, hashsig.wots_sign(key.private, 0, msg))
    if key.scheme is SchemeId.PQ_MSS:
        if key._levels is None:
            key._levels = hashsig.merkle_levels(key.private, key.ots_state.height)
        leaf = _advance(key)
        path = hashsig.auth_path(key._levels, leaf)
        payload = leaf.to_bytes(4, "big") + hashsig.wots_sign(key.private, leaf, msg) + b"".join(path)
        return Signature(key.scheme, payload)
    raise CryptoError("UNSUPPORTED_SCHEME", str(key.scheme))


def _malformed(detail: str) -> CryptoError:
    return CryptoError("MALFORMED_SIGNATURE", detail)


def verify(
    public: bytes, scheme: SchemeId, msg: bytes, sig: Signature, config: SchemeConfig = DEFAULT_CONFIG
) -> bool:
    scheme = SchemeId(scheme)
    if sig.scheme is not scheme:
        raise CryptoError("SCHEME_MISMATCH", f"signature is {sig.scheme.name}, expected {scheme.name}")
    payload = sig.payload
    if scheme is SchemeId.CLASSICAL_SCHNORR:
        try:
            return schnorr.verify(public, msg, payload, config.group)
        except ValueError as exc:
            raise _malformed(str(exc)) from exc
    if scheme is SchemeId.PQ_WOTS:
        if len(payload) != hashsig.WOTS_BYTES:
            raise _malformed("WOTS signature length")
        return hashsig.wots_public_from_signature(payload, 0, msg) == public
    if scheme is SchemeId.PQ_MSS:
        extra = len(payload) - 4 - hashsig.WOTS_BYTES
        if extra < 0 or extra % 32:
            raise _malformed("MSS signature length")
        height = extra // 32
        if not MIN_HEIGHT <= height <= MAX_HEIGHT:
            raise _malformed("MSS tree height")
        leaf = int.from_bytes(payload[:4], "big")
        if leaf >= 1 << height:
            raise _malformed("MSS leaf index out of range")
        wots_sig = payload[4 : 4 + hashsig.WOTS_BYTES]
        tail = payload[4 + hashsig.WOTS_BYTES :]
        path = [tail[i : i + 32] for i in range(0, len(tail), 32)]
        leaf_value = hashsig.leaf_hash(hashsig.wots_public_from_signature(wots_sig, leaf, msg))
        return hashsig.root_from_path(leaf_value, leaf, path) == public
    if scheme is SchemeId.HYBRID_CM:
        try:
            publics = HybridPublic.decode(public)
        except ValueError:
            return False
        return hybrid_verify(publics, msg, sig, VerificationPolicy.BOTH, config)
    raise CryptoError("UNSUPPORTED_SCHEME", str(scheme))


def hybrid_public(classical_key: KeyPair, pq_key: KeyPair) -> HybridPublic:
    return HybridPublic(classical_key.public, pq_key.public, pq_key.scheme)


def hybrid_sign(
    classical_key: KeyPair, pq_key: KeyPair, msg: bytes, config: SchemeConfig = DEFAULT_CONFIG
) -> Signature:
    if classical_key.scheme is not SchemeId.CLASSICAL_SCHNORR or pq_key.scheme not in PQ_SCHEMES:
        raise CryptoError("UNSUPPORTED_SCHEME", "hybrid needs a classical key and a PQ key")
    pq_sig = sign(pq_key, msg, config)  # stateful half first: fail before doing anything else
    classical_sig = sign(classical_key, msg, config)
    return Signature(SchemeId.HYBRID_CM, lp(classical_sig.payload) + lp(pq_sig.payload))


def split_hybrid(sig: Signature, pq_scheme: SchemeId) -> tuple[Signature, Signature]:
    if sig.scheme is not SchemeId.HYBRID_CM:
        raise CryptoError("SCHEME_MISMATCH", "not a hybrid signature")
    try:
        r = Reader(sig.payload)
        classical, pq = r.lp(), r.lp()
        r.expect_end()
    except ValueError as exc:
        raise _malformed(str(exc)) from exc
    return Signature(SchemeId.CLASSICAL_SCHNORR, classical), Signature(pq_scheme, pq)


def _component_ok(public: bytes, sig: Signature, msg: bytes, config: SchemeConfig) -> bool:
    # a malformed half counts as a failed half so the other half can still satisfy EITHER
    try:
        return verify(public, sig.scheme, msg, sig, config)
    except CryptoError as exc:
        if exc.code == "MALFORMED_SIGNATURE":
            return False
        raise


def hybrid_verify(
    publics: HybridPublic,
    msg: bytes,
    sig: Signature,
    policy: VerificationPolicy,
    config: SchemeConfig = DEFAULT_CONFIG,
) -> bool:
    classical_sig, pq_sig = split_hybrid(sig, publics.pq_scheme)
    c = _component_ok(publics.classical, classical_sig, msg, config)
    p = _component_ok(publics.pq, pq_sig, msg, config)
    return apply_policy(policy, c, p)


def scheme_sizes(scheme: SchemeId, config: SchemeConfig = DEFAULT_CONFIG) -> SizeReport:
    scheme = SchemeId(scheme)
    if scheme is SchemeId.CLASSICAL_SCHNORR:
        g = config.group
        return SizeReport(g.p_bytes, g.q_bytes, 2 * g.q_bytes)
    if scheme is SchemeId.PQ_WOTS:
        return SizeReport(hashsig.WOTS_BYTES, 32, hashsig.WOTS_BYTES)
    if scheme is SchemeId.PQ_MSS:
        return SizeReport(32, 32, 4 + hashsig.WOTS_BYTES + 32 * config.mss_height)
    c = scheme_sizes(SchemeId.CLASSICAL_SCHNORR, config)
    p = scheme_sizes(config.hybrid_pq, config)
    return SizeReport(
        2 + c.public_key_bytes + 1 + 2 + p.public_key_bytes,
        2 + c.private_key_bytes + 2 + p.private_key_bytes,
        2 + c.signature_bytes + 2 + p.signature_bytes,
    )
