"""Hashing, randomness and the pluggable signature schemes."""

from .hashsig import WOTS, WotsParams
from .primitives import DOMAIN_TAGS, Drbg, hash
from .schemes import (
    DEFAULT_CONFIG,
    PQ_SCHEMES,
    ROLE_DEFAULTS,
    HybridPublic,
    KeyPair,
    MerkleKeyState,
    SchemeConfig,
    SchemeId,
    Signature,
    SizeReport,
    VerificationPolicy,
    apply_policy,
    hybrid_public,
    hybrid_sign,
    hybrid_verify,
    keygen,
    scheme_sizes,
    sign,
    split_hybrid,
    verify,
)
from .schnorr import DEFAULT_GROUP, GroupParams

__all__ = [
    "DEFAULT_CONFIG",
    "DEFAULT_GROUP",
    "DOMAIN_TAGS",
    "Drbg",
    "GroupParams",
    "HybridPublic",
    "KeyPair",
    "MerkleKeyState",
    "PQ_SCHEMES",
    "ROLE_DEFAULTS",
    "SchemeConfig",
    "SchemeId",
    "Signature",
    "SizeReport",
    "VerificationPolicy",
    "WOTS",
    "WotsParams",
    "apply_policy",
    "hash",
    "hybrid_public",
    "hybrid_sign",
    "hybrid_verify",
    "keygen",
    "scheme_sizes",
    "sign",
    "split_hybrid",
    "verify",
]
