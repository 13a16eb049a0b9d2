"""Hybrid PKI: issuance and policy-driven chain verification.

Composite certificates carry the classical key in the main body and the
post-quantum key as an extension field; each issuer signs the same
to-be-signed bytes once per key family it holds. Non-composite setups use two
single-family certificates bound by a reference (``link_ref``) and a link
proof: the PQ request signed with the classical private key.

Validity is measured in simulation ticks.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field, replace

from .crypto import (
    PQ_SCHEMES,
    Drbg,
    KeyPair,
    SchemeConfig,
    SchemeId,
    Signature,
    VerificationPolicy,
    apply_policy,
    sign,
    verify,
)
from .crypto.primitives import Reader, lp
from .errors import CryptoError, PkiError


class Role(enum.IntEnum):
    ROOT_CA = 1
    SUB_CA = 2
    WALLET = 3
    REGISTER = 4


CA_ROLES = frozenset({Role.ROOT_CA, Role.SUB_CA})
END_ROLES = frozenset({Role.WALLET, Role.REGISTER})


class Failure(enum.Enum):
    EXPIRED = "EXPIRED"
    BAD_SIGNATURE = "BAD_SIGNATURE"
    BROKEN_CHAIN = "BROKEN_CHAIN"
    POLICY_UNSATISFIED = "POLICY_UNSATISFIED"
    WRONG_ROLE = "WRONG_ROLE"
    LINK_PROOF_INVALID = "LINK_PROOF_INVALID"


@dataclass(frozen=True)
class VerificationReport:
    ok: bool
    failure: Failure | None = None
    position: int | None = None  # index of the offending certificate, leaf = 0

    def __post_init__(self):
        assert self.ok == (self.failure is None)

    @classmethod
    def fail(cls, failure: Failure, position: int | None = None) -> "VerificationReport":
        return cls(False, failure, position)


OK = VerificationReport(True)


@dataclass(frozen=True)
class Certificate:
    serial: bytes
    subject: str
    role: Role
    classical_pub: bytes | None
    pq_pub: bytes | None
    pq_scheme: SchemeId | None
    not_before: int
    not_after: int
    issuer_serial: bytes
    link_ref: bytes | None = None
    issuer_sig_classical: Signature | None = None
    issuer_sig_pq: Signature | None = None

    def tbs(self) -> bytes:
        """Canonical to-be-signed bytes: every field except the signatures."""
        return (
            self.serial
            + lp(self.subject.encode("utf-8"))
            + bytes([self.role])
            + lp(self.classical_pub or b"")
            + bytes([self.pq_scheme or 0])
            + lp(self.pq_pub or b"")
            + struct.pack(">QQ", self.not_before, self.not_after)
            + self.issuer_serial
            + lp(self.link_ref or b"")
        )

    def encode(self) -> bytes:
        sc = self.issuer_sig_classical.encode() if self.issuer_sig_classical else b""
        sp = self.issuer_sig_pq.encode() if self.issuer_sig_pq else b""
        return self.tbs() + lp(sc) + lp(sp)

    @classmethod
    def decode(cls, data: bytes) -> "Certificate":
        try:
            r = Reader(data)
            serial = r.take(16)
            subject = r.lp().decode("utf-8")
            role = Role(r.u8())
            classical = r.lp() or None
            scheme_code = r.u8()
            pq = r.lp() or None
            nb, na = r.u64(), r.u64()
            issuer = r.take(16)
            link = r.lp() or None
            sc, sp = r.lp(), r.lp()
            r.expect_end()
            sig_c = Signature.decode(sc) if sc else None
            sig_p = Signature.decode(sp) if sp else None
            pq_scheme = SchemeId(scheme_code) if scheme_code else None
        except (ValueError, UnicodeDecodeError, CryptoError) as exc:
            raise PkiError("MALFORMED_CERTIFICATE", str(exc)) from exc
        return cls(serial, subject, role, classical, pq, pq_scheme, nb, na, issuer, link, sig_c, sig_p)

    @property
    def self_signed(self) -> bool:
        return self.issuer_serial == self.serial

    def valid_at(self, now: int) -> bool:
        return self.not_before <= now <= self.not_after

    def hex(self) -> str:
        return self.encode().hex()


@dataclass
class CaKeys:
    """Private keys of an issuing entity; either family may be absent."""

    classical: KeyPair | None = None
    pq: KeyPair | None = None

    @property
    def pq_scheme(self) -> SchemeId | None:
        return self.pq.scheme if self.pq else None


@dataclass(frozen=True)
class SubjectKeys:
    classical: bytes | None = None
    pq: bytes | None = None
    pq_scheme: SchemeId | None = None

    @classmethod
    def of(cls, keys: CaKeys) -> "SubjectKeys":
        return cls(
            keys.classical.public if keys.classical else None,
            keys.pq.public if keys.pq else None,
            keys.pq_scheme,
        )


@dataclass(frozen=True)
class LinkedCertPair:
    classical_cert: Certificate
    pq_cert: Certificate
    link_proof: Signature


@dataclass(frozen=True)
class LinkedChain:
    """A linked pair plus the issuer chains above each half (leaf-side first)."""

    pair: LinkedCertPair
    classical_issuers: tuple[Certificate, ...]
    pq_issuers: tuple[Certificate, ...]


@dataclass
class CertificateAuthority:
    """Convenience bundle of a CA certificate and its private keys."""

    cert: Certificate
    keys: CaKeys
    config: SchemeConfig = field(default_factory=SchemeConfig)


def _sign_cert(cert: Certificate, keys: CaKeys, config: SchemeConfig) -> Certificate:
    tbs = cert.tbs()
    sig_c = sign(keys.classical, tbs, config) if keys.classical else None
    sig_p = sign(keys.pq, tbs, config) if keys.pq else None
    return replace(cert, issuer_sig_classical=sig_c, issuer_sig_pq=sig_p)


def _check_validity(validity: tuple[int, int]) -> tuple[int, int]:
    nb, na = validity
    if not 0 <= nb <= na:
        raise PkiError("INVALID_VALIDITY", f"not_before {nb} > not_after {na}")
    return nb, na


def issue_root(
    keys: CaKeys,
    validity: tuple[int, int],
    rng: Drbg,
    subject: str = "root",
    config: SchemeConfig = SchemeConfig(),
) -> Certificate:
    if keys.classical is None and keys.pq is None:
        raise PkiError("NO_KEYS")
    nb, na = _check_validity(validity)
    serial = rng.read(16)
    subj = SubjectKeys.of(keys)
    cert = Certificate(serial, subject, Role.ROOT_CA, subj.classical, subj.pq, subj.pq_scheme, nb, na, serial)
    return _sign_cert(cert, keys, config)


def _check_issuer_keys(issuer_cert: Certificate, keys: CaKeys) -> None:
    for pub, key in ((issuer_cert.classical_pub, keys.classical), (issuer_cert.pq_pub, keys.pq)):
        if pub is not None and (key is None or key.public != pub):
            raise PkiError("KEY_MISMATCH", "issuer keys do not match the issuer certificate")


def issue(
    issuer_cert: Certificate,
    issuer_keys: CaKeys,
    subject_pubs: SubjectKeys,
    role: Role,
    validity: tuple[int, int],
    rng: Drbg,
    subject: str = "",
    link_ref: bytes | None = None,
    config: SchemeConfig = SchemeConfig(),
) -> Certificate:
    if issuer_cert.role not in CA_ROLES:
        raise PkiError("WRONG_ROLE", f"{issuer_cert.role.name} may not issue")
    if role is Role.ROOT_CA:
        raise PkiError("WRONG_ROLE", "root certificates are self-issued only")
    if subject_pubs.classical is None and subject_pubs.pq is None:
        raise PkiError("NO_KEYS")
    if subject_pubs.pq is not None and subject_pubs.pq_scheme not in PQ_SCHEMES:
        raise PkiError("NO_KEYS", "pq public key needs a PQ scheme id")
    nb, na = _check_validity(validity)
    if nb < issuer_cert.not_before or na > issuer_cert.not_after:
        raise PkiError("VALIDITY_EXCEEDS_ISSUER")
    _check_issuer_keys(issuer_cert, issuer_keys)
    # only sign with families the issuer certificate actually advertises
    keys = CaKeys(
        issuer_keys.classical if issuer_cert.classical_pub else None,
        issuer_keys.pq if issuer_cert.pq_pub else None,
    )
    cert = Certificate(
        rng.read(16),
        subject,
        role,
        subject_pubs.classical,
        subject_pubs.pq,
        subject_pubs.pq_scheme if subject_pubs.pq else None,
        nb,
        na,
        issuer_cert.serial,
        link_ref,
    )
    return _sign_cert(cert, keys, config)


# --------------------------------------------------------------------------
# linked (non-composite) pairs
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PqRequest:
    """Certificate request for the PQ half of a linked pair."""

    subject: str
    role: Role
    pq_pub: bytes
    pq_scheme: SchemeId

    def canonical(self, link_ref: bytes) -> bytes:
        return (
            b"pq-csr"
            + lp(self.subject.encode("utf-8"))
            + bytes([self.role, self.pq_scheme])
            + lp(self.pq_pub)
            + link_ref
        )


def request_of(cert: Certificate) -> PqRequest:
    return PqRequest(cert.subject, cert.role, cert.pq_pub or b"", cert.pq_scheme or SchemeId.PQ_MSS)


def link_proof_ok(pair: LinkedCertPair, config: SchemeConfig = SchemeConfig()) -> bool:
    c, p = pair.classical_cert, pair.pq_cert
    if c.classical_pub is None or p.pq_pub is None or p.link_ref != c.serial:
        return False
    if pair.link_proof.scheme is not SchemeId.CLASSICAL_SCHNORR:
        return False
    try:
        return verify(c.classical_pub, SchemeId.CLASSICAL_SCHNORR, request_of(p).canonical(c.serial), pair.link_proof, config)
    except CryptoError:
        return False


def link_certs(
    classical_cert: Certificate,
    classical_key: KeyPair,
    pq_request: PqRequest,
    issuer_cert: Certificate,
    issuer_keys: CaKeys,
    validity: tuple[int, int],
    rng: Drbg,
    config: SchemeConfig = SchemeConfig(),
) -> LinkedCertPair:
    """Issue the PQ certificate of a linked pair; the CA checks the link proof first."""
    proof = sign(classical_key, pq_request.canonical(classical_cert.serial), config)
    pq_cert = issue(
        issuer_cert,
        issuer_keys,
        SubjectKeys(pq=pq_request.pq_pub, pq_scheme=pq_request.pq_scheme),
        pq_request.role,
        validity,
        rng,
        subject=pq_request.subject,
        link_ref=classical_cert.serial,
        config=config,
    )
    pair = LinkedCertPair(classical_cert, pq_cert, proof)
    if not link_proof_ok(pair, config):
        raise PkiError("LINK_PROOF_INVALID", "request not signed by the classical certificate's key")
    return pair


# --------------------------------------------------------------------------
# verification
# --------------------------------------------------------------------------


def _family_result(pub, scheme, sig, msg, config) -> bool | None:
    """None if the family is absent, otherwise whether the signature verifies."""
    if pub is None or sig is None:
        return None
    if sig.scheme is not scheme:
        return False
    try:
        return verify(pub, scheme, msg, sig, config)
    except CryptoError:
        return False


def _check_signatures(cert: Certificate, issuer: Certificate, policy: VerificationPolicy, config) -> Failure | None:
    tbs = cert.tbs()

    def classical():
        return _family_result(issuer.classical_pub, SchemeId.CLASSICAL_SCHNORR, cert.issuer_sig_classical, tbs, config)

    def pq():
        return _family_result(issuer.pq_pub, issuer.pq_scheme, cert.issuer_sig_pq, tbs, config)

    # families the policy does not need are never evaluated (extension skip)
    if policy is VerificationPolicy.CLASSICAL_ONLY:
        results = {"c": classical()}
    elif policy is VerificationPolicy.PQ_ONLY:
        results = {"p": pq()}
    elif policy is VerificationPolicy.BOTH:
        results = {"c": classical(), "p": pq()}
    else:
        c = classical()
        results = {"c": c} if c else {"c": c, "p": pq()}

    ok = apply_policy(policy, bool(results.get("c")), bool(results.get("p")))
    if ok:
        return None
    if any(v is False for v in results.values()):
        return Failure.BAD_SIGNATURE
    return Failure.POLICY_UNSATISFIED


def verify_chain(
    chain,
    trust_root: Certificate,
    policy: VerificationPolicy,
    now: int,
    config: SchemeConfig = SchemeConfig(),
) -> VerificationReport:
    """Verify a leaf-first chain (or a :class:`LinkedChain`) at tick ``now``.

    The policy is an argument, not certificate state, so it can change at any
    time without reissuing anything.
    """
    if isinstance(chain, LinkedChain):
        return _verify_linked(chain, trust_root, policy, now, config)
    chain = list(chain)
    if not chain:
        return VerificationReport.fail(Failure.BROKEN_CHAIN)
    top = len(chain) - 1
    if chain[top].encode() != trust_root.encode():
        return VerificationReport.fail(Failure.BROKEN_CHAIN, top)
    for i, cert in enumerate(chain):
        if i == top:
            if cert.role is not Role.ROOT_CA or not cert.self_signed:
                return VerificationReport.fail(Failure.WRONG_ROLE, i)
        elif i > 0 and cert.role is not Role.SUB_CA:
            return VerificationReport.fail(Failure.WRONG_ROLE, i)
        elif i == 0 and cert.role is Role.ROOT_CA:
            return VerificationReport.fail(Failure.WRONG_ROLE, i)
        if i < top and cert.issuer_serial != chain[i + 1].serial:
            return VerificationReport.fail(Failure.BROKEN_CHAIN, i)
    for i, cert in enumerate(chain):
        if not cert.valid_at(now):
            return VerificationReport.fail(Failure.EXPIRED, i)
    for i, cert in enumerate(chain):
        issuer = chain[min(i + 1, top)]
        failure = _check_signatures(cert, issuer, policy, config)
        if failure is not None:
            return VerificationReport.fail(failure, i)
    return OK


def _verify_linked(chain: LinkedChain, trust_root, policy, now, config) -> VerificationReport:
    if not link_proof_ok(chain.pair, config):
        return VerificationReport.fail(Failure.LINK_PROOF_INVALID, 0)
    classical_chain = [chain.pair.classical_cert, *chain.classical_issuers]
    pq_chain = [chain.pair.pq_cert, *chain.pq_issuers]

    def run_classical():
        return verify_chain(classical_chain, trust_root, VerificationPolicy.CLASSICAL_ONLY, now, config)

    def run_pq():
        return verify_chain(pq_chain, trust_root, VerificationPolicy.PQ_ONLY, now, config)

    if policy is VerificationPolicy.CLASSICAL_ONLY:
        return run_classical()
    if policy is VerificationPolicy.PQ_ONLY:
        return run_pq()
    c = run_classical()
    if policy is VerificationPolicy.EITHER and c.ok:
        return c
    if policy is VerificationPolicy.BOTH and not c.ok:
        return c
    return run_pq()


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------


def new_ca_keys(rng: Drbg, classical: bool = True, pq: bool = True, config: SchemeConfig = SchemeConfig()) -> CaKeys:
    from .crypto import keygen

    return CaKeys(
        keygen(SchemeId.CLASSICAL_SCHNORR, rng, config) if classical else None,
        keygen(SchemeId.PQ_MSS, rng, config) if pq else None,
    )


def parse_policy(name: str) -> VerificationPolicy:
    try:
        return VerificationPolicy(name)
    except ValueError:
        raise PkiError("UNKNOWN_POLICY", name) from None
