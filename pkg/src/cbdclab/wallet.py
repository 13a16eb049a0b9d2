"""Custodial wallets: identifiers, capabilities, negotiation and migration.

A payment is split in two phases so a simulator can put time between them:
``prepare_payment`` negotiates, selects coins, signs the request and locks
the inputs; ``settle`` submits it to the register and credits both sides.
Offline hardware senders instead park the prepared payment as a deferred
record and hand the payee provisional tokens whose ids are already fixed by
the request digest.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field

from .crypto import Drbg, KeyPair, SchemeConfig, SchemeId, Signature, VerificationPolicy, keygen, sign
from .errors import RegisterError, WalletError
from .pki import CertificateAuthority, Certificate, Role, SubjectKeys, issue
from .register import (
    V1,
    V2,
    Receipt,
    Register,
    RegisterDirectory,
    Token,
    TransferOutput,
    TransferRequest,
    address_of,
    output_token_ids,
    sign_request,
    transfer_content,
    verify_receipt,
    verify_token,
)


class Kind(enum.Enum):
    SOFTWARE = "software"
    HARDWARE = "hardware"


class Generation(enum.Enum):
    OLD = "old"
    NEW = "new"


class RotationPolicy(enum.Enum):
    FRESH_ADDRESS = "fresh"
    REUSE_ADDRESS = "reuse"


GENERATION_VERSIONS = {Generation.OLD: frozenset({V1}), Generation.NEW: frozenset({V1, V2})}

# payment cases, keyed by (sender generation, receiver generation)
_CASE_NUMBER = {
    (Generation.OLD, Generation.OLD): 1,
    (Generation.OLD, Generation.NEW): 2,
    (Generation.NEW, Generation.OLD): 3,
    (Generation.NEW, Generation.NEW): 4,
}
CASE_LABELS = ("1a", "1b", "2a", "2b", "3a", "3b", "4a", "4b")
UNREACHABLE_CASES = frozenset({"1b", "2b"})


def case_label(sender: Generation, receiver: Generation, input_versions) -> str:
    label = f"{_CASE_NUMBER[sender, receiver]}{'b' if V2 in set(input_versions) else 'a'}"
    # an OLD wallet can never hold a v2 token, so it can never spend one
    assert label not in UNREACHABLE_CASES, label
    return label


@dataclass
class WalletProfile:
    kind: Kind
    generation: Generation
    online: bool = True

    @property
    def supported_versions(self) -> frozenset[int]:
        return GENERATION_VERSIONS[self.generation]


@dataclass(frozen=True)
class NegotiationOffer:
    versions: frozenset[int]


@dataclass(frozen=True)
class NegotiationSelection:
    version: int


@dataclass
class WalletConfig:
    cert_mss_height: int = 4
    reuse_mss_height: int = 6
    reuse_headroom: int = 8  # rotate the reused MSS key when fewer leaves remain
    validity: tuple[int, int] | None = None  # defaults to the issuer's window


@dataclass
class Holding:
    token: Token
    key: KeyPair
    provisional: bool = False


@dataclass
class PreparedPayment:
    sender: "Wallet"
    receiver: "Wallet"
    amount: int
    version: int
    request: TransferRequest
    inputs: list[Holding]
    payee_key: KeyPair
    change_key: KeyPair | None
    case: str
    created_tick: int

    @property
    def input_ids(self) -> list[bytes]:
        return [h.token.token_id for h in self.inputs]


@dataclass
class DeferredRecord:
    payment: PreparedPayment
    created_tick: int
    uploaded: bool = False

    @property
    def request(self) -> TransferRequest:
        return self.payment.request


@dataclass
class TransferOutcome:
    case: str
    version: int
    amount: int
    receipt: Receipt | None = None
    deferred: bool = False
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class ConversionReport:
    converted: int = 0
    value: int = 0
    errors: list[str] = field(default_factory=list)


class Wallet:
    def __init__(
        self,
        wallet_id: bytes,
        profile: WalletProfile,
        cert: Certificate,
        rotation_policy: RotationPolicy,
        rng: Drbg,
        config: WalletConfig,
    ):
        self.wallet_id = wallet_id
        self.profile = profile
        self.cert = cert
        self.rotation_policy = rotation_policy
        self.config = config
        self.holdings: dict[bytes, Holding] = {}
        self.locked: set[bytes] = set()
        self.deferred: list[DeferredRecord] = []
        self.keys: dict[bytes, KeyPair] = {}
        self.prompted = False
        self._rng = rng
        self._reuse: dict[int, KeyPair] = {}
        self._identity: tuple[KeyPair, KeyPair | None] | None = None

    # --- keys -------------------------------------------------------------

    @property
    def supported_versions(self) -> frozenset[int]:
        return self.profile.supported_versions

    def _new_key(self, version: int) -> KeyPair:
        if version == V1:
            key = keygen(SchemeId.CLASSICAL_SCHNORR, self._rng)
        elif self.rotation_policy is RotationPolicy.FRESH_ADDRESS:
            key = keygen(SchemeId.PQ_WOTS, self._rng)
        else:
            key = keygen(SchemeId.PQ_MSS, self._rng, SchemeConfig(mss_height=self.config.reuse_mss_height))
        self.keys[address_of(key.public)] = key
        return key

    def receive_key(self, version: int) -> KeyPair:
        """Key whose address the next incoming token of ``version`` is sent to."""
        if version not in self.supported_versions:
            raise WalletError("UNSUPPORTED_VERSION", f"v{version}")
        if self.rotation_policy is RotationPolicy.FRESH_ADDRESS:
            return self._new_key(version)
        key = self._reuse.get(version)
        if key is None or (key.ots_state is not None and key.ots_state.remaining < self.config.reuse_headroom):
            key = self._reuse[version] = self._new_key(version)
        return key

    def rotate_keys(self) -> None:
        """Drop the reused addresses; later receipts go to new keys."""
        self._reuse.clear()

    # --- holdings ---------------------------------------------------------

    def balance(self, version: int | None = None, include_locked: bool = False) -> int:
        return sum(
            h.token.value
            for tid, h in self.holdings.items()
            if (version is None or h.token.version == version) and (include_locked or tid not in self.locked)
        )

    def _credit(self, token: Token, provisional: bool = False) -> None:
        key = self.keys.get(token.owner_addr)
        if key is None:
            raise WalletError("NOT_OWNER", token.token_id.hex())
        self.holdings[token.token_id] = Holding(token, key, provisional)
        if token.version == V2:
            self.prompted = True

    def drop(self, token_ids) -> int:
        """Forget tokens that are no longer ours (stolen, or a failed upload)."""
        lost = 0
        for tid in token_ids:
            h = self.holdings.pop(tid, None)
            self.locked.discard(tid)
            if h is not None:
                lost += h.token.value
        return lost

    def addresses(self) -> set[bytes]:
        return {h.token.owner_addr for h in self.holdings.values()}

    def snapshot(self) -> dict:
        return {
            "wallet_id": self.wallet_id.hex(),
            "kind": self.profile.kind.value,
            "generation": self.profile.generation.value,
            "online": self.profile.online,
            "rotation_policy": self.rotation_policy.value,
            "cert": self.cert.hex(),
            "balance": self.balance(include_locked=True),
            "holdings": [
                dict(h.token.to_dict(), provisional=h.provisional, locked=tid in self.locked)
                for tid, h in sorted(self.holdings.items())
            ],
            "deferred": len(self.deferred),
        }

    def snapshot_text(self) -> str:
        return json.dumps(self.snapshot(), indent=2, sort_keys=True)


def create_wallet(
    profile: WalletProfile,
    issuer: CertificateAuthority,
    rng: Drbg,
    rotation_policy: RotationPolicy = RotationPolicy.FRESH_ADDRESS,
    config: WalletConfig | None = None,
) -> Wallet:
    config = config or WalletConfig()
    wallet_id = rng.read(16)  # drawn before, and independently of, any key material
    wallet_rng = rng.spawn()
    cert, identity = _issue_wallet_cert(profile.generation, issuer, wallet_rng, config, wallet_id)
    wallet = Wallet(wallet_id, profile, cert, rotation_policy, wallet_rng, config)
    wallet._identity = identity
    return wallet


def _issue_wallet_cert(generation, issuer: CertificateAuthority, rng: Drbg, config: WalletConfig, wallet_id: bytes):
    classical = keygen(SchemeId.CLASSICAL_SCHNORR, rng)
    pq = None
    if generation is Generation.NEW:
        pq = keygen(SchemeId.PQ_MSS, rng, SchemeConfig(mss_height=config.cert_mss_height))
    subject = SubjectKeys(classical.public, pq.public if pq else None, SchemeId.PQ_MSS if pq else None)
    validity = config.validity or (issuer.cert.not_before, issuer.cert.not_after)
    cert = issue(issuer.cert, issuer.keys, subject, Role.WALLET, validity, rng, f"wallet-{wallet_id.hex()}", config=issuer.config)
    return cert, (classical, pq)


def adopt(wallet: Wallet, issuer: CertificateAuthority) -> None:
    """Replace an OLD wallet by a NEW one; id, keys and holdings carry over."""
    if wallet.profile.generation is Generation.NEW:
        return
    wallet.profile.generation = Generation.NEW
    wallet.cert, wallet._identity = _issue_wallet_cert(Generation.NEW, issuer, wallet._rng, wallet.config, wallet.wallet_id)


# --- negotiation ------------------------------------------------------------


def offer(sender: Wallet) -> NegotiationOffer:
    return NegotiationOffer(sender.supported_versions)


def select(receiver: Wallet, offered: NegotiationOffer, allowed=None) -> NegotiationSelection:
    common = offered.versions & receiver.supported_versions
    if allowed is not None:
        common &= allowed
    if not common:
        raise WalletError("NO_COMMON_VERSION", f"{sorted(offered.versions)} vs {sorted(receiver.supported_versions)}")
    return NegotiationSelection(max(common))


def negotiate(sender: Wallet, receiver: Wallet) -> int:
    return select(receiver, offer(sender)).version


# --- payments ---------------------------------------------------------------


def _greedy(pool: list[Holding], amount: int) -> list[Holding] | None:
    chosen, total = [], 0
    for h in sorted(pool, key=lambda h: (-h.token.value, h.token.token_id)):
        if total >= amount:
            break
        chosen.append(h)
        total += h.token.value
    return chosen if total >= amount else None


def _spendable(wallet: Wallet, register: Register, now: int) -> list[Holding]:
    accepted = register.supported_versions(now)
    offline = not wallet.profile.online
    return [
        h
        for tid, h in wallet.holdings.items()
        if tid not in wallet.locked and h.token.version in accepted and (offline or not h.provisional)
    ]


def prepare_payment(sender: Wallet, receiver: Wallet, amount: int, register: Register, now: int) -> PreparedPayment:
    if amount < 1:
        raise WalletError("INVALID_AMOUNT", str(amount))
    accepted = register.supported_versions(now)
    version = select(receiver, offer(sender), accepted).version
    pool = _spendable(sender, register, now)
    if sum(h.token.value for h in pool) < amount:
        raise WalletError("INSUFFICIENT_FUNDS", f"{amount} requested")
    inputs = _greedy([h for h in pool if h.token.version <= version], amount)
    if inputs is None:
        if not register.downgrade_allowed:
            raise WalletError("DOWNGRADE_REQUIRED", f"payee accepts only v{version}")
        inputs = _greedy(pool, amount)
    max_in = max(h.token.version for h in inputs)
    assert max_in in sender.supported_versions
    change = sum(h.token.value for h in inputs) - amount

    payee_key = receiver.receive_key(version)
    outputs = [TransferOutput(amount, address_of(payee_key.public), version)]
    change_key = None
    if change:
        change_version = max_in
        if sender.profile.generation is Generation.NEW and now >= register.schedule.soft_deadline and V2 in accepted:
            change_version = V2
        change_key = sender.receive_key(change_version)
        outputs.append(TransferOutput(change, address_of(change_key.public), change_version))

    label = case_label(sender.profile.generation, receiver.profile.generation, [h.token.version for h in inputs])
    request = sign_request([h.token for h in inputs], [h.key for h in inputs], outputs)
    sender.locked.update(h.token.token_id for h in inputs)
    return PreparedPayment(sender, receiver, amount, version, request, inputs, payee_key, change_key, label, now)


def _finish(p: PreparedPayment, tokens: list[Token], receipt: Receipt | None, directory, now) -> None:
    p.sender.drop(p.input_ids)
    if receipt is None:
        p.receiver._credit(tokens[0], provisional=True)
        if len(tokens) > 1:
            p.sender._credit(tokens[1], provisional=True)
        return
    receive(p.receiver, tokens[0], receipt, directory, now)
    if len(tokens) > 1:
        receive(p.sender, tokens[1], receipt, directory, now)


def settle(p: PreparedPayment, register: Register, now: int) -> TransferOutcome:
    """Submit a prepared payment; register errors are reported, not raised."""
    try:
        receipt = register.validate_transfer(p.request, now)
    except RegisterError as exc:
        p.sender.locked.difference_update(p.input_ids)
        return TransferOutcome(p.case, p.version, p.amount, error=exc.code)
    tokens = [register.live[t] for t in receipt.new_token_ids]
    _finish(p, tokens, receipt, register.directory, now)
    return TransferOutcome(p.case, p.version, p.amount, receipt=receipt)


def defer(p: PreparedPayment) -> TransferOutcome:
    """Settle bilaterally now and queue the request for a later upload."""
    provisional = [
        Token(tid, o.version, o.value, o.owner_addr, Signature(SchemeId.PQ_MSS, b""), b"")
        for tid, o in zip(output_token_ids(p.request), p.request.outputs)
    ]
    _finish(p, provisional, None, None, p.created_tick)
    p.sender.deferred.append(DeferredRecord(p, p.created_tick))
    return TransferOutcome(p.case, p.version, p.amount, deferred=True)


def pay(sender: Wallet, receiver: Wallet, amount: int, register: Register, now: int) -> TransferOutcome:
    p = prepare_payment(sender, receiver, amount, register, now)
    if sender.profile.kind is Kind.HARDWARE and not sender.profile.online:
        return defer(p)
    outcome = settle(p, register, now)
    if outcome.error is not None:
        raise RegisterError(outcome.error, f"case {outcome.case}")
    return outcome


def receive(wallet: Wallet, token: Token, receipt: Receipt, directory: RegisterDirectory, now: int,
            policy: VerificationPolicy = VerificationPolicy.EITHER) -> bool:
    if token.version not in wallet.supported_versions:
        raise WalletError("UNSUPPORTED_VERSION", f"v{token.version}")
    if (
        token.token_id not in receipt.new_token_ids
        or not verify_receipt(receipt, directory, policy, now)
        or not verify_token(token, directory, policy, now)
    ):
        raise WalletError("BAD_RECEIPT", token.token_id.hex())
    wallet._credit(token)
    return True


def _replace_provisional(wallet: Wallet, register: Register, ids) -> None:
    for tid in ids:
        h = wallet.holdings.get(tid)
        if h is not None and h.provisional and tid in register.live:
            h.token, h.provisional = register.live[tid], False


def upload_deferred(wallet: Wallet, register: Register, now: int) -> list[Receipt | RegisterError]:
    if not wallet.profile.online:
        raise WalletError("OFFLINE", "upload needs connectivity")
    results: list[Receipt | RegisterError] = []
    records, wallet.deferred = wallet.deferred, []
    for rec in records:
        p = rec.payment
        rec.uploaded = True
        out_ids = output_token_ids(p.request)
        try:
            receipt = register.validate_transfer(p.request, now)
        except RegisterError as exc:
            results.append(exc)
            # the bilateral settlement is void: outputs never existed, inputs stay with the sender
            p.receiver.drop(out_ids[:1])
            p.sender.drop(out_ids[1:])
            for h in p.inputs:
                if h.token.token_id in register.live:
                    p.sender.holdings[h.token.token_id] = h
            continue
        results.append(receipt)
        _replace_provisional(p.receiver, register, out_ids[:1])
        _replace_provisional(p.sender, register, out_ids[1:])
    return results


# --- migration --------------------------------------------------------------


def conversion_signature(key: KeyPair, token: Token, new_version: int, new_addr: bytes) -> Signature:
    return sign(key, transfer_content([token.token_id], [TransferOutput(token.value, new_addr, new_version)]))


def upgrade_holdings(wallet: Wallet, register: Register, now: int) -> ConversionReport:
    if wallet.profile.generation is not Generation.NEW:
        raise WalletError("NOT_NEW", "only NEW wallets can hold v2")
    report = ConversionReport()
    if now < register.schedule.soft_deadline or V2 not in register.supported_versions(now):
        return report
    if wallet.profile.kind is Kind.HARDWARE and not (wallet.prompted and wallet.profile.online):
        return report
    v1 = sorted(
        (h for tid, h in wallet.holdings.items() if h.token.version == V1 and tid not in wallet.locked and not h.provisional),
        key=lambda h: h.token.token_id,
    )
    for h in v1:
        key = wallet.receive_key(V2)
        addr = address_of(key.public)
        try:
            sig = conversion_signature(h.key, h.token, V2, addr)
            new = register.convert_version(h.token.token_id, h.key.public, sig, V2, addr, now)
        except RegisterError as exc:
            report.errors.append(exc.code)
            continue
        wallet.drop([h.token.token_id])
        wallet._credit(new)
        report.converted += 1
        report.value += new.value
    return report
