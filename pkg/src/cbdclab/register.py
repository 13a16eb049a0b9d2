"""The central bank register.

Tokens are UTxO-style: a transfer consumes its inputs entirely and mints new
output tokens. The register checks ownership (address = hash of the revealed
public key), signatures under the scheme family of the token version, the
migration schedule, value balance, and the spent set. Every accepted
transfer returns a receipt signed with the register's many-time PQ key.

Nothing is mutated until a request has passed every check, so a rejected
request leaves the state byte-identical.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

from .crypto import (
    Drbg,
    KeyPair,
    SchemeConfig,
    SchemeId,
    Signature,
    VerificationPolicy,
    hash,
    keygen,
    sign,
    verify,
)
from .errors import CryptoError, RegisterError
from .pki import CaKeys, Certificate, Role, SubjectKeys, issue, issue_root, verify_chain

V1, V2 = 1, 2
VERSION_SCHEMES = {
    V1: frozenset({SchemeId.CLASSICAL_SCHNORR}),
    V2: frozenset({SchemeId.PQ_WOTS, SchemeId.PQ_MSS}),
}
FOREVER = 2**62


def address_of(public: bytes) -> bytes:
    return hash(public, b"addr")


@dataclass(frozen=True)
class Token:
    token_id: bytes
    version: int
    value: int
    owner_addr: bytes
    mint_sig: Signature
    signer: bytes  # serial of the register certificate whose key produced mint_sig

    def content(self) -> bytes:
        return b"token" + self.token_id + struct.pack(">BQ", self.version, self.value) + self.owner_addr + self.signer

    def to_dict(self) -> dict:
        return {
            "token_id": self.token_id.hex(),
            "version": self.version,
            "value": self.value,
            "owner_addr": self.owner_addr.hex(),
            "mint_sig": self.mint_sig.encode().hex(),
            "signer": self.signer.hex(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Token":
        return cls(
            bytes.fromhex(d["token_id"]),
            int(d["version"]),
            int(d["value"]),
            bytes.fromhex(d["owner_addr"]),
            Signature.decode(bytes.fromhex(d["mint_sig"])),
            bytes.fromhex(d["signer"]),
        )


@dataclass(frozen=True)
class TransferInput:
    token_id: bytes
    owner_public: bytes
    signature: Signature


@dataclass(frozen=True)
class TransferOutput:
    value: int
    owner_addr: bytes
    version: int


@dataclass(frozen=True)
class TransferRequest:
    inputs: tuple[TransferInput, ...]
    outputs: tuple[TransferOutput, ...]

    def content(self) -> bytes:
        return transfer_content([i.token_id for i in self.inputs], self.outputs)

    def digest(self) -> bytes:
        return hash(self.content(), b"tx")

    def to_dict(self) -> dict:
        return {
            "inputs": [
                {"token_id": i.token_id.hex(), "owner_public": i.owner_public.hex(), "signature": i.signature.encode().hex()}
                for i in self.inputs
            ],
            "outputs": [{"value": o.value, "owner_addr": o.owner_addr.hex(), "version": o.version} for o in self.outputs],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TransferRequest":
        return cls(
            tuple(
                TransferInput(
                    bytes.fromhex(i["token_id"]),
                    bytes.fromhex(i["owner_public"]),
                    Signature.decode(bytes.fromhex(i["signature"])),
                )
                for i in d["inputs"]
            ),
            tuple(TransferOutput(int(o["value"]), bytes.fromhex(o["owner_addr"]), int(o["version"])) for o in d["outputs"]),
        )


def output_token_ids(req: TransferRequest) -> tuple[bytes, ...]:
    """Ids the register will assign to the outputs of ``req``."""
    digest = req.digest()
    return tuple(hash(digest + struct.pack(">H", i), b"token")[:16] for i in range(len(req.outputs)))


def transfer_content(input_ids, outputs) -> bytes:
    """Canonical bytes every input owner signs: input ids, then outputs."""
    out = b"xfer" + struct.pack(">H", len(input_ids)) + b"".join(input_ids)
    out += struct.pack(">H", len(outputs))
    for o in outputs:
        out += struct.pack(">Q", o.value) + o.owner_addr + bytes([o.version])
    return out


def sign_request(input_tokens, owner_keys, outputs, config: SchemeConfig = SchemeConfig()) -> TransferRequest:
    """Build a request where ``owner_keys[i]`` signs for ``input_tokens[i]``."""
    content = transfer_content([t.token_id for t in input_tokens], outputs)
    inputs = tuple(
        TransferInput(t.token_id, k.public, sign(k, content, config)) for t, k in zip(input_tokens, owner_keys)
    )
    return TransferRequest(inputs, tuple(outputs))


@dataclass(frozen=True)
class Receipt:
    transfer_digest: bytes
    new_token_ids: tuple[bytes, ...]
    tick: int
    register_sig: Signature
    signer: bytes

    def content(self) -> bytes:
        return (
            b"receipt"
            + self.transfer_digest
            + struct.pack(">H", len(self.new_token_ids))
            + b"".join(self.new_token_ids)
            + struct.pack(">Q", self.tick)
            + self.signer
        )

    def to_dict(self) -> dict:
        return {
            "transfer_digest": self.transfer_digest.hex(),
            "new_token_ids": [t.hex() for t in self.new_token_ids],
            "tick": self.tick,
            "register_sig": self.register_sig.encode().hex(),
            "signer": self.signer.hex(),
        }


@dataclass(frozen=True)
class MigrationSchedule:
    v2_activation: int
    soft_deadline: int
    hard_deadline: int

    def supported(self, now: int) -> frozenset[int]:
        if now < self.v2_activation:
            return frozenset({V1})
        if now <= self.hard_deadline:
            return frozenset({V1, V2})
        return frozenset({V2})


NO_MIGRATION = MigrationSchedule(FOREVER, FOREVER, FOREVER)


@dataclass
class RegisterConfig:
    mss_height: int = 10
    value_scale: int = 2  # decimal digits per currency unit
    downgrade_allowed: bool = False
    validity: tuple[int, int] = (0, FOREVER)
    root_mss_height: int = 8


@dataclass
class RegisterDirectory:
    """Public material a wallet needs to check receipts and minted tokens."""

    trust_root: Certificate
    certs: dict[bytes, Certificate] = field(default_factory=dict)
    _verified: set = field(default_factory=set, repr=False, compare=False)

    def chain_for(self, serial: bytes) -> list[Certificate] | None:
        cert = self.certs.get(serial)
        return None if cert is None else [cert, self.trust_root]

    def chain_ok(self, serial: bytes, policy: VerificationPolicy, now: int) -> bool:
        chain = self.chain_for(serial)
        if chain is None:
            return False
        if (serial, policy) in self._verified:
            # signatures already checked; only the validity windows depend on now
            return all(c.valid_at(now) for c in chain)
        if not verify_chain(chain, self.trust_root, policy, now).ok:
            return False
        self._verified.add((serial, policy))
        return True


def _signed_by_register(msg: bytes, sig: Signature, signer: bytes, directory: RegisterDirectory, policy, now) -> bool:
    if not directory.chain_ok(signer, policy, now):
        return False
    cert = directory.certs[signer]
    if cert.role is not Role.REGISTER or cert.pq_pub is None or sig.scheme is not cert.pq_scheme:
        return False
    try:
        return verify(cert.pq_pub, cert.pq_scheme, msg, sig)
    except CryptoError:
        return False


def verify_receipt(receipt: Receipt, directory: RegisterDirectory, policy=VerificationPolicy.EITHER, now: int = 0) -> bool:
    return _signed_by_register(receipt.content(), receipt.register_sig, receipt.signer, directory, policy, now)


def verify_token(token: Token, directory: RegisterDirectory, policy=VerificationPolicy.EITHER, now: int = 0) -> bool:
    return _signed_by_register(token.content(), token.mint_sig, token.signer, directory, policy, now)


class Register:
    """Single-writer register state plus the operations that mutate it."""

    def __init__(self, rng: Drbg, config: RegisterConfig | None = None):
        self.config = config or RegisterConfig()
        self._rng = rng
        self._scheme_cfg = SchemeConfig(mss_height=self.config.mss_height)
        root_cfg = SchemeConfig(mss_height=self.config.root_mss_height)
        self.root_keys = CaKeys(keygen(SchemeId.CLASSICAL_SCHNORR, rng), keygen(SchemeId.PQ_MSS, rng, root_cfg))
        self.root = issue_root(self.root_keys, self.config.validity, rng, "central-bank-root", root_cfg)
        self.directory = RegisterDirectory(self.root)
        self.live: dict[bytes, Token] = {}
        self.spent: set[bytes] = set()
        self.schedule = NO_MIGRATION
        self.downgrade_allowed = self.config.downgrade_allowed
        self.clock = 0
        self.reveal_log: list[tuple[bytes, int]] = []
        self.revealed_addrs: set[bytes] = set()
        self.events: list[dict] = []
        self.minted_total = 0
        self.premature_conversions = 0
        self.conversions = 0
        self._by_addr: dict[bytes, set[bytes]] = {}
        self._rollover()

    # --- keys -------------------------------------------------------------

    def _rollover(self) -> None:
        self.register_key = keygen(SchemeId.PQ_MSS, self._rng, self._scheme_cfg)
        self.register_cert = issue(
            self.root,
            self.root_keys,
            SubjectKeys(pq=self.register_key.public, pq_scheme=SchemeId.PQ_MSS),
            Role.REGISTER,
            self.config.validity,
            self._rng,
            subject="register",
        )
        self.directory.certs[self.register_cert.serial] = self.register_cert

    def _reserve(self, n: int) -> None:
        if self.register_key.ots_state.remaining < n:
            self._rollover()

    def _sign(self, msg: bytes) -> Signature:
        return sign(self.register_key, msg, self._scheme_cfg)

    @property
    def register_chain(self) -> list[Certificate]:
        return [self.register_cert, self.root]

    # --- schedule ---------------------------------------------------------

    def set_migration(self, v2_activation: int, soft_deadline: int, hard_deadline: int, downgrade_allowed: bool) -> None:
        if not v2_activation <= soft_deadline <= hard_deadline:
            raise RegisterError("DEADLINE_ORDER", f"{v2_activation} <= {soft_deadline} <= {hard_deadline} violated")
        self.schedule = MigrationSchedule(v2_activation, soft_deadline, hard_deadline)
        self.downgrade_allowed = downgrade_allowed

    def supported_versions(self, now: int | None = None) -> frozenset[int]:
        return self.schedule.supported(self.clock if now is None else now)

    def _tick(self, now: int | None) -> int:
        if now is None:
            return self.clock
        if now < self.clock:
            raise RegisterError("CLOCK_REGRESSION", f"{now} < {self.clock}")
        return now

    # --- minting ----------------------------------------------------------

    def _new_token(self, token_id: bytes, version: int, value: int, owner_addr: bytes) -> Token:
        signer = self.register_cert.serial
        draft = Token(token_id, version, value, owner_addr, Signature(SchemeId.PQ_MSS, b""), signer)
        return Token(token_id, version, value, owner_addr, self._sign(draft.content()), signer)

    def _add_live(self, token: Token) -> None:
        self.live[token.token_id] = token
        self._by_addr.setdefault(token.owner_addr, set()).add(token.token_id)

    def _remove_live(self, token_id: bytes) -> Token:
        token = self.live.pop(token_id)
        ids = self._by_addr[token.owner_addr]
        ids.discard(token_id)
        if not ids:
            del self._by_addr[token.owner_addr]
        self.spent.add(token_id)
        return token

    def mint(self, value: int, owner_addr: bytes, version: int, now: int | None = None) -> Token:
        now = self._tick(now)
        if version not in self.supported_versions(now):
            raise RegisterError("UNSUPPORTED_VERSION", f"v{version} not accepted at tick {now}")
        if value < 1:
            raise RegisterError("VALUE_MISMATCH", "token value must be >= 1")
        self._reserve(1)
        token_id = hash(b"mint" + struct.pack(">Q", len(self.events)) + owner_addr + self._rng.read(16), b"token")[:16]
        token = self._new_token(token_id, version, value, owner_addr)
        self._add_live(token)
        self.minted_total += value
        self.clock = now
        self.events.append({"event": "MINT", "tick": now, "token": token.to_dict()})
        return token

    # --- transfers --------------------------------------------------------

    def check_transfer(self, req: TransferRequest, now: int) -> None:
        """Raise the first applicable RegisterError; never mutates."""
        if not req.inputs or not req.outputs:
            raise RegisterError("MALFORMED_REQUEST", "inputs and outputs must be nonempty")
        ids = [i.token_id for i in req.inputs]
        if len(set(ids)) != len(ids):
            raise RegisterError("MALFORMED_REQUEST", "duplicate input")
        supported = self.supported_versions(now)
        content = req.content()
        total_in = 0
        max_in_version = 0
        for inp in req.inputs:
            if inp.token_id in self.spent:
                raise RegisterError("DOUBLE_SPEND", inp.token_id.hex())
            token = self.live.get(inp.token_id)
            if token is None:
                raise RegisterError("UNKNOWN_TOKEN", inp.token_id.hex())
            if address_of(inp.owner_public) != token.owner_addr:
                raise RegisterError("OWNER_MISMATCH", inp.token_id.hex())
            if token.version not in supported:
                raise RegisterError("TOKEN_VERSION_EXPIRED", f"v{token.version} not accepted at tick {now}")
            sig = inp.signature
            if sig.scheme not in VERSION_SCHEMES[token.version]:
                raise RegisterError("BAD_SIGNATURE", f"{sig.scheme.name} not valid for v{token.version}")
            try:
                ok = verify(inp.owner_public, sig.scheme, content, sig)
            except CryptoError:
                ok = False
            if not ok:
                raise RegisterError("BAD_SIGNATURE", inp.token_id.hex())
            total_in += token.value
            max_in_version = max(max_in_version, token.version)
        if any(o.value < 1 for o in req.outputs) or sum(o.value for o in req.outputs) != total_in:
            raise RegisterError("VALUE_MISMATCH", f"inputs {total_in} != outputs {sum(o.value for o in req.outputs)}")
        for o in req.outputs:
            if o.version not in supported:
                raise RegisterError("UNSUPPORTED_VERSION", f"output v{o.version} not accepted at tick {now}")
            if o.version < max_in_version and not self.downgrade_allowed:
                raise RegisterError("VERSION_DOWNGRADE_FORBIDDEN", f"v{max_in_version} -> v{o.version}")

    def validate_transfer(self, req: TransferRequest, now: int | None = None, _event: str = "TRANSFER") -> Receipt:
        now = self._tick(now)
        self.check_transfer(req, now)
        self._reserve(len(req.outputs) + 1)
        digest = req.digest()
        out_ids = output_token_ids(req)
        # sign everything first so a signing failure leaves the ledger untouched
        new_tokens = [self._new_token(t, o.version, o.value, o.owner_addr) for t, o in zip(out_ids, req.outputs)]
        signer = self.register_cert.serial
        ids = tuple(t.token_id for t in new_tokens)
        draft = Receipt(digest, ids, now, Signature(SchemeId.PQ_MSS, b""), signer)
        receipt = Receipt(digest, ids, now, self._sign(draft.content()), signer)
        for inp in req.inputs:
            self._remove_live(inp.token_id)
            self.reveal_log.append((inp.owner_public, now))
            self.revealed_addrs.add(address_of(inp.owner_public))
        for token in new_tokens:
            self._add_live(token)
        self.clock = now
        self.events.append(
            {
                "event": _event,
                "tick": now,
                "request": req.to_dict(),
                "outputs": [t.to_dict() for t in new_tokens],
                "receipt": receipt.to_dict(),
            }
        )
        return receipt

    def convert_version(
        self,
        token_id: bytes,
        owner_public: bytes,
        signature: Signature,
        new_version: int,
        new_owner_addr: bytes,
        now: int | None = None,
    ) -> Token:
        """1-in/1-out transfer that keeps the value and changes the version."""
        now = self._tick(now)
        if token_id in self.spent:
            raise RegisterError("DOUBLE_SPEND", token_id.hex())
        token = self.live.get(token_id)
        if token is None:
            raise RegisterError("UNKNOWN_TOKEN", token_id.hex())
        req = TransferRequest(
            (TransferInput(token_id, owner_public, signature),),
            (TransferOutput(token.value, new_owner_addr, new_version),),
        )
        receipt = self.validate_transfer(req, now, _event="CONVERT")
        self.conversions += 1
        if new_version > token.version and now < self.schedule.soft_deadline:
            self.premature_conversions += 1
        return self.live[receipt.new_token_ids[0]]

    # --- queries ----------------------------------------------------------

    def has_tokens(self, addr: bytes) -> bool:
        return addr in self._by_addr

    def tokens_at(self, addr: bytes) -> list[Token]:
        return [self.live[t] for t in sorted(self._by_addr.get(addr, ()))]

    def live_value(self, version: int | None = None, exclude_addrs=()) -> int:
        return sum(
            t.value for t in self.live.values() if (version is None or t.version == version) and t.owner_addr not in exclude_addrs
        )

    def stranded_value(self, now: int | None = None) -> int:
        now = self.clock if now is None else now
        if now <= self.schedule.hard_deadline:
            raise RegisterError("BEFORE_DEADLINE", f"tick {now} <= hard deadline {self.schedule.hard_deadline}")
        return self.live_value(V1)

    def event_log_lines(self) -> list[str]:
        return [json.dumps(e, sort_keys=True, separators=(",", ":")) for e in self.events]

    def snapshot(self) -> bytes:
        """Canonical serialization used to prove rejected requests change nothing."""
        state = {
            "live": sorted(t.to_dict()["token_id"] + ":" + json.dumps(t.to_dict(), sort_keys=True) for t in self.live.values()),
            "spent": sorted(s.hex() for s in self.spent),
            "clock": self.clock,
            "reveal_log": [(p.hex(), t) for p, t in self.reveal_log],
            "events": len(self.events),
            "key_leaf": self.register_key.ots_state.next_leaf,
            "register_cert": self.register_cert.hex(),
            "schedule": [self.schedule.v2_activation, self.schedule.soft_deadline, self.schedule.hard_deadline],
            "downgrade_allowed": self.downgrade_allowed,
            "minted_total": self.minted_total,
        }
        return json.dumps(state, sort_keys=True).encode()
