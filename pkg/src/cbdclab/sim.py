"""Deterministic tick-based simulation of a wallet population migrating
from classical to PQ tokens while a quantum attacker watches revealed keys.

Each tick runs, in order: attacker thefts, pending settlements, deferred
uploads of hardware wallets that came online, new workload, adoption of NEW
wallets, deadline-driven upgrades, and the metrics row. All randomness comes
from one Drbg seeded by the scenario, so ``run`` is a pure function of the
config.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from collections import defaultdict, deque
from dataclasses import MISSING, asdict, dataclass, field, fields

from .crypto import Drbg, KeyPair, SchemeConfig, SchemeId, keygen
from .errors import ConfigError, RegisterError, SimError, WalletError
from .pki import CertificateAuthority, Role, SubjectKeys, issue, new_ca_keys
from .register import V1, V2, Register, RegisterConfig, TransferOutput, address_of, sign_request
from .wallet import (
    CASE_LABELS,
    UNREACHABLE_CASES,
    Generation,
    Kind,
    PreparedPayment,
    RotationPolicy,
    Wallet,
    WalletConfig,
    WalletProfile,
    adopt,
    create_wallet,
    defer,
    prepare_payment,
    settle,
    upgrade_holdings,
    upload_deferred,
)

FAIL_CODES = (
    "INSUFFICIENT_FUNDS",
    "NO_COMMON_VERSION",
    "DOWNGRADE_REQUIRED",
    "DOUBLE_SPEND",
    "UNKNOWN_TOKEN",
    "OWNER_MISMATCH",
    "BAD_SIGNATURE",
    "TOKEN_VERSION_EXPIRED",
    "VALUE_MISMATCH",
    "UNSUPPORTED_VERSION",
    "VERSION_DOWNGRADE_FORBIDDEN",
    "OTHER",
)
COLUMNS = (
    ("tick", "live_v1_value", "live_v2_value")
    + tuple(f"tx_{c}" for c in CASE_LABELS)
    + tuple(f"fail_{c}" for c in FAIL_CODES)
    + ("thefts_value", "stranded_value", "attacker_value", "at_risk_value", "conversions", "premature_conversions")
)


def seed_bytes(value) -> bytes:
    """32-byte seed from a 64-digit hex string or an integer."""
    if isinstance(value, int):
        return Drbg.from_int(value).seed
    if isinstance(value, str):
        raw = bytes.fromhex(value)
        if len(raw) == 32:
            return raw
    if isinstance(value, (bytes, bytearray)) and len(value) == 32:
        return bytes(value)
    raise ValueError("seed must be 32 bytes (64 hex digits) or an integer")


@dataclass(frozen=True)
class ScenarioConfig:
    seed: bytes
    n_wallets: int
    hardware_fraction: float
    initial_new_fraction: float
    adoption_rate: float
    tx_per_tick: int
    amount_distribution: dict
    rotation_policy: dict
    reuse_fraction: float
    finality_delay: int
    attacker_break_delay: int | None  # None = no attacker
    v2_activation: int
    soft_deadline: int
    hard_deadline: int
    downgrade_allowed: bool
    total_ticks: int
    # documented optional fields
    attacker_start_tick: int = 0
    never_upgrade_fraction: float = 0.0
    hardware_duty_cycle: int = 10
    register_mss_height: int = 10
    genesis_value: int = 10000

    def __post_init__(self):
        problems = _validate(self)
        if problems:
            raise ConfigError(problems)

    @property
    def amount_range(self) -> tuple[int, int]:
        return int(self.amount_distribution["min"]), int(self.amount_distribution["max"])

    def policy_for(self, kind: Kind) -> RotationPolicy:
        return RotationPolicy(self.rotation_policy[kind.value])

    def to_dict(self) -> dict:
        d = asdict(self)
        d["seed"] = self.seed.hex()
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        names = {f.name: f for f in fields(cls)}
        required = [n for n, f in names.items() if f.default is MISSING and f.default_factory is MISSING]
        problems = {k: "unknown field" for k in data if k not in names}
        problems.update({k: "required" for k in required if k not in data})
        values = {k: v for k, v in data.items() if k in names}
        if "seed" in values:
            try:
                values["seed"] = seed_bytes(values["seed"])
            except (ValueError, TypeError) as exc:
                problems["seed"] = str(exc)
        if problems:
            raise ConfigError(problems)
        return cls(**values)

    @classmethod
    def from_json(cls, text: str) -> "ScenarioConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError({"<file>": f"not JSON: {exc.msg}"}) from None
        if not isinstance(data, dict):
            raise ConfigError({"<file>": "expected an object"})
        return cls.from_dict(data)


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _validate(c: ScenarioConfig) -> dict[str, str]:
    p: dict[str, str] = {}
    if not isinstance(c.seed, bytes) or len(c.seed) != 32:
        p["seed"] = "must be 32 bytes"
    for name in ("hardware_fraction", "initial_new_fraction", "reuse_fraction", "never_upgrade_fraction"):
        v = getattr(c, name)
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not 0 <= v <= 1:
            p[name] = "must be in [0, 1]"
    for name, lo in (("n_wallets", 2), ("tx_per_tick", 0), ("finality_delay", 0), ("total_ticks", 1),
                     ("hardware_duty_cycle", 1), ("genesis_value", 1), ("attacker_start_tick", 0),
                     ("v2_activation", 0), ("soft_deadline", 0), ("hard_deadline", 0)):
        v = getattr(c, name)
        if not _is_int(v) or v < lo:
            p[name] = f"must be an integer >= {lo}"
    if not _is_int(c.register_mss_height) or not 1 <= c.register_mss_height <= 16:
        p["register_mss_height"] = "must be an integer in [1, 16]"
    if c.attacker_break_delay is not None and (not _is_int(c.attacker_break_delay) or c.attacker_break_delay < 0):
        p["attacker_break_delay"] = "must be a non-negative integer or null"
    if isinstance(c.adoption_rate, bool) or not isinstance(c.adoption_rate, (int, float)) or c.adoption_rate < 0:
        p["adoption_rate"] = "must be >= 0"
    if not isinstance(c.downgrade_allowed, bool):
        p["downgrade_allowed"] = "must be a boolean"
    if not all(k in p for k in ("v2_activation", "soft_deadline", "hard_deadline")):
        if not (_is_int(c.v2_activation) and _is_int(c.soft_deadline) and _is_int(c.hard_deadline)
                and c.v2_activation <= c.soft_deadline <= c.hard_deadline):
            p["hard_deadline"] = "deadlines must satisfy v2_activation <= soft_deadline <= hard_deadline"
    ad = c.amount_distribution
    if not (isinstance(ad, dict) and ad.get("kind", "uniform") == "uniform" and _is_int(ad.get("min"))
            and _is_int(ad.get("max")) and 1 <= ad["min"] <= ad["max"]):
        p["amount_distribution"] = 'expected {"kind": "uniform", "min": m, "max": M} with 1 <= m <= M'
    rp = c.rotation_policy
    valid = {r.value for r in RotationPolicy}
    if not (isinstance(rp, dict) and set(rp) == {k.value for k in Kind} and set(rp.values()) <= valid):
        p["rotation_policy"] = f"expected a policy in {sorted(valid)} for each of software, hardware"
    return p


@dataclass
class MetricsSeries:
    columns: tuple[str, ...] = COLUMNS
    rows: list[tuple[int, ...]] = field(default_factory=list)

    def column(self, name: str) -> list[int]:
        i = self.columns.index(name)
        return [r[i] for r in self.rows]

    def last(self, name: str) -> int:
        return self.rows[-1][self.columns.index(name)]

    def total(self, name: str) -> int:
        return sum(self.column(name))


def report(series: MetricsSeries, fmt: str = "csv") -> str:
    if not series.rows:
        raise SimError("EMPTY_SERIES", "no rows to report")
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(series.columns)
        w.writerows(series.rows)
        return buf.getvalue()
    if fmt == "json":
        return json.dumps([dict(zip(series.columns, r)) for r in series.rows], indent=1) + "\n"
    raise ValueError(f"unknown report format {fmt!r}")


def parse_report(text: str, fmt: str) -> MetricsSeries:
    if fmt == "csv":
        rows = list(csv.reader(io.StringIO(text)))
        return MetricsSeries(tuple(rows[0]), [tuple(int(v) for v in r) for r in rows[1:]])
    data = json.loads(text)
    cols = tuple(data[0])
    return MetricsSeries(cols, [tuple(d[c] for c in cols) for d in data])


# --------------------------------------------------------------------------
# world
# --------------------------------------------------------------------------


@dataclass
class PendingTransfer:
    payment: PreparedPayment
    submit_tick: int
    settle_tick: int


@dataclass
class AttackerState:
    key: KeyPair
    pending: deque = field(default_factory=deque)  # (public, addr, break_tick), in reveal order
    broken: dict = field(default_factory=dict)  # addr -> public, insertion ordered
    known: set = field(default_factory=set)
    stolen_value: int = 0
    addr: bytes = b""

    def __post_init__(self):
        self.addr = address_of(self.key.public)


@dataclass
class WalletMeta:
    phase: int
    never_upgrade: bool


class World:
    def __init__(self, config: ScenarioConfig):
        self.config = c = config
        self.rng = Drbg(c.seed)
        self.register = Register(
            self.rng.spawn(), RegisterConfig(mss_height=c.register_mss_height, downgrade_allowed=c.downgrade_allowed)
        )
        self.register.set_migration(c.v2_activation, c.soft_deadline, c.hard_deadline, c.downgrade_allowed)
        self.ca = self._wallet_ca()
        self.attacker = AttackerState(keygen(SchemeId.CLASSICAL_SCHNORR, self.rng))
        self.wallets: list[Wallet] = []
        self.meta: list[WalletMeta] = []
        self._populate()
        self.pending: list[PendingTransfer] = []
        self.series = MetricsSeries()
        self.tick = 0
        self._adoption_credit = 0.0

    def _wallet_ca(self) -> CertificateAuthority:
        # enough leaves for every wallet certificate plus one re-issue at adoption
        height = max(2, min(16, math.ceil(math.log2(2 * self.config.n_wallets + 2))))
        cfg = SchemeConfig(mss_height=height)
        keys = new_ca_keys(self.rng, config=cfg)
        root = self.register.root
        cert = issue(root, self.register.root_keys, SubjectKeys.of(keys), Role.SUB_CA,
                     (root.not_before, root.not_after), self.rng, "wallet-ca")
        return CertificateAuthority(cert, keys, cfg)

    def _pick(self, fraction: float, pool: list[int]) -> set[int]:
        order = list(pool)
        self.rng.shuffle(order)
        return set(order[: round(fraction * self.config.n_wallets)])

    def _populate(self) -> None:
        c, n = self.config, self.config.n_wallets
        everyone = list(range(n))
        hardware = self._pick(c.hardware_fraction, everyone)
        new = self._pick(c.initial_new_fraction, everyone)
        reuse = self._pick(c.reuse_fraction, everyone)
        never = self._pick(c.never_upgrade_fraction, [i for i in everyone if i not in new])
        for i in everyone:
            kind = Kind.HARDWARE if i in hardware else Kind.SOFTWARE
            gen = Generation.NEW if i in new else Generation.OLD
            policy = RotationPolicy.REUSE_ADDRESS if i in reuse else c.policy_for(kind)
            w = create_wallet(WalletProfile(kind, gen), self.ca, self.rng, policy, WalletConfig())
            self.wallets.append(w)
            self.meta.append(WalletMeta(self.rng.randbelow(c.hardware_duty_cycle), i in never))
        self.adoption_queue = [i for i in everyone if i not in new and i not in never]
        self.rng.shuffle(self.adoption_queue)
        for w in self.wallets:
            key = w.receive_key(V1)
            w._credit(self.register.mint(c.genesis_value, address_of(key.public), V1, now=0))

    # --- helpers ----------------------------------------------------------

    def owner_of(self, addr: bytes) -> Wallet | None:
        for w in self.wallets:
            if addr in w.keys:
                return w
        return None

    def _reveal(self, request, now: int) -> None:
        if self.config.attacker_break_delay is None:
            return
        for inp in request.inputs:
            if inp.signature.scheme is not SchemeId.CLASSICAL_SCHNORR:
                continue  # only classical keys fall to the attacker
            addr = address_of(inp.owner_public)
            if addr not in self.attacker.known:
                self.attacker.known.add(addr)
                self.attacker.pending.append((inp.owner_public, addr, now + self.config.attacker_break_delay))

    def _set_online(self, now: int) -> None:
        duty = self.config.hardware_duty_cycle
        for w, m in zip(self.wallets, self.meta):
            if w.profile.kind is Kind.HARDWARE:
                w.profile.online = (now + m.phase) % duty == 0

    # --- phases -----------------------------------------------------------

    def _attack(self, now: int, row: dict) -> None:
        a = self.attacker
        if self.config.attacker_break_delay is None or now < self.config.attacker_start_tick:
            return
        while a.pending and a.pending[0][2] <= now:
            pub, addr, _ = a.pending.popleft()
            a.broken[addr] = pub
        for addr in list(a.broken):
            if not self.register.has_tokens(addr):
                continue
            owner = self.owner_of(addr)
            tokens = [t for t in self.register.tokens_at(addr) if t.version == V1]
            if owner is None or not tokens:
                continue
            # the broken private key is exactly the owner's key: Shor recovers it from the public key
            key = owner.keys[addr]
            value = sum(t.value for t in tokens)
            req = sign_request(tokens, [key] * len(tokens), [TransferOutput(value, a.addr, V1)])
            try:
                self.register.validate_transfer(req, now)
            except RegisterError:
                continue
            owner.drop([t.token_id for t in tokens])
            a.stolen_value += value
            row["thefts_value"] += value

    def _record(self, row: dict, outcome) -> None:
        if outcome.error is None:
            row[f"tx_{outcome.case}"] += 1
        else:
            self._fail(row, outcome.error)

    @staticmethod
    def _fail(row: dict, code: str) -> None:
        key = f"fail_{code}"
        row[key if key in row else "fail_OTHER"] += 1

    def _settle_due(self, now: int, row: dict) -> None:
        due = [p for p in self.pending if p.settle_tick <= now]
        self.pending = [p for p in self.pending if p.settle_tick > now]
        for p in due:
            self._record(row, settle(p.payment, self.register, now))

    def _uploads(self, now: int, row: dict) -> None:
        for w in self.wallets:
            if w.deferred and w.profile.online:
                records = list(w.deferred)
                for rec in records:
                    self._reveal(rec.request, now)
                for rec, result in zip(records, upload_deferred(w, self.register, now)):
                    if isinstance(result, RegisterError):
                        self._fail(row, result.code)
                    else:
                        row[f"tx_{rec.payment.case}"] += 1

    def _workload(self, now: int, row: dict) -> None:
        c = self.config
        active = [i for i, m in enumerate(self.meta) if not m.never_upgrade]
        lo, hi = c.amount_range
        for _ in range(c.tx_per_tick):
            if len(active) < 2:
                return
            si = self.rng.randbelow(len(active))
            ri = self.rng.randbelow(len(active) - 1)
            s, r = active[si], active[ri + (ri >= si)]
            amount = self.rng.randint(lo, hi)
            sender, receiver = self.wallets[s], self.wallets[r]
            try:
                p = prepare_payment(sender, receiver, amount, self.register, now)
            except WalletError as exc:
                self._fail(row, exc.code)
                continue
            if sender.profile.kind is Kind.HARDWARE and not sender.profile.online:
                defer(p)
                continue
            self._reveal(p.request, now)
            pending = PendingTransfer(p, now, now + c.finality_delay)
            if c.finality_delay == 0:
                self._record(row, settle(p, self.register, now))
            else:
                self.pending.append(pending)

    def _adopt(self, now: int) -> None:
        if now < self.config.v2_activation or not self.adoption_queue:
            return
        self._adoption_credit += self.config.adoption_rate
        while self._adoption_credit >= 1 and self.adoption_queue:
            self._adoption_credit -= 1
            adopt(self.wallets[self.adoption_queue.pop(0)], self.ca)

    def _upgrade(self, now: int, row: dict) -> None:
        if now < self.config.soft_deadline:
            return
        for w in self.wallets:
            if w.profile.generation is Generation.NEW:
                rep = upgrade_holdings(w, self.register, now)
                row["conversions"] += rep.converted
                for code in rep.errors:
                    self._fail(row, code)

    def _metrics(self, now: int, row: dict) -> tuple[int, ...]:
        a = self.attacker
        live = {V1: 0, V2: 0}
        at_risk = attacker_value = 0
        for t in self.register.live.values():
            if t.owner_addr == a.addr:
                attacker_value += t.value
                continue
            live[t.version] += t.value
            if t.version == V1 and t.owner_addr in a.known:
                at_risk += t.value
        row.update(
            tick=now,
            live_v1_value=live[V1],
            live_v2_value=live[V2],
            stranded_value=live[V1] if now > self.config.hard_deadline else 0,
            attacker_value=attacker_value,
            at_risk_value=at_risk,
            premature_conversions=self.register.premature_conversions,
        )
        return tuple(row[c] for c in COLUMNS)

    def step(self) -> tuple[int, ...]:
        now = self.tick
        row = defaultdict(int)
        for col in COLUMNS:
            row[col] = 0
        self._set_online(now)
        self._attack(now, row)
        self._settle_due(now, row)
        self._uploads(now, row)
        self._workload(now, row)
        self._adopt(now)
        self._upgrade(now, row)
        out = self._metrics(now, row)
        assert all(row[f"tx_{c}"] == 0 for c in UNREACHABLE_CASES)
        self.series.rows.append(out)
        self.tick += 1
        return out


def run(config: ScenarioConfig) -> MetricsSeries:
    world = World(config)
    for _ in range(config.total_ticks):
        world.step()
    return world.series


def run_world(config: ScenarioConfig) -> World:
    world = World(config)
    for _ in range(config.total_ticks):
        world.step()
    return world


def digest(series: MetricsSeries) -> str:
    return hashlib.sha256(report(series, "csv").encode()).hexdigest()
