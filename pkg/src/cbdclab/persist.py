"""JSON state files for the command line: register, wallets and CA bundles.

These files hold private keys and DRBG state in hex. They exist so that
separate CLI invocations can continue one another; the simulator never
touches them.
"""

from __future__ import annotations

import json
from pathlib import Path

from .crypto import Drbg, KeyPair, SchemeConfig, SchemeId
from .errors import WalletError
from .pki import CaKeys, Certificate, CertificateAuthority
from .register import (
    MigrationSchedule,
    Register,
    RegisterConfig,
    RegisterDirectory,
    Token,
    TransferRequest,
    address_of,
)
from .wallet import (
    DeferredRecord,
    Generation,
    Holding,
    Kind,
    PreparedPayment,
    RotationPolicy,
    Wallet,
    WalletConfig,
    WalletProfile,
)


def _key(k: KeyPair | None) -> str | None:
    return None if k is None else k.encode().hex()


def _unkey(h: str | None) -> KeyPair | None:
    return None if h is None else KeyPair.decode(bytes.fromhex(h))


def _rng(r: Drbg) -> dict:
    seed, counter, buf = r.state()
    return {"seed": seed.hex(), "counter": counter, "buf": buf.hex()}


def _unrng(d: dict) -> Drbg:
    r = Drbg(bytes.fromhex(d["seed"]), d["counter"])
    r._buf = bytes.fromhex(d["buf"])
    return r


def _cert(hexstr: str) -> Certificate:
    return Certificate.decode(bytes.fromhex(hexstr))


# --- CA bundles ------------------------------------------------------------


def ca_to_dict(ca: CertificateAuthority) -> dict:
    return {
        "cert": ca.cert.hex(),
        "classical_key": _key(ca.keys.classical),
        "pq_key": _key(ca.keys.pq),
        "mss_height": ca.config.mss_height,
    }


def ca_from_dict(d: dict) -> CertificateAuthority:
    keys = CaKeys(_unkey(d.get("classical_key")), _unkey(d.get("pq_key")))
    return CertificateAuthority(_cert(d["cert"]), keys, SchemeConfig(mss_height=d.get("mss_height", 8)))


# --- register --------------------------------------------------------------


def register_to_dict(reg: Register) -> dict:
    s = reg.schedule
    return {
        "config": {
            "mss_height": reg.config.mss_height,
            "value_scale": reg.config.value_scale,
            "downgrade_allowed": reg.config.downgrade_allowed,
            "validity": list(reg.config.validity),
            "root_mss_height": reg.config.root_mss_height,
        },
        "rng": _rng(reg._rng),
        "root_keys": [_key(reg.root_keys.classical), _key(reg.root_keys.pq)],
        "root": reg.root.hex(),
        "register_key": _key(reg.register_key),
        "register_cert": reg.register_cert.hex(),
        "certs": [c.hex() for c in reg.directory.certs.values()],
        "live": [t.to_dict() for t in reg.live.values()],
        "spent": sorted(t.hex() for t in reg.spent),
        "schedule": [s.v2_activation, s.soft_deadline, s.hard_deadline],
        "downgrade_allowed": reg.downgrade_allowed,
        "clock": reg.clock,
        "reveal_log": [[p.hex(), t] for p, t in reg.reveal_log],
        "minted_total": reg.minted_total,
        "conversions": reg.conversions,
        "premature_conversions": reg.premature_conversions,
        "events": len(reg.events),
    }


def register_from_dict(d: dict, events: list[dict] | None = None) -> Register:
    reg = object.__new__(Register)
    c = d["config"]
    reg.config = RegisterConfig(c["mss_height"], c["value_scale"], c["downgrade_allowed"], tuple(c["validity"]), c["root_mss_height"])
    reg._rng = _unrng(d["rng"])
    reg._scheme_cfg = SchemeConfig(mss_height=reg.config.mss_height)
    reg.root_keys = CaKeys(*(_unkey(k) for k in d["root_keys"]))
    reg.root = _cert(d["root"])
    reg.directory = RegisterDirectory(reg.root)
    for h in d["certs"]:
        cert = _cert(h)
        reg.directory.certs[cert.serial] = cert
    reg.register_key = _unkey(d["register_key"])
    reg.register_cert = _cert(d["register_cert"])
    reg.live, reg._by_addr = {}, {}
    for t in d["live"]:
        reg._add_live(Token.from_dict(t))
    reg.spent = {bytes.fromhex(t) for t in d["spent"]}
    reg.schedule = MigrationSchedule(*d["schedule"])
    reg.downgrade_allowed = d["downgrade_allowed"]
    reg.clock = d["clock"]
    reg.reveal_log = [(bytes.fromhex(p), t) for p, t in d["reveal_log"]]
    reg.revealed_addrs = {address_of(p) for p, _ in reg.reveal_log}
    reg.minted_total = d["minted_total"]
    reg.conversions = d["conversions"]
    reg.premature_conversions = d["premature_conversions"]
    reg.events = list(events or [])
    return reg


# --- wallets ---------------------------------------------------------------


def _holding(h: Holding) -> dict:
    return {"token": h.token.to_dict(), "provisional": h.provisional}


def wallet_to_dict(w: Wallet) -> dict:
    classical, pq = w._identity or (None, None)
    return {
        "wallet_id": w.wallet_id.hex(),
        "kind": w.profile.kind.value,
        "generation": w.profile.generation.value,
        "online": w.profile.online,
        "rotation_policy": w.rotation_policy.value,
        "config": {
            "cert_mss_height": w.config.cert_mss_height,
            "reuse_mss_height": w.config.reuse_mss_height,
            "reuse_headroom": w.config.reuse_headroom,
        },
        "cert": w.cert.hex(),
        "identity": [_key(classical), _key(pq)],
        "rng": _rng(w._rng),
        "keys": {a.hex(): _key(k) for a, k in w.keys.items()},
        "reuse": {str(v): k.public.hex() for v, k in w._reuse.items()},
        "holdings": [_holding(h) for h in w.holdings.values()],
        "locked": sorted(t.hex() for t in w.locked),
        "prompted": w.prompted,
        "deferred": [
            {
                "request": r.payment.request.to_dict(),
                "created_tick": r.created_tick,
                "receiver": r.payment.receiver.wallet_id.hex(),
                "amount": r.payment.amount,
                "version": r.payment.version,
                "case": r.payment.case,
                "inputs": [_holding(h) for h in r.payment.inputs],
            }
            for r in w.deferred
        ] + getattr(w, "_unresolved", []),
        "balance": w.balance(include_locked=True),
    }


def wallet_from_dict(d: dict, peers: dict[bytes, Wallet] | None = None, strict: bool = True) -> Wallet:
    """Rebuild a wallet. Deferred payments need their payee's state; with
    ``strict=False`` records whose payee is absent are carried through
    untouched instead of raising UNKNOWN_PEER."""
    profile = WalletProfile(Kind(d["kind"]), Generation(d["generation"]), d["online"])
    w = Wallet(
        bytes.fromhex(d["wallet_id"]),
        profile,
        _cert(d["cert"]),
        RotationPolicy(d["rotation_policy"]),
        _unrng(d["rng"]),
        WalletConfig(**d["config"]),
    )
    w._identity = tuple(_unkey(k) for k in d["identity"])
    w.keys = {bytes.fromhex(a): _unkey(k) for a, k in d["keys"].items()}
    w._reuse = {int(v): w.keys[address_of(bytes.fromhex(pub))] for v, pub in d["reuse"].items()}

    def holding(h: dict) -> Holding:
        tok = Token.from_dict(h["token"])
        return Holding(tok, w.keys[tok.owner_addr], h["provisional"])

    for h in d["holdings"]:
        hold = holding(h)
        w.holdings[hold.token.token_id] = hold
    w.locked = {bytes.fromhex(t) for t in d["locked"]}
    w.prompted = d["prompted"]
    peers = dict(peers or {})
    peers[w.wallet_id] = w
    w._unresolved = []
    for r in d["deferred"]:
        receiver = peers.get(bytes.fromhex(r["receiver"]))
        if receiver is None and not strict:
            w._unresolved.append(r)
            continue
        if receiver is None:
            raise WalletError("UNKNOWN_PEER", f"deferred payment to {r['receiver']} needs that wallet's state")
        inputs = [holding(h) for h in r["inputs"]]
        p = PreparedPayment(
            w, receiver, r["amount"], r["version"], TransferRequest.from_dict(r["request"]),
            inputs, None, None, r["case"], r["created_tick"],
        )
        w.deferred.append(DeferredRecord(p, r["created_tick"]))
    return w


# --- files -----------------------------------------------------------------


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())


def write_json(path, data) -> None:
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def read_events(path) -> list[dict]:
    p = Path(path)
    if not p.exists():
        return []
    return [json.loads(line) for line in p.read_text().splitlines() if line.strip()]


def append_events(path, reg: Register, start: int) -> None:
    lines = reg.event_log_lines()[start:]
    if lines:
        with open(path, "a") as fh:
            fh.write("\n".join(lines) + "\n")


def key_to_dict(key: KeyPair) -> dict:
    return {"scheme": SchemeId(key.scheme).cli_name, "public": key.public.hex(), "private": key.encode().hex()}


def key_from_dict(d: dict) -> KeyPair:
    return KeyPair.decode(bytes.fromhex(d["private"]))
