"""``cbdclab`` command line.

Exit status is 0 on success, 1 on a usage error (message prefixed ``E_USAGE``)
and 2 when an operation fails (``E_OP <CODE>``). Binary values are hex.
"""

from __future__ import annotations

import argparse
import json
import secrets
import sys
from pathlib import Path

from . import persist
from .crypto import Drbg, SchemeConfig, SchemeId, keygen, scheme_sizes
from .errors import CbdcLabError
from .pki import CaKeys, CertificateAuthority, Role, SubjectKeys, issue, issue_root, new_ca_keys, parse_policy, verify_chain
from .register import FOREVER, Register, RegisterConfig, TransferOutput, TransferRequest, address_of, sign_request
from .sim import ScenarioConfig, parse_report, report, run, seed_bytes
from .wallet import (
    Generation,
    Kind,
    RotationPolicy,
    WalletConfig,
    WalletProfile,
    conversion_signature,
    create_wallet,
    pay,
    upgrade_holdings,
    upload_deferred,
)

SCHEME_NAMES = [s.cli_name for s in SchemeId]
ROLE_NAMES = {"sub-ca": Role.SUB_CA, "wallet": Role.WALLET, "register": Role.REGISTER}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _rng(seed) -> Drbg:
    # without --seed, draw fresh entropy so two wallets never share an id
    return Drbg(secrets.token_bytes(32) if seed is None else seed_bytes(seed))


def _seed_arg(text: str):
    try:
        return int(text)
    except ValueError:
        return text


def _out(data, path=None) -> None:
    text = data if isinstance(data, str) else json.dumps(data, indent=2, sort_keys=True) + "\n"
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


# --- keys and certificates -------------------------------------------------


def cmd_keygen(a):
    rng = _rng(a.seed)
    cfg = SchemeConfig(mss_height=a.height)
    scheme = SchemeId.from_cli(a.scheme)
    if scheme is SchemeId.HYBRID_CM:
        keys = [keygen(SchemeId.CLASSICAL_SCHNORR, rng, cfg), keygen(cfg.hybrid_pq, rng, cfg)]
        _out({"scheme": a.scheme, "components": [persist.key_to_dict(k) for k in keys]}, a.out)
    else:
        _out(persist.key_to_dict(keygen(scheme, rng, cfg)), a.out)


def _load_key(path):
    return persist.key_from_dict(persist.read_json(path)) if path else None


def cmd_cert(a):
    if a.cert_cmd == "root":
        rng = _rng(a.seed)
        cfg = SchemeConfig(mss_height=a.height)
        keys = new_ca_keys(rng, not a.pq_only, not a.classical_only, cfg)
        cert = issue_root(keys, tuple(a.validity), rng, a.subject, cfg)
        _out(persist.ca_to_dict(CertificateAuthority(cert, keys, cfg)), a.out)
    elif a.cert_cmd == "issue":
        issuer = persist.ca_from_dict(persist.read_json(a.issuer))
        rng = _rng(a.seed)
        role = ROLE_NAMES[a.role]
        cfg = SchemeConfig(mss_height=a.height)
        classical, pq = _load_key(a.classical_key), _load_key(a.pq_key)
        if classical is None and pq is None:
            generated = new_ca_keys(rng, not a.pq_only, not a.classical_only, cfg)
            classical, pq = generated.classical, generated.pq
        subject = SubjectKeys(
            classical.public if classical else None,
            pq.public if pq else None,
            pq.scheme if pq else None,
        )
        validity = tuple(a.validity) if a.validity else (issuer.cert.not_before, issuer.cert.not_after)
        cert = issue(issuer.cert, issuer.keys, subject, role, validity, rng, a.subject, config=issuer.config)
        _out(persist.ca_to_dict(CertificateAuthority(cert, CaKeys(classical, pq), cfg)), a.out)
        # the issuer's MSS key advanced; persist it so leaves are never reused
        persist.write_json(a.issuer_out or a.issuer, persist.ca_to_dict(issuer))
    else:
        chain = [persist.ca_from_dict(persist.read_json(p)).cert for p in a.chain]
        trust = persist.ca_from_dict(persist.read_json(a.trust)).cert
        rep = verify_chain(chain, trust, parse_policy(a.policy), a.at_tick)
        if not rep.ok:
            where = "" if rep.position is None else f" at position {rep.position}"
            raise CbdcLabError(rep.failure.name, f"chain rejected{where}")
        _out({"ok": True, "policy": a.policy, "at_tick": a.at_tick, "length": len(chain)})


# --- register --------------------------------------------------------------


def _load_register(a, create: bool = False) -> Register:
    path = Path(a.state)
    if path.exists():
        return persist.register_from_dict(persist.read_json(path), persist.read_events(a.log) if a.log else None)
    if not create:
        raise CbdcLabError("NO_STATE", f"{path} does not exist; create it with mint")
    return Register(_rng(getattr(a, "seed", None)), RegisterConfig(mss_height=a.height, root_mss_height=min(8, a.height)))


def _save_register(a, reg: Register, start: int) -> None:
    if a.log:
        persist.append_events(a.log, reg, start)
    persist.write_json(a.state, persist.register_to_dict(reg))


def _tick(a, reg: Register) -> int:
    return reg.clock if a.tick is None else a.tick


def cmd_mint(a):
    reg = _load_register(a, create=True)
    start = len(reg.events)
    if a.migration:
        reg.set_migration(*a.migration, a.downgrade)
    wallet = None
    if a.wallet:
        wallet = persist.wallet_from_dict(persist.read_json(a.wallet), strict=False)
        addr = address_of(wallet.receive_key(a.version).public)
    elif a.key:
        addr = address_of(_load_key(a.key).public)
    elif a.addr:
        addr = bytes.fromhex(a.addr)
    else:
        raise UsageError("mint: one of --wallet, --key, --addr is required")
    token = reg.mint(a.value, addr, a.version, _tick(a, reg))
    if wallet is not None:
        wallet._credit(token)
        persist.write_json(a.wallet, persist.wallet_to_dict(wallet))
    _save_register(a, reg, start)
    _out(token.to_dict())


def _parse_output(spec: str) -> TransferOutput:
    try:
        dest, value, version = spec.rsplit(":", 2)
    except ValueError:
        raise UsageError(f"--output expects DEST:VALUE:VERSION, got {spec!r}") from None
    addr = address_of(_load_key(dest).public) if Path(dest).exists() else bytes.fromhex(dest)
    return TransferOutput(int(value), addr, int(version))


def cmd_transfer(a):
    reg = _load_register(a)
    start = len(reg.events)
    if a.request:
        req = TransferRequest.from_dict(persist.read_json(a.request))
    else:
        if not a.input or not a.output:
            raise UsageError("transfer: give --request or at least one --input and --output")
        tokens, keys = [], []
        for spec in a.input:
            tid, _, keyfile = spec.partition(":")
            token = reg.live.get(bytes.fromhex(tid))
            if token is None:
                raise CbdcLabError("DOUBLE_SPEND" if bytes.fromhex(tid) in reg.spent else "UNKNOWN_TOKEN", tid)
            tokens.append(token)
            keys.append(_load_key(keyfile))
        req = sign_request(tokens, keys, [_parse_output(o) for o in a.output])
        for keyfile, key in zip((s.partition(":")[2] for s in a.input), keys):
            persist.write_json(keyfile, persist.key_to_dict(key))
    receipt = reg.validate_transfer(req, _tick(a, reg))
    _save_register(a, reg, start)
    _out(receipt.to_dict())


def cmd_convert(a):
    reg = _load_register(a)
    start = len(reg.events)
    key = _load_key(a.key)
    token = reg.live.get(bytes.fromhex(a.token))
    if token is None:
        raise CbdcLabError("DOUBLE_SPEND" if bytes.fromhex(a.token) in reg.spent else "UNKNOWN_TOKEN", a.token)
    new_addr = address_of(_load_key(a.new_key).public) if a.new_key else bytes.fromhex(a.new_addr)
    sig = conversion_signature(key, token, a.version, new_addr)
    persist.write_json(a.key, persist.key_to_dict(key))
    new = reg.convert_version(token.token_id, key.public, sig, a.version, new_addr, _tick(a, reg))
    _save_register(a, reg, start)
    _out(new.to_dict())


def cmd_audit(a):
    reg = _load_register(a)
    now = _tick(a, reg)
    out = {
        "tick": now,
        "minted_total": reg.minted_total,
        "live_value": reg.live_value(),
        "live_v1_value": reg.live_value(1),
        "live_v2_value": reg.live_value(2),
        "live_tokens": len(reg.live),
        "spent_tokens": len(reg.spent),
        "supported_versions": sorted(reg.supported_versions(now)),
        "conversions": reg.conversions,
        "premature_conversions": reg.premature_conversions,
        "conserved": reg.live_value() == reg.minted_total,
    }
    if now > reg.schedule.hard_deadline:
        out["stranded_value"] = reg.stranded_value(now)
    _out(out)


# --- wallets ---------------------------------------------------------------


def _load_wallets(paths, peers=(), strict=False):
    loaded = {}
    for p in list(peers):
        w = persist.wallet_from_dict(persist.read_json(p), loaded, strict=False)
        loaded[w.wallet_id] = w
    return [persist.wallet_from_dict(persist.read_json(p), loaded, strict) for p in paths], loaded


def cmd_wallet(a):
    if a.wallet_cmd == "create":
        issuer = persist.ca_from_dict(persist.read_json(a.issuer))
        profile = WalletProfile(Kind(a.kind), Generation(a.generation), not a.offline)
        w = create_wallet(profile, issuer, _rng(a.seed), RotationPolicy(a.rotation), WalletConfig())
        persist.write_json(a.out, persist.wallet_to_dict(w))
        persist.write_json(a.issuer, persist.ca_to_dict(issuer))
        _out({"wallet_id": w.wallet_id.hex(), "generation": a.generation, "kind": a.kind})
        return
    if a.wallet_cmd == "balance":
        (w,), _ = _load_wallets([a.wallet])
        _out({
            "wallet_id": w.wallet_id.hex(),
            "balance": w.balance(include_locked=True),
            "v1": w.balance(1, include_locked=True),
            "v2": w.balance(2, include_locked=True),
            "tokens": len(w.holdings),
            "deferred": len(w.deferred) + len(w._unresolved),
        })
        return
    reg = _load_register(a)
    start = len(reg.events)
    now = _tick(a, reg)
    if a.wallet_cmd == "pay":
        (receiver,), _ = _load_wallets([a.to])
        sender = persist.wallet_from_dict(persist.read_json(a.wallet), {receiver.wallet_id: receiver}, strict=False)
        if a.offline:
            if sender.profile.kind is not Kind.HARDWARE:
                raise CbdcLabError("NOT_HARDWARE", "only hardware wallets pay offline")
            sender.profile.online = False
        outcome = pay(sender, receiver, a.amount, reg, now)
        sender.profile.online = True
        persist.write_json(a.wallet, persist.wallet_to_dict(sender))
        persist.write_json(a.to, persist.wallet_to_dict(receiver))
        result = {"case": outcome.case, "version": outcome.version, "amount": outcome.amount, "deferred": outcome.deferred}
        if outcome.receipt:
            result["receipt"] = outcome.receipt.to_dict()
    elif a.wallet_cmd == "upload":
        peers, _ = _load_wallets(a.peer or [])
        w = persist.wallet_from_dict(persist.read_json(a.wallet), {p.wallet_id: p for p in peers})
        results = upload_deferred(w, reg, now)
        persist.write_json(a.wallet, persist.wallet_to_dict(w))
        for path, p in zip(a.peer or [], peers):
            persist.write_json(path, persist.wallet_to_dict(p))
        result = [r.to_dict() if hasattr(r, "to_dict") else {"error": r.code} for r in results]
    else:
        (w,), _ = _load_wallets([a.wallet])
        rep = upgrade_holdings(w, reg, now)
        persist.write_json(a.wallet, persist.wallet_to_dict(w))
        result = {"converted": rep.converted, "value": rep.value, "errors": rep.errors}
    _save_register(a, reg, start)
    _out(result)


# --- simulation ------------------------------------------------------------


def cmd_simulate(a):
    data = json.loads(Path(a.config).read_text())
    if a.seed is not None:
        data["seed"] = a.seed
    cfg = ScenarioConfig.from_dict(data)
    text = report(run(cfg), a.format)
    _out(text, a.out)


def cmd_report(a):
    src = Path(a.input).read_text()
    fmt_in = a.from_format or ("json" if a.input.endswith(".json") else "csv")
    _out(report(parse_report(src, fmt_in), a.format), a.out)


def cmd_sizes(a):
    cfg = SchemeConfig(mss_height=a.height)
    schemes = [SchemeId.from_cli(a.scheme)] if a.scheme else list(SchemeId)
    for s in schemes:
        r = scheme_sizes(s, cfg)
        print(f"{s.cli_name}: public {r.public_key_bytes} / private {r.private_key_bytes} / signature {r.signature_bytes} bytes")


# --- parser ----------------------------------------------------------------


def _register_flags(p, tick=True):
    p.add_argument("--state", required=True, help="register state file (JSON)")
    p.add_argument("--log", help="event log to append to (JSON lines)")
    if tick:
        p.add_argument("--tick", type=int, help="current tick (defaults to the register clock)")


def build_parser() -> argparse.ArgumentParser:
    root = _Parser(prog="cbdclab", description="PQ crypto-agility lab for token-based CBDC")
    sub = root.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("keygen", help="generate a key pair")
    p.add_argument("--scheme", required=True, choices=SCHEME_NAMES)
    p.add_argument("--seed", type=_seed_arg)
    p.add_argument("--height", type=int, default=8)
    p.add_argument("--out")
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("cert", help="issue and verify certificates")
    csub = p.add_subparsers(dest="cert_cmd", required=True, parser_class=_Parser)
    r = csub.add_parser("root")
    r.add_argument("--out", required=True)
    r.add_argument("--seed", type=_seed_arg)
    r.add_argument("--validity", type=int, nargs=2, default=[0, FOREVER], metavar=("NOT_BEFORE", "NOT_AFTER"))
    r.add_argument("--height", type=int, default=8)
    r.add_argument("--subject", default="root")
    g = r.add_mutually_exclusive_group()
    g.add_argument("--classical-only", action="store_true")
    g.add_argument("--pq-only", action="store_true")
    i = csub.add_parser("issue")
    i.add_argument("--issuer", required=True)
    i.add_argument("--role", required=True, choices=sorted(ROLE_NAMES))
    i.add_argument("--out", required=True)
    i.add_argument("--classical-key")
    i.add_argument("--pq-key")
    i.add_argument("--validity", type=int, nargs=2, metavar=("NOT_BEFORE", "NOT_AFTER"))
    i.add_argument("--seed", type=_seed_arg)
    i.add_argument("--height", type=int, default=8)
    i.add_argument("--subject", default="")
    i.add_argument("--issuer-out", help="save the issuer's advanced key state here instead of in place")
    g = i.add_mutually_exclusive_group()
    g.add_argument("--classical-only", action="store_true")
    g.add_argument("--pq-only", action="store_true")
    v = csub.add_parser("verify")
    v.add_argument("--chain", required=True, nargs="+", help="certificate files, leaf first")
    v.add_argument("--trust", required=True)
    v.add_argument("--policy", default="both", choices=["classical-only", "pq-only", "both", "either"])
    v.add_argument("--at-tick", type=int, default=0)
    p.set_defaults(func=cmd_cert)

    p = sub.add_parser("mint", help="mint a token (creates the register state if missing)")
    _register_flags(p)
    p.add_argument("--value", type=int, required=True)
    p.add_argument("--version", type=int, default=1, choices=[1, 2])
    p.add_argument("--addr")
    p.add_argument("--key")
    p.add_argument("--wallet")
    p.add_argument("--seed", type=_seed_arg)
    p.add_argument("--height", type=int, default=10)
    p.add_argument("--migration", type=int, nargs=3, metavar=("ACTIVATION", "SOFT", "HARD"))
    p.add_argument("--downgrade", action="store_true")
    p.set_defaults(func=cmd_mint)

    p = sub.add_parser("transfer", help="submit a transfer")
    _register_flags(p)
    p.add_argument("--request")
    p.add_argument("--input", action="append", metavar="TOKEN_ID:KEYFILE")
    p.add_argument("--output", action="append", metavar="DEST:VALUE:VERSION")
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("convert", help="convert a token to another version")
    _register_flags(p)
    p.add_argument("--token", required=True)
    p.add_argument("--key", required=True)
    p.add_argument("--version", type=int, required=True, choices=[1, 2])
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--new-key")
    g.add_argument("--new-addr")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("audit", help="register totals")
    _register_flags(p)
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("wallet", help="wallet operations")
    wsub = p.add_subparsers(dest="wallet_cmd", required=True, parser_class=_Parser)
    c = wsub.add_parser("create")
    c.add_argument("--out", required=True)
    c.add_argument("--issuer", required=True)
    c.add_argument("--generation", choices=[g.value for g in Generation], default="new")
    c.add_argument("--kind", choices=[k.value for k in Kind], default="software")
    c.add_argument("--rotation", choices=[r.value for r in RotationPolicy], default="fresh")
    c.add_argument("--offline", action="store_true")
    c.add_argument("--seed", type=_seed_arg)
    b = wsub.add_parser("balance")
    b.add_argument("--wallet", required=True)
    y = wsub.add_parser("pay")
    y.add_argument("--wallet", required=True)
    y.add_argument("--to", required=True)
    y.add_argument("--amount", type=int, required=True)
    y.add_argument("--offline", action="store_true", help="hardware sender pays without the register")
    _register_flags(y)
    u = wsub.add_parser("upload")
    u.add_argument("--wallet", required=True)
    u.add_argument("--peer", action="append", help="wallet files of deferred payees")
    _register_flags(u)
    g = wsub.add_parser("upgrade")
    g.add_argument("--wallet", required=True)
    _register_flags(g)
    p.set_defaults(func=cmd_wallet)

    p = sub.add_parser("simulate", help="run a scenario")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--seed", type=_seed_arg, help="override the config seed")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="re-encode a metrics file")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--from-format", choices=["csv", "json"])
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("sizes", help="measured key and signature sizes")
    p.add_argument("--scheme", choices=SCHEME_NAMES)
    p.add_argument("--height", type=int, default=8)
    p.set_defaults(func=cmd_sizes)
    return root


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        args.func(args)
    except UsageError as exc:
        print(f"E_USAGE {exc}", file=sys.stderr)
        return 1
    except CbdcLabError as exc:
        print(f"E_OP {exc.code}" + (f" {exc.detail}" if exc.detail else ""), file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError) as exc:
        print(f"E_OP BAD_INPUT {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
