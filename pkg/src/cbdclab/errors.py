"""Exception hierarchy. Every error carries a stable machine-readable ``code``."""

from __future__ import annotations


class CbdcLabError(Exception):
    """Base class; ``code`` is the stable identifier (e.g. ``"DOUBLE_SPEND"``)."""

    def __init__(self, code: str, detail: str = ""):
        self.code = code
        self.detail = detail
        super().__init__(f"{code}: {detail}" if detail else code)


class CryptoError(CbdcLabError):
    pass


class PkiError(CbdcLabError):
    pass


class RegisterError(CbdcLabError):
    pass


class WalletError(CbdcLabError):
    pass


class SimError(CbdcLabError):
    pass


class ConfigError(CbdcLabError):
    """Invalid scenario configuration; ``fields`` maps field name to problem."""

    def __init__(self, fields: dict[str, str]):
        self.fields = dict(fields)
        detail = "; ".join(f"{k}: {v}" for k, v in sorted(self.fields.items()))
        super().__init__("CONFIG_INVALID", detail)
