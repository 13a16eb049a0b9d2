"""Post-quantum migration lab for a token-based retail digital currency.

Layers, bottom up:

* ``crypto``: domain-separated hashing, a seeded DRBG, Schnorr, WOTS,
  Merkle (MSS) and hybrid signatures behind one registry.
* ``pki``: composite and linked certificates, chain verification under
  four runtime policies.
* ``register``: the central UTxO-style token register with versioned
  tokens and a migration schedule.
* ``wallet``: OLD/NEW wallets, version negotiation, offline payments and
  upgrades.
* ``sim``: seeded tick simulation with a quantum attacker.

The command line lives in ``cbdclab.cli``.
"""

from ._accel import BACKEND
from .errors import CbdcLabError, ConfigError, CryptoError, PkiError, RegisterError, SimError, WalletError
from .sim import MetricsSeries, ScenarioConfig, World, report, run

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "CbdcLabError",
    "ConfigError",
    "CryptoError",
    "MetricsSeries",
    "PkiError",
    "RegisterError",
    "ScenarioConfig",
    "SimError",
    "WalletError",
    "World",
    "report",
    "run",
]
