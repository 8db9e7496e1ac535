"""
Self-check oracles for seqsense

Importing this package registers every oracle in ``oracle_registry``;
``sense.py selftest`` runs them.
"""

from .base_oracle import BaseOracle, OracleRegistry, OracleRow, oracle_registry, register_oracle
from . import derived  # noqa: F401  (registers the oracles)

__all__ = [
    "BaseOracle",
    "OracleRegistry",
    "OracleRow",
    "oracle_registry",
    "register_oracle",
]
