"""Polar-code information reconciliation."""

from .bench import BenchResult, build_code, clopper_pearson, fer_benchmark, read_csv, write_csv
from .codec import CRC8, CRC16, CRC_BY_LENGTH, CrcSpec, SclConfig, channel_llr, polar_transform, scl_decode
from .construction import GenieStatistics, PolarCode, construct_monte_carlo, construct_pw, genie_statistics, pw_weights
from .leakage import LeakAccount, k_for_efficiency, leak_ec, leak_ec_from_efficiency
from .reconcile import ReconciliationResult, SyndromeMessage, alice_decode, bob_message, reconcile_block

__all__ = [
    "BenchResult",
    "CRC8",
    "CRC16",
    "CRC_BY_LENGTH",
    "CrcSpec",
    "GenieStatistics",
    "LeakAccount",
    "PolarCode",
    "ReconciliationResult",
    "SclConfig",
    "SyndromeMessage",
    "alice_decode",
    "bob_message",
    "channel_llr",
    "clopper_pearson",
    "construct_monte_carlo",
    "construct_pw",
    "build_code",
    "fer_benchmark",
    "read_csv",
    "genie_statistics",
    "k_for_efficiency",
    "leak_ec",
    "leak_ec_from_efficiency",
    "polar_transform",
    "pw_weights",
    "reconcile_block",
    "scl_decode",
    "write_csv",
]
