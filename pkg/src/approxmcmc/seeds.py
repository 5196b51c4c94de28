"""Stable child-seed derivation for independent replications.

child_seed(master, component, rep) is the first 8 bytes (little endian) of
blake2b("{master}:{component}:{rep}"), so any language with blake2b can
derive the same integers.
"""
from __future__ import annotations

import hashlib

import numpy as np


def child_seed(master: int, component: str, rep: int = 0) -> int:
    key = f"{int(master)}:{component}:{int(rep)}".encode()
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")


def child_rng(master: int, component: str, rep: int = 0) -> np.random.Generator:
    return np.random.default_rng(child_seed(master, component, rep))
