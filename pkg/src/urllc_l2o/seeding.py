"""Deterministic seed splitting.

A child seed is the first 8 bytes (little endian) of
``sha256(f"{master}/{component}/{index}")``. Every random stream in the
package is a ``numpy.random.default_rng`` seeded this way, so any run can be
regenerated from the master seed plus a component name and an index.
"""

import hashlib

import numpy as np


def child_seed(master, component, index=0):
    digest = hashlib.sha256(f"{int(master)}/{component}/{int(index)}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def child_rng(master, component, index=0):
    return np.random.default_rng(child_seed(master, component, index))
