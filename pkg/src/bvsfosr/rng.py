"""Seeded random streams.

Every stream is a child of the master seed keyed by (purpose, replication,
index), so results do not depend on how work is spread over processes.
"""
import numpy as np

CHAIN, DATA, INIT = 0, 1, 2


def stream(seed, purpose, replication=0, index=0):
    ss = np.random.SeedSequence(int(seed), spawn_key=(purpose, int(replication), int(index)))
    return np.random.Generator(np.random.PCG64(ss))


def chain_rng(seed, chain, replication=0):
    return stream(seed, CHAIN, replication, chain)


def data_rng(seed, replication=0):
    return stream(seed, DATA, replication)


def init_rng(seed, replication=0):
    return stream(seed, INIT, replication)
