"""Deterministic random-stream derivation.

Every stochastic unit of work (a mean-field trial, an agent-world
replicate, a drift-estimation grid point) owns a private PCG64 stream
keyed by ``(kind, master_seed, index)``. Streams are independent of
execution order, so trial batches can run serially, shuffled, or across
processes and produce identical per-trial results.

Within a mean-field trial the draw layout is fixed: step ``j`` consumes
8 standard normals, one per noise channel in
:data:`cdmsim.dynamics.NOISE_CHANNELS` order, so the draw for
``(trial, channel, step)`` is variate ``8*step + channel`` of that
trial's stream. Agent replicates consume ``3 * n_agents`` uniforms per
tick (event, evaluation, quorum rows, in that order). The compiled and
pure-python kernels consume the streams identically, bit for bit.
"""

import numpy as np

KIND_TRIAL = 1      # mean-field simulation trials
KIND_REPLICATE = 2  # agent-world replicates
KIND_DRIFT = 3      # drift-estimation noise draws


def bit_generator(kind: int, seed: int, index: int) -> np.random.PCG64:
    """PCG64 stream for one unit of work."""
    return np.random.PCG64(np.random.SeedSequence([kind, seed, index]))


def generator(kind: int, seed: int, index: int) -> np.random.Generator:
    """Generator wrapper around :func:`bit_generator`."""
    return np.random.Generator(bit_generator(kind, seed, index))
