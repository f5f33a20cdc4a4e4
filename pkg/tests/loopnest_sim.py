"""Brute-force loop-nest simulator used as an independent reference.

It walks every iteration of the five-level nest, materializes the set of
elements each tile covers, and counts a transfer whenever the tile a
compute instance needs differs from the one it held at the previous step.
Instances that need the same tile at the same step share one transfer
(multicast). Nothing here reuses the analytical model.
"""

import itertools
import math

import numpy as np

SPATIAL = (2, 4)
ABOVE = ((0,), (0, 1, 2), (0, 1, 2, 3, 4))


def _loops(mapping):
    out = []
    for level in range(5):
        for dim in mapping.perms[level]:
            out.append((level, dim, mapping.bound(dim, level)))
    return out


def _strides(mapping):
    """Per dim and level, the multiplier of that level's index in the full index."""
    out = {}
    for i, dim in enumerate(mapping.dims):
        b = mapping.bounds[i]
        s = 1
        per = [0] * 5
        for level in reversed(range(5)):
            per[level] = s
            s *= b[level]
        out[dim] = per
    return out


def _coord(workload, tensor, full):
    """Element coordinate of ``tensor`` at full iteration indices ``full``."""
    # only an input operand slides; the output is indexed by the out dims
    pairs = {} if tensor == "Z" else dict(workload.sliding_pairs)
    coords = []
    for d in workload.tensor(tensor).dims:
        v = full[d]
        if d in pairs and pairs[d] not in workload.tensor(tensor).dims:
            v += full[pairs[d]]
        coords.append(v)
    return tuple(coords)


def simulate_fills(mapping, workload):
    """Dense transfers per (boundary index, tensor) and total MAC count."""
    loops = _loops(mapping)
    strides = _strides(mapping)
    fills = {}
    for b in range(3):
        above = [i for i, lp in enumerate(loops) if lp[0] in ABOVE[b]]
        below = [i for i, lp in enumerate(loops) if lp[0] not in ABOVE[b]]
        spatial = [i for i in above if loops[i][0] in SPATIAL]
        for t in ("P", "Q", "Z"):
            temporal = [i for i in above if i not in spatial]
            held = {}
            count = 0
            # time-major: all instances advance in lock step
            for time_idx in itertools.product(*(range(loops[i][2]) for i in temporal)):
                needed = set()
                for inst in itertools.product(*(range(loops[i][2]) for i in spatial)):
                    pos = dict(zip(temporal, time_idx))
                    pos.update(zip(spatial, inst))
                    tile = set()
                    for sub in itertools.product(*(range(loops[i][2]) for i in below)):
                        pos.update(zip(below, sub))
                        full = {d: 0 for d in mapping.dims}
                        for i, (level, d, _) in enumerate(loops):
                            full[d] += pos[i] * strides[d][level]
                        tile.add(_coord(workload, t, full))
                    tile = frozenset(tile)
                    if held.get(inst) != tile:
                        held[inst] = tile
                        if tile not in needed:
                            needed.add(tile)
                            count += len(tile)
            fills[(b, t)] = count
    macs = math.prod(lp[2] for lp in loops)
    return fills, macs


def random_sparse(shape, density, rng):
    """Boolean nonzero mask with exactly round(density * size) nonzeros."""
    size = int(np.prod(shape))
    nnz = int(round(density * size))
    flat = np.zeros(size, dtype=bool)
    flat[rng.choice(size, nnz, replace=False)] = True
    return flat.reshape(shape)


def effectual_macs_mc(workload, trials, rng):
    """Mean count of MACs whose two operands are both nonzero."""
    sizes = dict(workload.dims)
    p_dims = workload.tensor("P").dims
    q_dims = workload.tensor("Q").dims
    pairs = dict(workload.sliding_pairs)

    def extent(tensor_dims, d):
        if d in pairs and pairs[d] not in tensor_dims:
            return sizes[d] + sizes[pairs[d]] - 1
        return sizes[d]

    p_shape = tuple(extent(p_dims, d) for d in p_dims)
    q_shape = tuple(extent(q_dims, d) for d in q_dims)
    names = workload.dim_names
    grids = np.meshgrid(*(np.arange(sizes[d]) for d in names), indexing="ij")
    full = dict(zip(names, grids))

    def index(tensor_dims):
        out = []
        for d in tensor_dims:
            v = full[d]
            if d in pairs and pairs[d] not in tensor_dims:
                v = v + full[pairs[d]]
            out.append(v)
        return tuple(out)

    p_idx, q_idx = index(p_dims), index(q_dims)
    total = 0
    for _ in range(trials):
        p = random_sparse(p_shape, workload.density("P"), rng)
        q = random_sparse(q_shape, workload.density("Q"), rng)
        total += int(np.count_nonzero(p[p_idx] & q[q_idx]))
    return total / trials
