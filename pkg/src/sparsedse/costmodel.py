"""Analytical evaluator for a decoded design point.

The architecture has three storage levels (DRAM, global buffer, PE buffer)
and three transfer boundaries below them. Data reuse follows a
single-resident-tile model: a tile held below a boundary is refetched every
time one of the temporal loops above the boundary that index the tensor
advances, plus every time an outer loop forces those to wrap. Temporal loops
nested inside the innermost such loop are free, and so is a step after which
a sliding input window starts where the previous one did.

Sparsity enters in three ways:

* compressed rank formats shrink the bits stored and moved per element;
* a skip/gate mechanism filters the follower tensor's traffic at the
  boundary below the storage level it is attached to, and everything further
  down; the compute-level mechanism filters MACs;
* skipping also removes the filtered MACs from the cycle count; gating does
  not.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, Optional, Sequence, Tuple

from .genome import (
    L1_T,
    L2_S,
    L2_T,
    L3_S,
    L3_T,
    NUM_LEVELS,
    SPATIAL_LEVELS,
    MappingSpec,
    Mechanism,
    RankFormat,
    SparseStrategySpec,
)
from .workload import TENSOR_NAMES, Platform, Workload

STORAGE = ("DRAM", "GLB", "PEbuf")
BOUNDARIES = ("DRAM->GLB", "GLB->PEbuf", "PEbuf->MAC")

# mapping levels strictly below each storage point
_DEEPER = {
    "DRAM": tuple(range(NUM_LEVELS)),
    "GLB": (L2_T, L2_S, L3_T, L3_S),
    "PEbuf": (L3_T, L3_S),
}
# mapping levels whose loops sit above each boundary
_ABOVE = (
    (L1_T,),
    (L1_T, L2_T, L2_S),
    (L1_T, L2_T, L2_S, L3_T, L3_S),
)
# representation each boundary moves data in
_BOUNDARY_REPR = ("GLB", "PEbuf", "PEbuf")
# storage representation a mechanism reads its leader's metadata from
_SG_REPR = ("GLB", "PEbuf", "PEbuf")

OBJECTIVES = ("edp", "energy", "delay")


def _ceil(x: float) -> int:
    # absorb float noise such as 3.0000000000000004
    return math.ceil(x - 1e-9)


# ---------------------------------------------------------------------------
# per-workload static data


@lru_cache(maxsize=64)
def _tensor_info(workload: Workload):
    """Per tensor: (dims, relevant dims, sliding pairs that widen it)."""
    info = {}
    for t in TENSOR_NAMES:
        dims = workload.tensor(t).dims
        halo = workload.halo(t)
        relevant = frozenset(dims) | {w for _, w in halo}
        info[t] = (dims, relevant, halo)
    return info


# ---------------------------------------------------------------------------
# tiles


@dataclass(frozen=True)
class TileProfile:
    """Elements of each tensor held at each storage level (per instance)."""

    tiles: Tuple[Tuple[str, str, int], ...]

    def get(self, tensor: str, storage: str) -> int:
        for t, s, n in self.tiles:
            if t == tensor and s == storage:
                return n
        raise KeyError((tensor, storage))


def _extent(mapping: MappingSpec, dim: str, levels: Sequence[int]) -> int:
    b = mapping.bounds[mapping.dims.index(dim)]
    return math.prod(b[l] for l in levels)


def tile_elements(mapping: MappingSpec, workload: Workload, tensor: str, storage: str) -> int:
    dims, _, halo = _tensor_info(workload)[tensor]
    levels = _DEEPER[storage]
    widen = dict(halo)
    n = 1
    for dim in dims:
        e = _extent(mapping, dim, levels)
        if dim in widen:
            e += _extent(mapping, widen[dim], levels) - 1
        n *= e
    return n


def tile_profile(mapping: MappingSpec, workload: Workload) -> TileProfile:
    return TileProfile(
        tuple(
            (t, s, tile_elements(mapping, workload, t, s))
            for t in TENSOR_NAMES
            for s in STORAGE
        )
    )


# ---------------------------------------------------------------------------
# reuse / access counts


@dataclass(frozen=True)
class AccessCounts:
    """Dense element transfers per boundary and tensor, plus the MAC count."""

    fills: Tuple[Tuple[str, str, int], ...]  # (boundary, tensor, elements)
    macs: int

    def get(self, boundary: str, tensor: str) -> int:
        for b, t, n in self.fills:
            if b == boundary and t == tensor:
                return n
        raise KeyError((boundary, tensor))


@lru_cache(maxsize=4096)
def _distinct_offsets(terms: Tuple[Tuple[int, int], ...]) -> int:
    """Distinct values of sum(i * stride) with each i in range(bound)."""
    values = {0}
    for bound, stride in terms:
        values = {v + i * stride for v in values for i in range(bound)}
    return len(values)


def tile_fetches(mapping: MappingSpec, workload: Workload, tensor: str, boundary: int) -> int:
    """How many tiles of ``tensor`` cross ``boundary`` over the whole run.

    A tile is identified by its start coordinate, one component per tensor
    dim; a sliding dim's component is ``out + window``. Advancing temporal
    loop ``m`` resets the loops inside it, which moves the start by a fixed
    amount, so the tile is refetched on that step unless the move is zero
    (irrelevant loops, or a window step cancelling an output step).
    Spatial instances holding the same start share one transfer.
    """
    dims, _, halo = _tensor_info(workload)[tensor]
    component = {d: i for i, d in enumerate(dims)}
    for out, window in halo:
        component[window] = component[out]
    loops = []
    for level, dim, bound in mapping.loops():
        if level in _ABOVE[boundary] and bound > 1:
            b = mapping.bounds[mapping.dims.index(dim)]
            loops.append((level, dim, bound, math.prod(b[level + 1 :])))
    temporal = [lp for lp in loops if lp[0] not in SPATIAL_LEVELS]

    refetch = 1
    outer = 1
    for m, (_, dim, bound, stride) in enumerate(temporal):
        move = [0] * len(dims)
        if dim in component:
            move[component[dim]] += stride
        for _, d, b, s in temporal[m + 1 :]:
            if d in component:
                move[component[d]] -= (b - 1) * s
        if any(move):
            refetch += (bound - 1) * outer
        outer *= bound

    partitions = 1
    for c in range(len(dims)):
        terms = tuple(
            (b, s) for lvl, d, b, s in loops if lvl in SPATIAL_LEVELS and component.get(d) == c
        )
        partitions *= _distinct_offsets(terms)
    return refetch * partitions


def access_counts(mapping: MappingSpec, workload: Workload) -> AccessCounts:
    fills = []
    for b, name in enumerate(BOUNDARIES):
        for t in TENSOR_NAMES:
            tile = 1 if b == 2 else tile_elements(mapping, workload, t, _BOUNDARY_REPR[b])
            fills.append((name, t, tile * tile_fetches(mapping, workload, t, b)))
    macs = math.prod(math.prod(b) for b in mapping.bounds)
    return AccessCounts(tuple(fills), macs)


# ---------------------------------------------------------------------------
# compressed footprints


def footprint_parts(
    elements: int,
    formats: Sequence[RankFormat],
    density: float,
    word_bits: int,
    rank_spans: Sequence[int],
) -> Tuple[int, int]:
    """Expected (metadata bits, payload bits) of a tile under uniform sparsity.

    Ranks are listed outer to inner. A fiber is stored unless some
    compressing rank above it (B, RLE, CP) has dropped its empty parent.
    """
    if len(formats) != len(rank_spans):
        raise ValueError("one span per rank format is required")
    if any(s < 1 for s in rank_spans):
        raise ValueError(f"rank spans must be positive, got {list(rank_spans)}")
    if math.prod(rank_spans) != elements:
        raise ValueError(f"rank spans {list(rank_spans)} do not multiply to {elements}")
    miss = 1.0 - density
    meta = 0.0
    nodes = 1.0  # coordinates at this depth, dense
    stored = 1.0  # fibers at this depth that are actually stored
    below = elements
    for fmt, span in zip(formats, rank_spans):
        below //= span
        p_child = 1.0 - miss**below  # child subtree holds a nonzero
        if fmt == RankFormat.B:
            meta += stored * span
        elif fmt in (RankFormat.RLE, RankFormat.CP):
            meta += nodes * span * p_child * math.ceil(math.log2(span))
        elif fmt == RankFormat.UOP:
            nnz = _ceil(density * span * below)
            meta += stored * (span + 1) * math.ceil(math.log2(nnz + 1))
        nodes *= span
        stored = nodes * p_child if fmt.compressing else stored * span
    return _ceil(meta), _ceil(stored) * word_bits


def footprint(
    elements: int,
    formats: Sequence[RankFormat],
    density: float,
    word_bits: int,
    rank_spans: Sequence[int],
) -> int:
    meta, data = footprint_parts(elements, formats, density, word_bits, rank_spans)
    return meta + data


@dataclass(frozen=True)
class Representation:
    tensor: str
    storage: str
    elements: int
    metadata_bits: int
    data_bits: int
    compressed: bool
    ranks: Tuple[Tuple[str, int, RankFormat], ...]  # (dim, level, format)

    @property
    def bits(self) -> int:
        return self.metadata_bits + self.data_bits

    @property
    def bits_per_element(self) -> float:
        return self.bits / self.elements


@lru_cache(maxsize=1 << 16)
def rank_layout(
    mapping: MappingSpec, workload: Workload, tensor: str, storage: str
) -> Tuple[int, Tuple[Tuple[int, str, int, int], ...]]:
    """Tile size and ranks of ``tensor`` at ``storage``.

    Each rank is ``(chain index, dim, level, span)`` where the chain index
    points into the tensor's full sub-dimension list (``-1`` marks an
    implicit uncompressed rank covering a sliding-window halo).
    """
    _, _, halo = _tensor_info(workload)[tensor]
    levels = _DEEPER[storage]
    chain = [
        [i, d, l, _extent(mapping, d, (l,))]
        for i, (d, l) in enumerate(mapping.subdims(workload.tensor(tensor).dims))
        if l in levels
    ]
    for out_dim, win_dim in halo:
        # all sub-ranks of a sliding dim fold into one rank spanning the halo
        span = _extent(mapping, out_dim, levels) + _extent(mapping, win_dim, levels) - 1
        own = [r for r in chain if r[1] == out_dim]
        if own:
            for r in own[:-1]:
                chain.remove(r)
            own[-1][3] = span
        elif span > 1:
            chain.append([-1, out_dim, -1, span])
    elements = tile_elements(mapping, workload, tensor, storage)
    return elements, tuple(tuple(r) for r in chain)


@lru_cache(maxsize=1 << 18)
def _cached_parts(elements, formats, density, word_bits, spans):
    return footprint_parts(elements, formats, density, word_bits, spans)


def representation(
    mapping: MappingSpec,
    strategy: SparseStrategySpec,
    workload: Workload,
    tensor: str,
    storage: str,
) -> Representation:
    """The tile of ``tensor`` held at ``storage`` in its rank format."""
    return representation_from_chain(
        mapping, workload, tensor, storage, tuple(f for _, f in strategy.tensor_formats(tensor))
    )


def representation_from_chain(
    mapping: MappingSpec,
    workload: Workload,
    tensor: str,
    storage: str,
    chain: Sequence[RankFormat],
) -> Representation:
    elements, ranks = rank_layout(mapping, workload, tensor, storage)
    fmts = tuple(RankFormat(chain[i]) if i >= 0 else RankFormat.U for i, _, _, _ in ranks)
    meta, data = _cached_parts(
        elements,
        fmts,
        workload.density(tensor),
        workload.word_bits,
        tuple(r[3] for r in ranks),
    )
    compressed = any(f != RankFormat.U for f in fmts)
    return Representation(
        tensor,
        storage,
        elements,
        meta,
        data,
        compressed,
        tuple((d, l, f) for (_, d, l, _), f in zip(ranks, fmts)),
    )


# ---------------------------------------------------------------------------
# validity


def _format_order_ok(mapping: MappingSpec, strategy: SparseStrategySpec, workload: Workload) -> bool:
    for t in TENSOR_NAMES:
        expected = mapping.subdims(workload.tensor(t).dims)
        if [sd for sd, _ in strategy.tensor_formats(t)] != expected:
            return False
    return True


_ORDER_VIOLATION = "strategy: rank format order does not follow the mapping"


def _violation(
    mapping: MappingSpec,
    strategy: SparseStrategySpec,
    platform: Platform,
    workload: Workload,
    reprs: Dict[Tuple[str, str], Representation],
) -> Optional[str]:
    for storage, cap in (("GLB", platform.glb_bytes), ("PEbuf", platform.pe_buffer_bytes)):
        used = sum(reprs[(t, storage)].bits for t in TENSOR_NAMES)
        if used > cap * 8:
            return f"capacity: {storage} needs {used} bits, has {cap * 8}"
    pes = mapping.level_product(L2_S)
    if pes > platform.num_pes:
        return f"spatial: L2_S uses {pes} PEs, platform has {platform.num_pes}"
    macs = mapping.level_product(L3_S)
    if macs > platform.macs_per_pe:
        return f"spatial: L3_S uses {macs} MACs per PE, platform has {platform.macs_per_pe}"
    for loc, mech, storage in zip(("GLB", "PEbuf", "Compute"), strategy.sg, _SG_REPR):
        for leader in mech.leaders:
            if not reprs[(leader, storage)].compressed:
                return f"strategy: {mech.label} at {loc} needs {leader} compressed in {storage}"
    return None


def check_validity(
    mapping: MappingSpec,
    strategy: SparseStrategySpec,
    platform: Platform,
    workload: Workload,
) -> Optional[str]:
    """``None`` when the design point is valid, else the first violation."""
    if not _format_order_ok(mapping, strategy, workload):
        return _ORDER_VIOLATION
    reprs = {
        (t, s): representation(mapping, strategy, workload, t, s)
        for t in TENSOR_NAMES
        for s in ("GLB", "PEbuf")
    }
    return _violation(mapping, strategy, platform, workload, reprs)


# ---------------------------------------------------------------------------
# evaluation


@dataclass(frozen=True)
class Traffic:
    boundary: str
    tensor: str
    accesses: int  # dense element transfers
    data_bits: float
    metadata_bits: float
    energy_pj: float


@dataclass(frozen=True)
class CostReport:
    valid: bool
    reason: str = ""
    cycles: int = 0
    energy_pj: float = 0.0
    edp: float = 0.0
    macs: int = 0
    effectual_macs: int = 0
    compute_cycles: int = 0
    dram_cycles: int = 0
    padded: bool = False
    breakdown: Tuple[Traffic, ...] = ()
    footprints: Tuple[Tuple[str, str, int], ...] = ()  # (tensor, storage, bits)

    def objective(self, name: str) -> float:
        if name == "edp":
            return self.edp
        if name == "energy":
            return self.energy_pj
        if name == "delay":
            return float(self.cycles)
        raise ValueError(f"unknown objective {name!r}")

    def to_dict(self) -> dict:
        return {
            "valid": self.valid,
            "reason": self.reason,
            "cycles": self.cycles,
            "energy_pj": self.energy_pj,
            "edp": self.edp,
            "macs": self.macs,
            "effectual_macs": self.effectual_macs,
            "compute_cycles": self.compute_cycles,
            "dram_cycles": self.dram_cycles,
            "padded": self.padded,
            "footprints": [
                {"tensor": t, "storage": s, "bits": b} for t, s, b in self.footprints
            ],
            "breakdown": [
                {
                    "boundary": tr.boundary,
                    "tensor": tr.tensor,
                    "accesses": tr.accesses,
                    "data_bits": tr.data_bits,
                    "metadata_bits": tr.metadata_bits,
                    "energy_pj": tr.energy_pj,
                }
                for tr in self.breakdown
            ],
        }


def _leaders(mechs: Sequence[Mechanism], follower: Optional[str] = None, skip_only: bool = False) -> set:
    out = set()
    for m in mechs:
        if skip_only and not m.is_skip:
            continue
        for f, leader in m.pairs:
            if follower is None or f == follower:
                out.add(leader)
    return out


def _density_product(workload: Workload, tensors) -> float:
    return math.prod(workload.density(t) for t in sorted(tensors))


# energy charged per word moved across each boundary: (read side, write side)
_INPUT_ENERGY = (("dram_read", "glb_write"), ("glb_read", "pebuf_write"), ("pebuf_read",))
_OUTPUT_ENERGY = (
    ("dram_read", "glb_write", "glb_read", "dram_write"),
    ("glb_read", "pebuf_write", "pebuf_read", "glb_write"),
    ("pebuf_read", "pebuf_write"),
)


def evaluate(
    mapping: MappingSpec,
    strategy: SparseStrategySpec,
    platform: Platform,
    workload: Workload,
) -> CostReport:
    if not _format_order_ok(mapping, strategy, workload):
        return CostReport(valid=False, reason=_ORDER_VIOLATION, padded=workload.padded)
    reprs = {
        (t, s): representation(mapping, strategy, workload, t, s)
        for t in TENSOR_NAMES
        for s in ("GLB", "PEbuf")
    }
    reason = _violation(mapping, strategy, platform, workload, reprs)
    if reason is not None:
        return CostReport(valid=False, reason=reason, padded=workload.padded)

    counts = access_counts(mapping, workload)
    energy_table = platform.energy
    wb = workload.word_bits
    sg = strategy.sg
    breakdown = []
    energy = 0.0
    dram_bits = 0.0
    for b, name in enumerate(BOUNDARIES):
        for t in TENSOR_NAMES:
            rep = reprs[(t, _BOUNDARY_REPR[b])]
            n = counts.get(name, t)
            # mechanisms filter traffic below the storage level they sit at
            keep = _density_product(workload, _leaders(sg[:b], follower=t)) if b else 1.0
            weight = 2.0 if t == "Z" else 1.0  # read-modify-write of partial sums
            data_bits = n * rep.data_bits / rep.elements * keep * weight
            meta_bits = n * rep.metadata_bits / rep.elements * keep * weight
            keys = _OUTPUT_ENERGY[b] if t == "Z" else _INPUT_ENERGY[b]
            # Z words already carry the 2x weight; charge each direction once
            per_word = sum(energy_table[k] for k in keys) / weight
            e = (data_bits + meta_bits) / wb * per_word
            energy += e
            if b == 0:
                dram_bits += data_bits + meta_bits
            breakdown.append(Traffic(name, t, n, data_bits, meta_bits, e))

    macs = counts.macs
    effectual = _ceil(macs * _density_product(workload, _leaders(sg)))
    cycle_macs = _ceil(macs * _density_product(workload, _leaders(sg, skip_only=True)))
    energy += effectual * energy_table["mac_op"]

    parallel = mapping.level_product(L2_S) * mapping.level_product(L3_S)
    compute_cycles = _ceil(cycle_macs / parallel)
    dram_cycles = _ceil(dram_bits / platform.dram_bits_per_cycle)
    cycles = max(compute_cycles, dram_cycles, 1)
    return CostReport(
        valid=True,
        cycles=cycles,
        energy_pj=energy,
        edp=cycles * energy,
        macs=macs,
        effectual_macs=effectual,
        compute_cycles=compute_cycles,
        dram_cycles=dram_cycles,
        padded=workload.padded,
        breakdown=tuple(breakdown),
        footprints=tuple((t, s, reprs[(t, s)].bits) for t in TENSOR_NAMES for s in ("GLB", "PEbuf")),
    )


def fitness(report: CostReport, objective: str = "edp") -> float:
    if not report.valid:
        return 0.0
    value = report.objective(objective)
    return 1.0 / value if value > 0 else math.inf
