"""Reference searchers.

* ``random_mapper_search``: random mappings under a pinned, hand-picked
  sparse strategy.
* ``fixed_mapping_format_search``: random formats and mechanisms under a
  pinned mapping built by a simple output-stationary heuristic.
* ``uniform_random_search``: every gene uniform; the yardstick for how many
  explored points are valid.

All three share the evaluator's budget accounting and the trace format of
the evolution engine. When the budget covers the whole searched sub-space,
the first two enumerate it instead of sampling.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .genome import (
    FORMAT_SLOTS,
    L1_T,
    L2_S,
    L2_T,
    L3_S,
    L3_T,
    NUM_LEVELS,
    GenomeLayout,
    MappingSpec,
    RankFormat,
    cantor_encode,
    count_mappings,
    decode_mapping,
    iter_mappings,
    random_genome,
    tiling_genes,
)
from .search import Evaluator, SearchResult, trace_row
from .workload import TENSOR_NAMES, Platform, Workload

RANDOM_MAPPER = "random_mapper"
FIXED_MAPPING = "fixed_mapping_formats"

# CP on the innermost rank of P and Q, Z uncompressed, skip both at compute
DEFAULT_PINNED_STRATEGY = (0, 0, 0, 0, 3) + (0, 0, 0, 0, 3) + (0,) * FORMAT_SLOTS + (0, 0, 6)


@dataclass
class BaselineConfig:
    kind: str = RANDOM_MAPPER
    budget: int = 20000
    seed: int = 0
    objective: str = "edp"
    pinned_strategy: Optional[Sequence[int]] = None  # 18 format + S/G genes
    pinned_mapping: Optional[Sequence[int]] = None  # 5 + F perm and tiling genes
    batch_size: int = 100  # evaluations per trace row
    workers: int = 0

    def __post_init__(self):
        if self.kind not in (RANDOM_MAPPER, FIXED_MAPPING, "uniform"):
            raise ValueError(f"unknown baseline kind {self.kind!r}")
        if self.budget < 1:
            raise ValueError("budget must be positive")


def _drive(ev: Evaluator, genomes, batch_size: int) -> SearchResult:
    """Evaluate a genome stream in trace-row sized batches."""
    trace = []
    it = iter(genomes)
    gen = 0
    while ev.remaining > 0:
        batch = list(itertools.islice(it, min(batch_size, ev.remaining)))
        if not batch:
            break
        inds = ev.evaluate(batch, generation=gen)
        trace.append(trace_row(gen, ev, inds, inds))
        gen += 1
    return SearchResult(ev.best, trace, ev.used, ev.valid_fraction)


def _mapping_genes(mapping: MappingSpec, layout: GenomeLayout) -> List[int]:
    genes = [cantor_encode(mapping.perms[l], layout.dim_names) for l in range(NUM_LEVELS)]
    return genes + tiling_genes(mapping, layout)


def _split(layout: GenomeLayout) -> int:
    return NUM_LEVELS + layout.F


# ---------------------------------------------------------------------------


def random_mapper_search(workload: Workload, platform: Platform, config: BaselineConfig) -> SearchResult:
    pinned = tuple(config.pinned_strategy or DEFAULT_PINNED_STRATEGY)
    with Evaluator(workload, platform, config.budget, config.objective, config.workers) as ev:
        layout = ev.layout
        if len(pinned) != layout.length - _split(layout):
            raise ValueError("pinned strategy must hold 15 format genes and 3 S/G genes")
        if config.budget >= count_mappings(workload):
            stream = (tuple(_mapping_genes(m, layout)) + pinned for m in iter_mappings(workload))
        else:
            rng = np.random.default_rng(config.seed)
            cut = _split(layout)
            stream = (random_genome(layout, rng)[:cut] + pinned for _ in itertools.count())
        return _drive(ev, stream, config.batch_size)


# ---------------------------------------------------------------------------


def _dense_fits(bounds, levels, workload: Workload, capacity_bits: int, halo) -> bool:
    total = 0
    for t in TENSOR_NAMES:
        n = 1
        for d in workload.tensor(t).dims:
            e = math.prod(bounds[d][l] for l in levels)
            if d in halo.get(t, {}):
                e += math.prod(bounds[halo[t][d]][l] for l in levels) - 1
            n *= e
        total += n * workload.word_bits
    return total <= capacity_bits


def heuristic_mapping(workload: Workload, platform: Platform) -> MappingSpec:
    """Output-stationary style nest.

    Reduction factors fill the MACs of a PE (largest first), output factors
    fill the PE array, then the PE buffer and the global buffer take as many
    factors as fit densely (reduction factors first). Everything else stays
    at the DRAM level. Every level orders output dims outside reduction dims.
    """
    names = workload.dim_names
    bounds = {d: [1] * NUM_LEVELS for d in names}
    left = {d: list(f) for d, f in zip(names, workload.factors)}
    reduction = [d for d in names if d in workload.reduction_dims]
    output = [d for d in names if d in workload.tensor("Z").dims]
    halo = {}
    for t in TENSOR_NAMES:
        halo[t] = dict(workload.halo(t))

    def factors_of(dims):
        return sorted(((p, d) for d in dims for p in left[d]), key=lambda x: (-x[0], names.index(x[1])))

    def place(dims, level, ok):
        for p, d in factors_of(dims):
            bounds[d][level] *= p
            if ok():
                left[d].remove(p)
            else:
                bounds[d][level] //= p

    def level_prod(level):
        return math.prod(bounds[d][level] for d in names)

    place(reduction, L3_S, lambda: level_prod(L3_S) <= platform.macs_per_pe)
    place(output, L2_S, lambda: level_prod(L2_S) <= platform.num_pes)
    pe_levels = (L3_T, L3_S)
    glb_levels = (L2_T, L2_S, L3_T, L3_S)
    pe_ok = lambda: _dense_fits(bounds, pe_levels, workload, platform.pe_buffer_bytes * 8, halo)
    glb_ok = lambda: _dense_fits(bounds, glb_levels, workload, platform.glb_bytes * 8, halo)
    others = [d for d in names if d not in reduction]
    for dims in (reduction, others):
        place(dims, L3_T, lambda: pe_ok() and glb_ok())
    for dims in (reduction, others):
        place(dims, L2_T, glb_ok)
    for d in names:
        for p in left[d]:
            bounds[d][L1_T] *= p
    order = tuple(output + [d for d in names if d not in output and d in reduction])
    order += tuple(d for d in names if d not in order)
    return MappingSpec(names, tuple(tuple(bounds[d]) for d in names), (order,) * NUM_LEVELS)


def strategy_space(layout: GenomeLayout, mapping: MappingSpec, workload: Workload):
    """Distinct format/S-G gene strings for a fixed mapping."""
    per_tensor = []
    for t in TENSOR_NAMES:
        r = min(len(mapping.subdims(workload.tensor(t).dims)), FORMAT_SLOTS)
        opts = []
        for combo in itertools.product(range(len(RankFormat)), repeat=r):
            if r and combo[-1] == RankFormat.UOP and len(mapping.subdims(workload.tensor(t).dims)) == r:
                continue  # decodes the same as Uncompressed
            opts.append((0,) * (FORMAT_SLOTS - r) + combo)
        per_tensor.append(opts)
    for p, q, z in itertools.product(*per_tensor):
        for sg in itertools.product(range(7), repeat=3):
            yield p + q + z + sg


def strategy_space_size(layout: GenomeLayout, mapping: MappingSpec, workload: Workload) -> int:
    n = 7**3
    for t in TENSOR_NAMES:
        total = len(mapping.subdims(workload.tensor(t).dims))
        r = min(total, FORMAT_SLOTS)
        n *= 5**r - (5 ** (r - 1) if r and total == r else 0)
    return n


def fixed_mapping_format_search(
    workload: Workload, platform: Platform, config: BaselineConfig
) -> SearchResult:
    with Evaluator(workload, platform, config.budget, config.objective, config.workers) as ev:
        layout = ev.layout
        cut = _split(layout)
        if config.pinned_mapping is not None:
            head = tuple(config.pinned_mapping)
            if len(head) != cut:
                raise ValueError(f"pinned mapping must hold {cut} perm and tiling genes")
        else:
            head = tuple(_mapping_genes(heuristic_mapping(workload, platform), layout))
        mapping = decode_mapping(head + (0,) * (layout.length - cut), layout)
        if config.budget >= strategy_space_size(layout, mapping, workload):
            stream = (head + tail for tail in strategy_space(layout, mapping, workload))
        else:
            rng = np.random.default_rng(config.seed)
            stream = (head + random_genome(layout, rng)[cut:] for _ in itertools.count())
        return _drive(ev, stream, config.batch_size)


# ---------------------------------------------------------------------------


def uniform_random_search(workload: Workload, platform: Platform, config: BaselineConfig) -> SearchResult:
    with Evaluator(workload, platform, config.budget, config.objective, config.workers) as ev:
        rng = np.random.default_rng(config.seed)
        stream = (random_genome(ev.layout, rng) for _ in itertools.count())
        return _drive(ev, stream, config.batch_size)


def run_baseline(workload: Workload, platform: Platform, config: BaselineConfig) -> SearchResult:
    if config.kind == RANDOM_MAPPER:
        return random_mapper_search(workload, platform, config)
    if config.kind == FIXED_MAPPING:
        return fixed_mapping_format_search(workload, platform, config)
    return uniform_random_search(workload, platform, config)
