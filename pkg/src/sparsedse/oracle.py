"""Exhaustive search over distinct decoded design points.

Raw genomes are massively redundant (trivial-loop orders, format genes of
ranks that do not exist, mechanisms that are dominated), so the oracle walks
decoded design points instead:

* every distinct mapping from :func:`genome.iter_mappings`;
* per tensor, every format chain, pruned to the Pareto front of
  (GLB footprint, PE-buffer footprint) within each group sharing the same
  "compressed at GLB / compressed at PE buffer" flags. Costs rise with both
  footprints and only the flags feed the validity rule for mechanisms, so
  dominated chains can never win;
* per flag combination, the strongest admissible mechanism at each location.
  Filtering more never raises energy or cycles, so this choice is optimal.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from .costmodel import CostReport, evaluate, rank_layout, representation_from_chain
from .genome import (
    FORMAT_SLOTS,
    L1_T,
    Genome,
    MappingSpec,
    Mechanism,
    RankFormat,
    SparseStrategySpec,
    count_mappings,
    encode,
    iter_mappings,
    layout_for,
    raw_space_size,
)
from .workload import TENSOR_NAMES, Platform, Workload

DEFAULT_CAP = 10**7


class SpaceTooLarge(RuntimeError):
    def __init__(self, count: int, raw: int, cap: int):
        super().__init__(
            f"design space has {count:.3e} distinct mappings (raw genome space ~{raw:.2e}); "
            f"cap is {cap:.0e}"
        )
        self.count = count
        self.raw = raw
        self.cap = cap


@dataclass(frozen=True)
class EnumerationResult:
    best_genome: Optional[Genome]
    best_report: Optional[CostReport]
    mappings: int
    evaluated: int
    valid_mappings: int
    # best objective of every mapping with at least one valid design point
    per_mapping_best: Tuple[float, ...]

    def summary(self) -> Dict[str, float]:
        vals = np.asarray(self.per_mapping_best, dtype=float)
        out = {
            "mappings": self.mappings,
            "evaluated_design_points": self.evaluated,
            "valid_mappings": self.valid_mappings,
        }
        if vals.size:
            q = np.quantile(vals, [0.0, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0])
            for name, v in zip(("min", "p10", "p25", "median", "p75", "p90", "max"), q):
                out[name] = float(v)
            out["mean"] = float(vals.mean())
        return out


def _chains(mapping: MappingSpec, workload: Workload, tensor: str) -> List[Tuple[RankFormat, ...]]:
    """Format chains that can differ in cost for ``tensor`` under ``mapping``."""
    subdims = mapping.subdims(workload.tensor(tensor).dims)
    choices = []
    for i, (_, level) in enumerate(subdims):
        if level == L1_T or i >= FORMAT_SLOTS:
            # DRAM-level ranks are never held on chip; ranks past the fifth are fixed
            choices.append((RankFormat.U,))
        elif i == len(subdims) - 1:
            choices.append(tuple(f for f in RankFormat if f != RankFormat.UOP))
        else:
            choices.append(tuple(RankFormat))
    return list(itertools.product(*choices))


def _front(points: List[Tuple[int, int, tuple]]) -> List[Tuple[int, int, tuple]]:
    """Pareto minima over the first two coordinates (ties keep the first)."""
    points = sorted(points, key=lambda p: (p[0], p[1]))
    out = []
    best_second = math.inf
    for p in points:
        if p[1] < best_second:
            out.append(p)
            best_second = p[1]
    return out


def _tensor_options(mapping: MappingSpec, workload: Workload, tensor: str, memo: dict):
    """Flag group (compressed at GLB, at PE buffer) -> Pareto chains."""
    subdims = tuple(mapping.subdims(workload.tensor(tensor).dims))
    key = (
        tensor,
        subdims,
        rank_layout(mapping, workload, tensor, "GLB"),
        rank_layout(mapping, workload, tensor, "PEbuf"),
    )
    if key in memo:
        return memo[key]
    groups: Dict[Tuple[bool, bool], list] = {}
    for chain in _chains(mapping, workload, tensor):
        g = representation_from_chain(mapping, workload, tensor, "GLB", chain)
        p = representation_from_chain(mapping, workload, tensor, "PEbuf", chain)
        groups.setdefault((g.compressed, p.compressed), []).append(
            (g.bits, p.bits, tuple(zip(subdims, chain)))
        )
    memo[key] = {k: _front(v) for k, v in groups.items()}
    return memo[key]


def _best_mechanism(p_ok: bool, q_ok: bool) -> Mechanism:
    if p_ok and q_ok:
        return Mechanism.SKIP_BOTH
    if p_ok:
        return Mechanism.SKIP_Q_BY_P
    if q_ok:
        return Mechanism.SKIP_P_BY_Q
    return Mechanism.NONE


def mapping_candidates(mapping: MappingSpec, workload: Workload, memo: Optional[dict] = None):
    """All non-dominated strategies for one mapping."""
    memo = {} if memo is None else memo
    opts = {t: _tensor_options(mapping, workload, t, memo) for t in TENSOR_NAMES}
    z_all = sorted({c for front in opts["Z"].values() for c in front}, key=lambda c: (c[0], c[1]))
    z_front = _front(z_all)
    for (pg, pp), p_front in sorted(opts["P"].items()):
        for (qg, qp), q_front in sorted(opts["Q"].items()):
            sg = (
                _best_mechanism(pg, qg),
                _best_mechanism(pp, qp),
                _best_mechanism(pp, qp),
            )
            for pc, qc, zc in itertools.product(p_front, q_front, z_front):
                yield SparseStrategySpec((pc[2], qc[2], zc[2]), sg)


def enumerate_space(
    workload: Workload,
    platform: Platform,
    objective: str = "edp",
    cap: int = DEFAULT_CAP,
) -> EnumerationResult:
    count = count_mappings(workload)
    if count > cap:
        raise SpaceTooLarge(count, raw_space_size(workload), cap)
    layout = layout_for(workload)
    best = None
    best_key = None
    evaluated = 0
    per_mapping = []
    memo: dict = {}
    for mapping in iter_mappings(workload):
        local = math.inf
        for strat in mapping_candidates(mapping, workload, memo):
            report = evaluate(mapping, strat, platform, workload)
            evaluated += 1
            if not report.valid:
                continue
            value = report.objective(objective)
            local = min(local, value)
            genome = encode(mapping, strat, layout)
            key = (value, genome)
            if best_key is None or key < best_key:
                best_key = key
                best = (genome, report)
        if local < math.inf:
            per_mapping.append(local)
    return EnumerationResult(
        best_genome=best[0] if best else None,
        best_report=best[1] if best else None,
        mappings=count,
        evaluated=evaluated,
        valid_mappings=len(per_mapping),
        per_mapping_best=tuple(per_mapping),
    )
