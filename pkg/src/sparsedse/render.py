"""Human-readable design reports and the nested-for loop text form."""

from __future__ import annotations

import re
from typing import Dict, List

from .costmodel import CostReport
from .genome import (
    LEVEL_NAMES,
    NUM_LEVELS,
    SG_LOCATIONS,
    SPATIAL_LEVELS,
    GenomeLayout,
    MappingSpec,
    SparseStrategySpec,
    format_genome,
)
from .workload import TENSOR_NAMES, Platform, Workload

_LEVEL_NOTE = {
    0: "L1_T  DRAM",
    1: "L2_T  global buffer",
    2: "L2_S  PE array",
    3: "L3_T  PE buffer",
    4: "L3_S  MACs",
}
_LOOP = re.compile(r"^(\s*)(par-for|for)\s+(\w+)(\d)\s+in\s+\[0,\s*(\d+)\)")


def render_loop_nest(mapping: MappingSpec, workload: Workload) -> str:
    """Every loop, bound-1 loops included, outermost first."""
    lines = []
    depth = 0
    for level in range(NUM_LEVELS):
        kw = "par-for" if level in SPATIAL_LEVELS else "for"
        for i, dim in enumerate(mapping.perms[level]):
            note = f"  # {_LEVEL_NOTE[level]}" if i == 0 else ""
            lines.append(f"{'  ' * depth}{kw} {dim}{level + 1} in [0,{mapping.bound(dim, level)}){note}")
            depth += 1
    p, q, z = (workload.tensor(t) for t in TENSOR_NAMES)
    lines.append(
        f"{'  ' * depth}{z.name}[{','.join(z.dims)}] += "
        f"{p.name}[{','.join(p.dims)}] * {q.name}[{','.join(q.dims)}]"
    )
    return "\n".join(lines) + "\n"


def parse_loop_nest(text: str, workload: Workload) -> MappingSpec:
    names = workload.dim_names
    bounds: Dict[str, List[int]] = {d: [None] * NUM_LEVELS for d in names}
    perms: List[List[str]] = [[] for _ in range(NUM_LEVELS)]
    for line in text.splitlines():
        m = _LOOP.match(line)
        if not m:
            continue
        _, kw, dim, level, bound = m.groups()
        level = int(level) - 1
        if dim not in bounds or not 0 <= level < NUM_LEVELS:
            raise ValueError(f"unknown loop {dim}{level + 1}")
        if (kw == "par-for") != (level in SPATIAL_LEVELS):
            raise ValueError(f"loop {dim}{level + 1} has the wrong kind")
        if bounds[dim][level] is not None:
            raise ValueError(f"loop {dim}{level + 1} appears twice")
        bounds[dim][level] = int(bound)
        perms[level].append(dim)
    for d in names:
        if None in bounds[d]:
            raise ValueError(f"loop nest is missing levels of dimension {d}")
    return MappingSpec(names, tuple(tuple(bounds[d]) for d in names), tuple(tuple(p) for p in perms))


def render_strategy(strategy: SparseStrategySpec) -> str:
    lines = ["formats (outer to inner rank):"]
    for t, fmts in zip(TENSOR_NAMES, strategy.formats):
        chain = " -> ".join(f"{d}{l + 1}:{f.name}" for (d, l), f in fmts) or "(no tiled ranks)"
        lines.append(f"  {t}: {chain}")
    lines.append("mechanisms:")
    for loc, mech in zip(SG_LOCATIONS, strategy.sg):
        lines.append(f"  {loc}: {mech.label}")
    return "\n".join(lines) + "\n"


def render_design(
    genome,
    layout: GenomeLayout,
    mapping: MappingSpec,
    strategy: SparseStrategySpec,
    report: CostReport,
    workload: Workload,
    platform: Platform,
) -> str:
    dims = ", ".join(f"{d}={s}" for d, s in workload.dims)
    out = [f"workload: {workload.name} ({dims})"]
    for d, orig, padded in workload.padding:
        out.append(f"  note: {d} padded from {orig} to {padded}")
    out.append(f"platform: {platform.name}")
    out.append(f"genome: {format_genome(genome, layout)}")
    out.append(f"cycles: {report.cycles}")
    out.append(f"energy_pj: {report.energy_pj!r}")
    out.append(f"edp: {report.edp!r}")
    out.append("")
    out.append("loop nest:")
    text = render_loop_nest(mapping, workload) + "\n" + render_strategy(strategy)
    return "\n".join(out) + "\n" + text


__all__ = [
    "LEVEL_NAMES",
    "parse_loop_nest",
    "render_design",
    "render_loop_nest",
    "render_strategy",
]
