"""One-dimensional genome for a joint mapping / sparse-strategy design point.

Layout (left to right)::

    [perm x5][tiling x F][fmtP x5][fmtQ x5][fmtZ x5][sg x3]

* perm genes hold the Cantor rank (1..d!) of the loop order at each of the
  five mapping levels L1_T, L2_T, L2_S, L3_T, L3_S;
* tiling genes assign each prime factor of each dimension to a mapping level
  (1..5), so every genome satisfies the tiling product constraint;
* format genes pick a rank format per tiled sub-dimension (0..4), right
  aligned inside each 5-gene tensor segment;
* S/G genes pick a skipping/gating mechanism (0..6) for the global buffer,
  the PE buffer and the compute units.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from enum import IntEnum
from functools import cached_property
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .workload import TENSOR_NAMES, Workload

NUM_LEVELS = 5
L1_T, L2_T, L2_S, L3_T, L3_S = range(NUM_LEVELS)
LEVEL_NAMES = ("L1_T", "L2_T", "L2_S", "L3_T", "L3_S")
SPATIAL_LEVELS = (L2_S, L3_S)
TEMPORAL_LEVELS = (L1_T, L2_T, L3_T)
FORMAT_SLOTS = 5
SG_LOCATIONS = ("GLB", "PEbuf", "Compute")

Genome = Tuple[int, ...]


class RankFormat(IntEnum):
    U = 0  # uncompressed
    B = 1  # bitmask
    RLE = 2
    CP = 3  # coordinate payload
    UOP = 4  # uncompressed offset pair

    @property
    def compressing(self) -> bool:
        """Whether the rank drops zero coordinates from the payload."""
        return self in (RankFormat.B, RankFormat.RLE, RankFormat.CP)


class Mechanism(IntEnum):
    NONE = 0
    GATE_P_BY_Q = 1  # Gate P <- Q
    GATE_Q_BY_P = 2  # Gate Q <- P
    GATE_BOTH = 3  # Gate P <-> Q
    SKIP_P_BY_Q = 4
    SKIP_Q_BY_P = 5
    SKIP_BOTH = 6

    @property
    def is_skip(self) -> bool:
        return self >= Mechanism.SKIP_P_BY_Q

    @property
    def pairs(self) -> Tuple[Tuple[str, str], ...]:
        """``(follower, leader)`` pairs; the leader's metadata is checked."""
        kind = (self - 1) % 3 if self else None
        if kind == 0:
            return (("P", "Q"),)
        if kind == 1:
            return (("Q", "P"),)
        if kind == 2:
            return (("P", "Q"), ("Q", "P"))
        return ()

    @property
    def leaders(self) -> Tuple[str, ...]:
        return tuple(sorted({leader for _, leader in self.pairs}))

    @property
    def label(self) -> str:
        if self == Mechanism.NONE:
            return "None"
        verb = "Skip" if self.is_skip else "Gate"
        arrow = {0: "P<-Q", 1: "Q<-P", 2: "P<->Q"}[(self - 1) % 3]
        return f"{verb} {arrow}"


# ---------------------------------------------------------------------------
# Cantor (factorial number system) coding of permutations


def cantor_encode(perm: Sequence, canonical: Optional[Sequence] = None) -> int:
    """Rank of ``perm`` among all orderings of ``canonical`` (1-based).

    Without ``canonical`` the permutation is taken to be over ``0..d-1``.
    """
    perm = list(perm)
    if canonical is None:
        canonical = list(range(len(perm)))
    canonical = list(canonical)
    if len(perm) != len(canonical) or sorted(map(str, perm)) != sorted(map(str, canonical)):
        raise ValueError(f"{perm} is not a permutation of {canonical}")
    if len(set(perm)) != len(perm):
        raise ValueError(f"duplicate entries in {perm}")
    d = len(perm)
    remaining = list(canonical)
    code = 1
    for i, item in enumerate(perm):
        a = remaining.index(item)
        code += a * math.factorial(d - 1 - i)
        remaining.pop(a)
    return code


def cantor_decode(code: int, d) -> List:
    """Inverse of :func:`cantor_encode`.

    ``d`` is either the number of dimensions (result holds indices) or the
    canonical dimension list (result holds its entries).
    """
    canonical = list(range(d)) if isinstance(d, int) else list(d)
    n = len(canonical)
    if not 1 <= code <= math.factorial(n):
        raise ValueError(f"code {code} outside [1, {math.factorial(n)}]")
    rest = code - 1
    remaining = list(canonical)
    out = []
    for i in range(n):
        f = math.factorial(n - 1 - i)
        a, rest = divmod(rest, f)
        out.append(remaining.pop(a))
    return out


# ---------------------------------------------------------------------------
# decoded design point


@dataclass(frozen=True)
class MappingSpec:
    """Five-level loop nest: per-dimension bounds and per-level loop order."""

    dims: Tuple[str, ...]
    bounds: Tuple[Tuple[int, ...], ...]  # bounds[dim_idx][level]
    perms: Tuple[Tuple[str, ...], ...]  # perms[level], outer to inner

    def bound(self, dim: str, level: int) -> int:
        return self.bounds[self.dims.index(dim)][level]

    def level_product(self, level: int) -> int:
        return math.prod(b[level] for b in self.bounds)

    def loops(self) -> List[Tuple[int, str, int]]:
        """All loops ``(level, dim, bound)`` in nest order, outermost first."""
        out = []
        for level in range(NUM_LEVELS):
            for dim in self.perms[level]:
                out.append((level, dim, self.bound(dim, level)))
        return out

    def subdims(self, dims: Sequence[str]) -> List[Tuple[str, int]]:
        """Tiled sub-dimensions (bound > 1) over ``dims``, outer to inner.

        Loop order inside a spatial level carries no meaning, so those ranks
        follow the canonical dimension order.
        """
        wanted = set(dims)
        out = []
        for level in range(NUM_LEVELS):
            order = self.dims if level in SPATIAL_LEVELS else self.perms[level]
            out += [(d, level) for d in order if d in wanted and self.bound(d, level) > 1]
        return out


@dataclass(frozen=True)
class SparseStrategySpec:
    formats: Tuple[Tuple[Tuple[Tuple[str, int], RankFormat], ...], ...]  # per P, Q, Z
    sg: Tuple[Mechanism, Mechanism, Mechanism]

    def tensor_formats(self, tensor: str) -> Tuple[Tuple[Tuple[str, int], RankFormat], ...]:
        return self.formats[TENSOR_NAMES.index(tensor)]


# ---------------------------------------------------------------------------
# layout


@dataclass(frozen=True)
class GenomeLayout:
    dim_names: Tuple[str, ...]
    factor_slots: Tuple[int, ...]
    tiling_factors: Tuple[Tuple[int, int], ...]  # (dim_idx, prime) per tiling gene

    @property
    def d(self) -> int:
        return len(self.dim_names)

    @property
    def F(self) -> int:
        return sum(self.factor_slots)

    @property
    def length(self) -> int:
        return NUM_LEVELS + self.F + 3 * FORMAT_SLOTS + len(SG_LOCATIONS)

    @cached_property
    def segments(self) -> Dict[str, Tuple[int, int]]:
        """Segment name -> (offset, length)."""
        out = {}
        pos = 0
        for name, n in (
            ("perm", NUM_LEVELS),
            ("tiling", self.F),
            ("fmtP", FORMAT_SLOTS),
            ("fmtQ", FORMAT_SLOTS),
            ("fmtZ", FORMAT_SLOTS),
            ("sg", len(SG_LOCATIONS)),
        ):
            out[name] = (pos, n)
            pos += n
        return out

    def segment_slice(self, name: str) -> slice:
        off, n = self.segments[name]
        return slice(off, off + n)

    @cached_property
    def gene_ranges(self) -> Tuple[Tuple[int, int], ...]:
        ranges = [(1, math.factorial(self.d))] * NUM_LEVELS
        ranges += [(1, NUM_LEVELS)] * self.F
        ranges += [(0, len(RankFormat) - 1)] * (3 * FORMAT_SLOTS)
        ranges += [(0, len(Mechanism) - 1)] * len(SG_LOCATIONS)
        return tuple(ranges)

    @cached_property
    def lows(self) -> np.ndarray:
        return np.array([lo for lo, _ in self.gene_ranges], dtype=np.int64)

    @cached_property
    def highs(self) -> np.ndarray:
        return np.array([hi for _, hi in self.gene_ranges], dtype=np.int64)

    @cached_property
    def boundaries(self) -> Tuple[int, ...]:
        """Internal segment boundaries (cut positions), ascending."""
        cuts = set()
        for off, n in self.segments.values():
            for c in (off, off + n):
                if 0 < c < self.length:
                    cuts.add(c)
        return tuple(sorted(cuts))

    def segment_of(self, index: int) -> str:
        for name, (off, n) in self.segments.items():
            if off <= index < off + n:
                return name
        raise IndexError(index)

    def in_range(self, genome: Sequence[int]) -> bool:
        if len(genome) != self.length:
            return False
        g = np.asarray(genome)
        return bool(np.all(g >= self.lows) and np.all(g <= self.highs))


def layout_for(workload: Workload) -> GenomeLayout:
    slots = []
    factors = []
    for i, fs in enumerate(workload.factors):
        slots.append(len(fs))
        factors.extend((i, p) for p in fs)
    return GenomeLayout(workload.dim_names, tuple(slots), tuple(factors))


def random_genome(layout: GenomeLayout, rng: np.random.Generator) -> Genome:
    genes = rng.integers(layout.lows, layout.highs + 1)
    return tuple(int(x) for x in genes)


def check_genome(genome: Sequence[int], layout: GenomeLayout) -> None:
    if len(genome) != layout.length:
        raise ValueError(f"genome has {len(genome)} genes, layout expects {layout.length}")
    for i, (g, (lo, hi)) in enumerate(zip(genome, layout.gene_ranges)):
        if not lo <= g <= hi:
            raise ValueError(f"gene {i} ({layout.segment_of(i)}) = {g} outside [{lo}, {hi}]")


# ---------------------------------------------------------------------------
# decode / encode


def decode_mapping(genome: Sequence[int], layout: GenomeLayout) -> MappingSpec:
    names = layout.dim_names
    perms = tuple(tuple(cantor_decode(genome[l], names)) for l in range(NUM_LEVELS))
    bounds = [[1] * NUM_LEVELS for _ in names]
    off = NUM_LEVELS
    for j, (dim_idx, prime) in enumerate(layout.tiling_factors):
        bounds[dim_idx][genome[off + j] - 1] *= prime
    return MappingSpec(names, tuple(tuple(b) for b in bounds), perms)


def decode_formats(
    genes: Sequence[int], subdims: Sequence[Tuple[str, int]]
) -> Tuple[Tuple[Tuple[str, int], RankFormat], ...]:
    r = len(subdims)
    fmts = []
    for i in range(r):
        if i < FORMAT_SLOTS:
            g = genes[FORMAT_SLOTS - min(r, FORMAT_SLOTS) + i]
            fmts.append(RankFormat(g))
        else:
            fmts.append(RankFormat.U)
    # UOP needs a rank underneath it
    if fmts and fmts[-1] == RankFormat.UOP:
        fmts[-1] = RankFormat.U
    return tuple(zip(subdims, fmts))


def decode(
    genome: Sequence[int], layout: GenomeLayout, workload: Workload
) -> Tuple[MappingSpec, SparseStrategySpec]:
    mapping = decode_mapping(genome, layout)
    formats = []
    for t in TENSOR_NAMES:
        sl = layout.segment_slice("fmt" + t)
        subdims = mapping.subdims(workload.tensor(t).dims)
        formats.append(decode_formats(genome[sl], subdims))
    sg = tuple(Mechanism(g) for g in genome[layout.segment_slice("sg")])
    return mapping, SparseStrategySpec(tuple(formats), sg)


def tiling_genes(mapping: MappingSpec, layout: GenomeLayout) -> List[int]:
    """Level assignment (1-based) of every prime factor reproducing ``mapping``."""
    remaining = [list(b) for b in mapping.bounds]
    genes = []
    for dim_idx, prime in layout.tiling_factors:
        for level in range(NUM_LEVELS):
            if remaining[dim_idx][level] % prime == 0:
                remaining[dim_idx][level] //= prime
                genes.append(level + 1)
                break
        else:
            raise ValueError(f"bounds of {layout.dim_names[dim_idx]} do not factor over the layout")
    if any(x != 1 for row in remaining for x in row):
        raise ValueError("mapping bounds do not multiply to the padded dimension sizes")
    return genes


def format_genes(formats: Sequence[Tuple[Tuple[str, int], RankFormat]]) -> List[int]:
    genes = [0] * FORMAT_SLOTS
    r = len(formats)
    if r > FORMAT_SLOTS and any(f != RankFormat.U for _, f in formats[FORMAT_SLOTS:]):
        raise ValueError("ranks beyond the fifth can only be uncompressed")
    shown = [int(f) for _, f in formats[:FORMAT_SLOTS]]
    genes[FORMAT_SLOTS - len(shown):] = shown
    return genes


def encode(mapping: MappingSpec, strategy: SparseStrategySpec, layout: GenomeLayout) -> Genome:
    genes = [cantor_encode(mapping.perms[l], layout.dim_names) for l in range(NUM_LEVELS)]
    genes += tiling_genes(mapping, layout)
    for fmts in strategy.formats:
        genes += format_genes(fmts)
    genes += [int(m) for m in strategy.sg]
    return tuple(genes)


# ---------------------------------------------------------------------------
# text form


def format_genome(genome: Sequence[int], layout: GenomeLayout) -> str:
    parts = []
    for name in ("perm", "tiling", "fmtP", "fmtQ", "fmtZ", "sg"):
        parts.append(",".join(str(g) for g in genome[layout.segment_slice(name)]))
    return "|".join(parts)


def parse_genome(text: str, layout: GenomeLayout) -> Genome:
    parts = text.strip().split("|")
    if len(parts) != 6:
        raise ValueError(f"expected 6 '|'-separated segments, got {len(parts)}")
    genes = []
    for name, part in zip(("perm", "tiling", "fmtP", "fmtQ", "fmtZ", "sg"), parts):
        vals = [int(x) for x in part.split(",") if x.strip()]
        if len(vals) != layout.segments[name][1]:
            raise ValueError(f"segment {name} has {len(vals)} genes, expected {layout.segments[name][1]}")
        genes += vals
    check_genome(genes, layout)
    return tuple(genes)


# ---------------------------------------------------------------------------
# enumeration of distinct mappings


def _spread(count: int, levels: int = NUM_LEVELS) -> Iterator[Tuple[int, ...]]:
    """All ways to distribute ``count`` identical factors over ``levels``."""
    for cut in itertools.combinations(range(count + levels - 1), levels - 1):
        prev = -1
        out = []
        for c in cut + (count + levels - 1,):
            out.append(c - prev - 1)
            prev = c
        yield tuple(out)


def dim_tilings(size: int) -> List[Tuple[int, ...]]:
    """Every distinct 5-level bound tuple whose product is ``size``."""
    from .workload import factorize

    primes: Dict[int, int] = {}
    for p in factorize(size):
        primes[p] = primes.get(p, 0) + 1
    options = [[(1,) * NUM_LEVELS]]
    for p, m in primes.items():
        options.append([tuple(p**e for e in exps) for exps in _spread(m)])
    out = []
    for combo in itertools.product(*options):
        out.append(tuple(math.prod(c[l] for c in combo) for l in range(NUM_LEVELS)))
    return out


def iter_mappings(workload: Workload) -> Iterator[MappingSpec]:
    """Distinct mappings up to the order of trivial (bound 1) loops.

    Within a temporal level only the relative order of loops with bound > 1
    changes the cost or the rank order; trivial loops are appended in
    canonical order. Spatial levels always use the canonical order.
    """
    names = workload.dim_names
    per_dim = [dim_tilings(s) for s in workload.sizes]
    for bounds in itertools.product(*per_dim):
        level_orders = []
        for level in range(NUM_LEVELS):
            active = [n for n, b in zip(names, bounds) if b[level] > 1]
            idle = [n for n, b in zip(names, bounds) if b[level] == 1]
            if level in SPATIAL_LEVELS:
                level_orders.append([tuple(names)])
            else:
                level_orders.append([tuple(p) + tuple(idle) for p in itertools.permutations(active)])
        for perms in itertools.product(*level_orders):
            yield MappingSpec(names, tuple(bounds), tuple(perms))


def count_mappings(workload: Workload) -> int:
    """Number of mappings :func:`iter_mappings` yields, without enumerating."""
    # state: how many dims are active at each level
    states: Dict[Tuple[int, ...], int] = {(0,) * NUM_LEVELS: 1}
    for size in workload.sizes:
        masks: Dict[Tuple[int, ...], int] = {}
        for b in dim_tilings(size):
            key = tuple(int(x > 1) for x in b)
            masks[key] = masks.get(key, 0) + 1
        nxt: Dict[Tuple[int, ...], int] = {}
        for state, n in states.items():
            for mask, c in masks.items():
                key = tuple(s + m for s, m in zip(state, mask))
                nxt[key] = nxt.get(key, 0) + n * c
        states = nxt
    return sum(
        n * math.prod(math.factorial(state[l]) for l in TEMPORAL_LEVELS)
        for state, n in states.items()
    )


def raw_space_size(workload: Workload) -> int:
    """Design-space size with value-encoded tiling, as counted for the 10^41 figure."""
    mapping = math.factorial(workload.d) ** NUM_LEVELS
    for s in workload.sizes:
        mapping *= s**NUM_LEVELS
    return mapping * len(RankFormat) ** (3 * FORMAT_SLOTS) * len(Mechanism) ** len(SG_LOCATIONS)
