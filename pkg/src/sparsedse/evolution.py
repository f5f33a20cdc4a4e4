"""Sensitivity-guided evolution strategy over the joint genome.

Flow: calibrate gene sensitivities, seed the population by stratified
sampling over the high-sensitivity genes, then iterate crossover (cuts only
at high-sensitivity run boundaries or segment boundaries), annealed mutation
and (mu + lambda) truncation until the evaluation budget is spent.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import qmc

from .genome import Genome, GenomeLayout, random_genome
from .search import Evaluator, Individual, SearchResult, TraceRow, select, trace_row
from .sensitivity import DEFAULT_SAMPLES, DEFAULT_TRIALS, SensitivityProfile, calibrate
from .workload import Platform, Workload


@dataclass
class EsConfig:
    population_size: int = 100
    generations: Optional[int] = None  # None: as many as the budget allows
    total_budget: int = 20000
    parent_fraction: float = 0.25
    crossover_rate: float = 0.9
    mutation_rate: float = 0.3
    hypercube_count: int = 100
    init_budget_per_cube: int = 20
    objective: str = "edp"
    seed: int = 0
    calibration_trials: int = DEFAULT_TRIALS
    calibration_samples: int = DEFAULT_SAMPLES
    calibration_share: float = 0.1  # of total_budget
    init_share: float = 0.5  # of the budget left after calibration
    workers: int = 0

    def __post_init__(self):
        if self.population_size < 2:
            raise ValueError("population_size must be at least 2")
        if not 0 < self.parent_fraction <= 1:
            raise ValueError("parent_fraction must be in (0, 1]")
        for name in ("crossover_rate", "mutation_rate", "calibration_share", "init_share"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.total_budget < 1:
            raise ValueError("total_budget must be positive")
        if self.generations is not None and self.generations < 1:
            raise ValueError("generations must be positive")


# ---------------------------------------------------------------------------
# operators


def annealing_probabilities(g: float, G: float) -> Tuple[float, float]:
    """(P_high, P_low) for generation ``g`` of ``G``."""
    if G < 1 or not 0 <= g <= G:
        raise ValueError(f"need 0 <= g <= G and G >= 1, got g={g}, G={G}")
    phi = g / G
    p_high = 0.8 * math.exp(-phi) * (1.0 - phi)
    return p_high, 1.0 - p_high


def _mutable(genes: Sequence[int], layout: GenomeLayout) -> List[int]:
    return [i for i in genes if layout.gene_ranges[i][1] > layout.gene_ranges[i][0]]


def mutate(
    genome: Sequence[int],
    profile: SensitivityProfile,
    g: float,
    G: float,
    rng: np.random.Generator,
    layout: GenomeLayout,
) -> Genome:
    """Redraw one gene, from the high or low class per the annealing schedule."""
    p_high, _ = annealing_probabilities(g, G)
    high = _mutable(profile.high_set, layout)
    low = _mutable(profile.low_set, layout)
    pick_high = rng.random() < p_high
    segment = high if pick_high else low
    if not segment:
        segment = low if pick_high else high
    out = list(genome)
    if not segment:
        return tuple(out)
    i = segment[int(rng.integers(len(segment)))]
    lo, hi = layout.gene_ranges[i]
    v = lo + int(rng.integers(hi - lo))
    if v >= out[i]:
        v += 1
    out[i] = v
    return tuple(out)


def high_runs(high_set: Sequence[int]) -> List[Tuple[int, int]]:
    """Maximal runs of consecutive high genes as half-open ``(start, end)``."""
    runs = []
    for i in sorted(high_set):
        if runs and runs[-1][1] == i:
            runs[-1][1] = i + 1
        else:
            runs.append([i, i + 1])
    return [tuple(r) for r in runs]


def cut_points(profile: SensitivityProfile, layout: GenomeLayout) -> List[int]:
    runs = high_runs(profile.high_set)
    cuts = set(layout.boundaries)
    for s, e in runs:
        cuts.update((s, e))
    inside = lambda c: any(s < c < e for s, e in runs)
    return sorted(c for c in cuts if 0 < c < layout.length and not inside(c))


def crossover(
    parent_a: Sequence[int],
    parent_b: Sequence[int],
    profile: SensitivityProfile,
    rng: np.random.Generator,
    layout: GenomeLayout,
) -> Genome:
    """One-point crossover that never splits a run of high-sensitivity genes."""
    cuts = cut_points(profile, layout)
    if not cuts:
        return tuple(parent_a)
    c = cuts[int(rng.integers(len(cuts)))]
    return tuple(parent_a[:c]) + tuple(parent_b[c:])


# ---------------------------------------------------------------------------
# initialization


def split_counts(ranges: Sequence[int], target: int) -> List[int]:
    """Per-axis split counts whose product lands as close to ``target`` as the
    greedy widest-cell-first rule allows, never beyond twice the target."""
    counts = [1] * len(ranges)
    prod = 1
    while prod < target:
        grow = [i for i, r in enumerate(ranges) if counts[i] < r]
        if not grow:
            break
        i = max(grow, key=lambda k: (ranges[k] / counts[k], -k))
        new = prod // counts[i] * (counts[i] + 1)
        if new > 2 * target:
            break
        if new >= target:
            if new - target <= target - prod:
                counts[i] += 1
            break
        counts[i] += 1
        prod = new
    return counts


def hypercube_cells(layout: GenomeLayout, high_set: Sequence[int], target: int):
    """Cells as per-gene ``(lo, hi)`` boxes over the high genes, lexicographic."""
    ranges = [layout.gene_ranges[i] for i in high_set]
    counts = split_counts([hi - lo + 1 for lo, hi in ranges], target)
    axes = []
    for (lo, hi), c in zip(ranges, counts):
        parts = np.array_split(np.arange(lo, hi + 1), c)
        axes.append([(int(p[0]), int(p[-1])) for p in parts])
    return list(itertools.product(*axes))


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def _cell_genome(cell, high, low, layout, combos, rng) -> Genome:
    g = list(random_genome(layout, rng))
    for i, (lo, hi) in zip(high, cell):
        g[i] = int(rng.integers(lo, hi + 1))
    if combos:
        combo = combos[int(rng.integers(len(combos)))]
        for i, v in zip(low, combo):
            g[i] = v
    return tuple(g)


def hshi_init(
    layout: GenomeLayout,
    profile: SensitivityProfile,
    platform: Platform,
    workload: Workload,
    config: EsConfig,
    rng: np.random.Generator,
    evaluator: Optional[Evaluator] = None,
    max_evaluations: Optional[int] = None,
    warnings: Optional[List[str]] = None,
) -> List[Individual]:
    """Initial population: at most one valid individual per hypercube cell,
    topped up by random valid search, then by invalid individuals."""
    ev = evaluator or Evaluator(workload, platform, config.total_budget, config.objective)
    limit = ev.remaining if max_evaluations is None else min(max_evaluations, ev.remaining)
    stop = ev.used + limit
    seed = int(rng.integers(2**63))
    found: List[Individual] = []
    invalid: List[Individual] = []

    if profile.high_set:
        cells = hypercube_cells(layout, profile.high_set, config.hypercube_count)
        streams = [_stream(seed, 0, k) for k in range(len(cells))]
        open_cells = list(range(len(cells)))
        # one candidate per open cell per round; a cell closes on its first valid
        for _ in range(config.init_budget_per_cube):
            room = stop - ev.used
            if room <= 0 or not open_cells:
                break
            batch = open_cells[:room]
            genomes = [
                _cell_genome(cells[k], profile.high_set, profile.low_set, layout,
                             profile.valid_low_combos, streams[k])
                for k in batch
            ]
            inds = ev.evaluate(genomes)
            for k, ind in zip(batch, inds):
                if ind.valid:
                    found.append(ind)
                    open_cells.remove(k)
                else:
                    invalid.append(ind)
    else:
        room = min(config.population_size, stop - ev.used)
        if room > 0:
            sampler = qmc.LatinHypercube(d=layout.length, seed=_stream(seed, 1))
            u = sampler.random(room)
            span = layout.highs - layout.lows + 1
            genes = layout.lows + np.minimum(np.floor(u * span).astype(np.int64), span - 1)
            for ind in ev.evaluate([tuple(int(x) for x in row) for row in genes]):
                (found if ind.valid else invalid).append(ind)

    # random valid search for the remainder
    fill = _stream(seed, 2)
    while len(found) < config.population_size and ev.used < stop:
        need = min(config.population_size - len(found), stop - ev.used)
        for ind in ev.evaluate([random_genome(layout, fill) for _ in range(need)]):
            (found if ind.valid else invalid).append(ind)

    population = select(found, config.population_size)
    if len(population) < config.population_size:
        short = config.population_size - len(population)
        extra = select(invalid, short)
        if extra and warnings is not None:
            warnings.append(f"initial population padded with {len(extra)} invalid individuals")
        population += extra
    return population


# ---------------------------------------------------------------------------
# main loop


# re-mutation attempts for an offspring that repeats a known genome
RETRY_DUPLICATES = 10


def _offspring(gen, slot, seed, parents, profile, layout, config, G, known) -> Genome:
    rng = _stream(seed, 3, gen, slot)
    a = parents[int(rng.integers(len(parents)))]
    if len(parents) > 1 and rng.random() < config.crossover_rate:
        j = int(rng.integers(len(parents) - 1))
        b = [p for p in parents if p is not a][j]
        child = crossover(a.genome, b.genome, profile, rng, layout)
    else:
        child = a.genome
    # an unchanged copy would only re-spend budget on a known point
    if rng.random() < config.mutation_rate or child == a.genome:
        child = mutate(child, profile, min(gen, G), G, rng, layout)
    for _ in range(RETRY_DUPLICATES):
        if not known(child):
            break
        child = mutate(child, profile, min(gen, G), G, rng, layout)
    return child


def run(workload: Workload, platform: Platform, config: EsConfig) -> SearchResult:
    if config.total_budget < config.population_size:
        raise ValueError(
            f"budget {config.total_budget} is smaller than one population ({config.population_size})"
        )
    rng = np.random.default_rng(config.seed)
    warnings: List[str] = []
    with Evaluator(workload, platform, config.total_budget, config.objective, config.workers) as ev:
        layout = ev.layout

        cal_cap = int(config.calibration_share * config.total_budget)
        profile = calibrate(
            layout,
            workload,
            platform,
            rng,
            trials=config.calibration_trials,
            samples=config.calibration_samples,
            evaluator=ev,
            max_evaluations=cal_cap,
        )

        used0, valid0 = ev.used, ev.valid_count
        init_cap = max(config.population_size, int(config.init_share * ev.remaining))
        population = hshi_init(
            layout, profile, platform, workload, config, rng, ev, init_cap, warnings
        )
        row = trace_row(0, ev, population, ())
        spent = ev.used - used0
        frac = (ev.valid_count - valid0) / spent if spent else 0.0
        trace = [TraceRow(0, ev.used, row.best_edp, row.mean_valid_edp, frac)]

        n_parents = max(1, int(round(config.parent_fraction * config.population_size)))
        n_children = max(1, config.population_size - n_parents)
        G = config.generations or max(1, math.ceil(ev.remaining / n_children))
        seed = int(rng.integers(2**63))
        gen = 0
        while ev.remaining > 0 and gen < G and population:
            gen += 1
            parents = population[:n_parents]
            count = min(n_children, ev.remaining)
            children = []
            fresh = set()
            known = lambda g: g in fresh or ev.seen(g)
            for slot in range(count):
                child = _offspring(gen, slot, seed, parents, profile, layout, config, G, known)
                children.append(child)
                fresh.add(child)
            offspring = ev.evaluate(children, generation=gen)
            population = select(population + offspring, config.population_size)
            trace.append(trace_row(gen, ev, population, offspring))

        return SearchResult(
            best=ev.best,
            trace=trace,
            evaluations=ev.used,
            valid_fraction=ev.valid_fraction,
            profile=profile,
            warnings=warnings,
        )
