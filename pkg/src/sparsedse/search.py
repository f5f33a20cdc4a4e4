"""Budgeted genome evaluation shared by every searcher."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from .costmodel import CostReport, evaluate, fitness
from .genome import Genome, GenomeLayout, decode, layout_for
from .workload import Platform, Workload


@dataclass(frozen=True)
class Individual:
    genome: Genome
    fitness: float
    report: CostReport
    generation: int = 0

    @property
    def valid(self) -> bool:
        return self.report.valid


def rank_key(ind: Individual):
    """Sort key: fitness descending, then genome ascending."""
    return (-ind.fitness, ind.genome)


def select(individuals: Sequence[Individual], size: int) -> List[Individual]:
    """Truncation selection on distinct genomes."""
    seen = set()
    unique = []
    for ind in sorted(individuals, key=rank_key):
        if ind.genome not in seen:
            seen.add(ind.genome)
            unique.append(ind)
    return unique[:size]


# worker-process state for parallel evaluation
_WORKER: Dict[str, object] = {}


def _init_worker(workload, platform, layout):
    _WORKER.update(workload=workload, platform=platform, layout=layout)


def _evaluate_in_worker(genome: Genome) -> CostReport:
    return evaluate_genome(genome, _WORKER["layout"], _WORKER["workload"], _WORKER["platform"])


def evaluate_genome(
    genome: Sequence[int], layout: GenomeLayout, workload: Workload, platform: Platform
) -> CostReport:
    mapping, strategy = decode(genome, layout, workload)
    return evaluate(mapping, strategy, platform, workload)


class BudgetExhausted(RuntimeError):
    pass


class Evaluator:
    """Counts every cost-model call against a fixed budget.

    Repeated genomes are answered from a cache but still charged, so the
    budget always equals the number of design points a searcher asked for.
    """

    def __init__(
        self,
        workload: Workload,
        platform: Platform,
        budget: int,
        objective: str = "edp",
        workers: int = 0,
    ):
        self.workload = workload
        self.platform = platform
        self.layout = layout_for(workload)
        self.budget = budget if budget == math.inf else int(budget)
        self.objective = objective
        self.used = 0
        self.valid_count = 0
        self.best: Optional[Individual] = None
        self._cache: Dict[Genome, CostReport] = {}
        self._pool = None
        if workers and workers > 1:
            self._pool = ProcessPoolExecutor(
                max_workers=workers,
                initializer=_init_worker,
                initargs=(workload, platform, self.layout),
            )

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    @property
    def remaining(self) -> int:
        return self.budget - self.used

    @property
    def valid_fraction(self) -> float:
        return self.valid_count / self.used if self.used else 0.0

    def evaluate(self, genomes: Sequence[Sequence[int]], generation: int = 0) -> List[Individual]:
        """Evaluate as many of ``genomes`` as the budget allows, in order."""
        if self.remaining < len(genomes):
            genomes = genomes[: max(int(self.remaining), 0)]
        genomes = [tuple(int(g) for g in x) for x in genomes]
        todo = [g for g in dict.fromkeys(genomes) if g not in self._cache]
        if self._pool is not None and len(todo) > 1:
            chunk = max(1, len(todo) // (4 * self._pool._max_workers))
            reports = list(self._pool.map(_evaluate_in_worker, todo, chunksize=chunk))
        else:
            reports = [evaluate_genome(g, self.layout, self.workload, self.platform) for g in todo]
        self._cache.update(zip(todo, reports))
        out = []
        for g in genomes:
            report = self._cache[g]
            ind = Individual(g, fitness(report, self.objective), report, generation)
            self.used += 1
            self.valid_count += report.valid
            if self.best is None or rank_key(ind) < rank_key(self.best):
                self.best = ind
            out.append(ind)
        return out

    def seen(self, genome: Genome) -> bool:
        return tuple(genome) in self._cache

    def evaluate_one(self, genome: Sequence[int], generation: int = 0) -> Individual:
        if self.remaining <= 0:
            raise BudgetExhausted("evaluation budget exhausted")
        return self.evaluate([genome], generation)[0]


# ---------------------------------------------------------------------------
# convergence trace


TRACE_HEADER = ("generation", "evaluations_used", "best_edp", "mean_valid_edp", "valid_fraction")


@dataclass(frozen=True)
class TraceRow:
    generation: int
    evaluations_used: int
    best_edp: float
    mean_valid_edp: float
    valid_fraction: float


def trace_row(
    generation: int, evaluator: Evaluator, population: Sequence[Individual], batch: Sequence[Individual]
) -> TraceRow:
    best = evaluator.best
    best_edp = best.report.edp if best is not None and best.valid else math.inf
    valid = [i.report.edp for i in population if i.valid]
    mean = float(np.mean(valid)) if valid else math.nan
    frac = sum(i.valid for i in batch) / len(batch) if batch else 0.0
    return TraceRow(generation, evaluator.used, best_edp, mean, frac)


def trace_csv(rows: Sequence[TraceRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_HEADER)
    for r in rows:
        w.writerow(
            [r.generation, r.evaluations_used, repr(r.best_edp), repr(r.mean_valid_edp), repr(r.valid_fraction)]
        )
    return buf.getvalue()


@dataclass
class SearchResult:
    best: Optional[Individual]
    trace: List[TraceRow]
    evaluations: int
    valid_fraction: float
    profile: object = None  # SensitivityProfile for the ES engine
    warnings: List[str] = None

    @property
    def found_valid(self) -> bool:
        return self.best is not None and self.best.valid
