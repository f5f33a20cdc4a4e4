"""Monte-Carlo estimate of how strongly each gene moves the EDP.

For one gene and one trial, every other gene is frozen to a random
background genome, the gene is swept over sampled values, and the relative
EDP change per unit of gene distance is averaged over random value pairs.
The trial results are averaged, and genes well above the spread of all
sensitivities are marked as high-sensitivity.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .genome import GenomeLayout, random_genome
from .search import Evaluator
from .workload import Platform, Workload

DEFAULT_TRIALS = 5
DEFAULT_SAMPLES = 50
# background draws tried per trial before settling for an invalid one
BASE_ATTEMPTS = 20
_BASE_KEY = 1 << 20  # spawn-key slot reserved for background genomes


def pair_term(v1: int, e1: float, v2: int, e2: float) -> float:
    """Relative EDP change per unit gene distance for one value pair."""
    return abs(e1 - e2) / (abs(v1 - v2) * min(e1, e2))


def trial_sensitivity(values: Sequence[int], edps: Sequence[float], rng: np.random.Generator) -> float:
    """One trial's estimate from the valid samples ``(values[i], edps[i])``.

    N pairs of distinct values are drawn with replacement, where N is the
    number of valid samples; fewer than two samples, or a single distinct
    value, give 0.
    """
    n = len(values)
    if n < 2 or len(set(values)) < 2:
        return 0.0
    values = np.asarray(values)
    edps = np.asarray(edps, dtype=float)
    total = 0.0
    drawn = 0
    while drawn < n:
        i, j = rng.integers(n, size=2)
        if values[i] == values[j]:
            continue
        total += pair_term(values[i], edps[i], values[j], edps[j])
        drawn += 1
    return total / n


def classify(sens: Sequence[float]) -> Tuple[Tuple[int, ...], Tuple[int, ...], float]:
    """Split genes at three quarters of the way from the lowest to the highest value."""
    s = np.asarray(sens, dtype=float)
    lo, hi = float(s.min()), float(s.max())
    threshold = 0.75 * (hi - lo) + lo
    high = tuple(int(i) for i in np.flatnonzero(s > threshold))
    low = tuple(int(i) for i in np.flatnonzero(~(s > threshold)))
    return high, low, threshold


@dataclass(frozen=True)
class SensitivityProfile:
    sensitivities: Tuple[float, ...]
    high_set: Tuple[int, ...]
    low_set: Tuple[int, ...]
    threshold: float
    valid_low_combos: Tuple[Tuple[int, ...], ...]  # values of low_set genes, in low_set order
    trials: int
    samples: int
    evaluations: int = 0

    def to_dict(self, layout: Optional[GenomeLayout] = None) -> dict:
        genes = []
        high = set(self.high_set)
        for i, s in enumerate(self.sensitivities):
            row = {"gene": i, "sensitivity": s, "class": "high" if i in high else "low"}
            if layout is not None:
                row["segment"] = layout.segment_of(i)
            genes.append(row)
        return {
            "trials": self.trials,
            "samples": self.samples,
            "threshold": self.threshold,
            "evaluations": self.evaluations,
            "high_set": list(self.high_set),
            "valid_low_combos": len(self.valid_low_combos),
            "genes": genes,
        }

    def to_json(self, layout: Optional[GenomeLayout] = None) -> str:
        return json.dumps(self.to_dict(layout), indent=2, sort_keys=True) + "\n"


def _seed(master: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(master, spawn_key=key))


def _sweep(gene, base, layout, samples, rng) -> List[Tuple[int, ...]]:
    lo, hi = layout.gene_ranges[gene]
    values = rng.integers(lo, hi + 1, size=samples)
    out = []
    for v in values:
        g = list(base)
        g[gene] = int(v)
        out.append(tuple(g))
    return out


def gene_sensitivity(
    gene: int,
    layout: GenomeLayout,
    workload: Workload,
    platform: Platform,
    rng: np.random.Generator,
    trials: int = DEFAULT_TRIALS,
    samples: int = DEFAULT_SAMPLES,
    evaluator: Optional[Evaluator] = None,
) -> float:
    """Sensitivity of one gene, each trial on a fresh random background."""
    if samples < 2 or trials < 1:
        raise ValueError("need samples >= 2 and trials >= 1")
    ev = evaluator or Evaluator(workload, platform, budget=math.inf)
    total = 0.0
    for _ in range(trials):
        base = random_genome(layout, rng)
        inds = ev.evaluate(_sweep(gene, base, layout, samples, rng))
        valid = [(i.genome[gene], i.report.edp) for i in inds if i.valid]
        total += trial_sensitivity([v for v, _ in valid], [e for _, e in valid], rng)
    return total / trials


def calibrate(
    layout: GenomeLayout,
    workload: Workload,
    platform: Platform,
    rng: np.random.Generator,
    trials: int = DEFAULT_TRIALS,
    samples: int = DEFAULT_SAMPLES,
    evaluator: Optional[Evaluator] = None,
    max_evaluations: Optional[int] = None,
) -> SensitivityProfile:
    """Estimate every gene's sensitivity and classify the genes.

    All genes of a trial share one background genome (valid if one turns up
    within a few draws). Random streams are derived from a master seed plus
    the (gene, trial) pair, so the result does not depend on evaluation
    order. With ``max_evaluations`` the calibration stops early; genes not
    reached in a trial contribute 0 for it.
    """
    if samples < 2 or trials < 1:
        raise ValueError("need samples >= 2 and trials >= 1")
    ev = evaluator or Evaluator(workload, platform, budget=math.inf)
    start = ev.used
    limit = math.inf if max_evaluations is None else max_evaluations

    def room() -> float:
        return min(ev.remaining, limit - (ev.used - start))

    master = int(rng.integers(2**63))
    n = layout.length
    totals = np.zeros(n)
    valid_genomes = []
    for t in range(trials):
        base_rng = _seed(master, _BASE_KEY, t)
        base = None
        for _ in range(BASE_ATTEMPTS):
            if room() <= 0:
                break
            cand = random_genome(layout, base_rng)
            ind = ev.evaluate([cand])[0]
            base = cand
            if ind.valid:
                valid_genomes.append(cand)
                break
        if base is None:
            break
        for gene in range(n):
            grng = _seed(master, gene, t)
            sweep = _sweep(gene, base, layout, samples, grng)
            distinct = list(dict.fromkeys(sweep))
            if room() < len(distinct):
                break
            inds = dict((i.genome, i) for i in ev.evaluate(distinct))
            valid = [(g[gene], inds[g].report.edp) for g in sweep if inds[g].valid]
            valid_genomes.extend(g for g in distinct if inds[g].valid)
            totals[gene] += trial_sensitivity([v for v, _ in valid], [e for _, e in valid], grng)
    sens = totals / trials
    high, low, threshold = classify(sens)
    combos = sorted({tuple(g[i] for i in low) for g in valid_genomes})
    return SensitivityProfile(
        sensitivities=tuple(float(x) for x in sens),
        high_set=high,
        low_set=low,
        threshold=threshold,
        valid_low_combos=tuple(combos),
        trials=trials,
        samples=samples,
        evaluations=ev.used - start,
    )
