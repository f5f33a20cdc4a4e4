"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line
that is repeated in the terminal summary."""

import dataclasses
import itertools
import math
import time

import numpy as np
import pytest

from conftest import SMALL_SUITE, TOY_OPTIMUM_EDP
from loopnest_sim import effectual_macs_mc, simulate_fills
from sparsedse.baselines import BaselineConfig, run_baseline
from sparsedse.cli import main
from sparsedse.costmodel import BOUNDARIES, access_counts, evaluate
from sparsedse.evolution import EsConfig, annealing_probabilities, mutate, run
from sparsedse.genome import (
    Mechanism,
    RankFormat,
    SparseStrategySpec,
    cantor_decode,
    cantor_encode,
    decode_formats,
    decode_mapping,
    layout_for,
    random_genome,
)
from sparsedse.sensitivity import SensitivityProfile, classify, pair_term, trial_sensitivity
from sparsedse.workload import Platform, bundled, make_workload, matmul, parse_platform, parse_workload

BIG_PLATFORM = Platform("big", 64, 64, 64, 1 << 30, 1 << 32, 1e12)
DESK_SUITE = ("mm1", "mm2", "mm3", "mm4", "mm5", "mm6", "mm7", "conv1", "conv2s", "conv11")


def _load(name):
    return parse_workload(bundled(name + ".cfg"))


def _platform(name):
    return parse_platform(bundled(name + ".cfg"))


def _best_edp(result):
    return result.best.report.edp if result.found_valid else math.inf


def test_criterion_01_encoding_completeness(verdict):
    suite = [_load(n) for n in ("toy4", "mm1", "mm6", "conv1", "conv11", "conv2s")]
    start = time.perf_counter()
    failures = 0
    for i, w in enumerate(suite):
        layout = layout_for(w)
        sizes = [w.size(d) for d in layout.dim_names]
        rng = np.random.default_rng(i)
        for _ in range(10**4):
            m = decode_mapping(random_genome(layout, rng), layout)
            failures += any(math.prod(b) != s for b, s in zip(m.bounds, sizes))
    elapsed = time.perf_counter() - start
    ok = failures == 0 and elapsed < 10
    verdict(1, ok, f"{failures} product failures over 6x10^4 genomes in {elapsed:.1f}s")
    assert ok


def test_criterion_02_cantor(verdict):
    problems = 0
    for d in range(1, 5):
        canon = list("ABCD"[:d])
        codes = {}
        for perm in itertools.permutations(canon):
            c = cantor_encode(perm, canon)
            codes[c] = perm
            problems += cantor_decode(c, canon) != list(perm)
        problems += set(codes) != set(range(1, math.factorial(d) + 1))
        block = math.factorial(d - 1)
        problems += sum(codes[c][0] != canon[(c - 1) // block] for c in codes)
    mkn = cantor_encode(["M", "K", "N"], ["M", "K", "N"])
    ok = problems == 0 and mkn == 1
    verdict(2, ok, f"{problems} bijection/locality problems, encode(MKN) = {mkn}")
    assert ok


def test_criterion_03_annealing(verdict):
    p0 = annealing_probabilities(0, 10)[0]
    pend = annealing_probabilities(10, 10)[0]
    grid = [annealing_probabilities(g, 999)[0] for g in range(1000)]
    decreasing = all(a > b for a, b in zip(grid, grid[1:]))

    w = matmul("mm", 4, 8, 4, 0.5, 0.5)
    layout = layout_for(w)
    high = (0, 1, 2, 3, 4, 27, 28)
    sens = tuple(1.0 if i in high else 0.0 for i in range(layout.length))
    h, low, thr = classify(sens)
    profile = SensitivityProfile(sens, h, low, thr, (), 1, 2)
    rng = np.random.default_rng(0)
    n = 10**4
    hits = 0
    for _ in range(n):
        genome = random_genome(layout, rng)
        child = mutate(genome, profile, 0, 50, rng, layout)
        (i,) = [k for k in range(layout.length) if child[k] != genome[k]]
        hits += i in profile.high_set
    sigma = math.sqrt(n * 0.8 * 0.2)
    ok = abs(p0 - 0.8) <= 1e-12 and pend == 0 and decreasing and abs(hits - 0.8 * n) <= 3 * sigma
    verdict(3, ok, f"P_h(0)={p0!r} P_h(G)={pend} decreasing={decreasing} high fraction={hits / n:.4f}")
    assert ok


def test_criterion_04_sensitivity_formulas(verdict):
    rng = np.random.default_rng(0)
    units = [
        pair_term(1, 100.0, 3, 300.0) == 1.0,
        trial_sensitivity([1, 3], [100.0, 300.0], rng) == 1.0,
        trial_sensitivity([1, 2, 3], [5.0, 5.0, 5.0], rng) == 0.0,
        classify([0.1, 0.2, 0.9, 1.0])[0] == (2, 3),
        abs(classify([0.1, 0.2, 0.9, 1.0])[2] - 0.775) <= 1e-15,
        classify([0.0, 4.0])[2] == 3.0 and classify([0.0, 4.0])[0] == (1,),
        classify([0.5, 0.5])[0] == (),
    ]
    worst = 0.0
    for trial in range(2000):
        n = int(rng.integers(2, 40))
        values = rng.integers(1, 8, n).tolist()
        edps = rng.uniform(1e-3, 1e9, n).tolist()
        c = float(10 ** rng.uniform(-6, 6))
        a = trial_sensitivity(values, edps, np.random.default_rng(trial))
        b = trial_sensitivity(values, [e * c for e in edps], np.random.default_rng(trial))
        if a:
            worst = max(worst, abs(b - a) / a)
        elif b:
            worst = math.inf
    ok = all(units) and worst <= 1e-9
    verdict(4, ok, f"{sum(units)}/{len(units)} unit cases, worst scale drift {worst:.2e}")
    assert ok


def test_criterion_05_loop_nest_oracle(verdict):
    start = time.perf_counter()
    mismatches = checks = 0
    for k, w in enumerate(SMALL_SUITE):
        assert w.macs <= 4096
        layout = layout_for(w)
        rng = np.random.default_rng(k)
        for _ in range(40):
            mapping = decode_mapping(random_genome(layout, rng), layout)
            sim, macs = simulate_fills(mapping, w)
            counts = access_counts(mapping, w)
            mismatches += macs != counts.macs
            for b, name in enumerate(BOUNDARIES):
                for t in "PQZ":
                    checks += 1
                    mismatches += counts.get(name, t) != sim[(b, t)]
    worst = 0.0
    for k, w in enumerate(SMALL_SUITE):
        layout = layout_for(w)
        # a fully dense workload has nothing to skip and may have no rank to compress
        sparse = w.density("P") < 1 or w.density("Q") < 1
        sg = (Mechanism.NONE, Mechanism.NONE, Mechanism.SKIP_BOTH if sparse else Mechanism.NONE)
        rng = np.random.default_rng(k)
        for _ in range(100):
            mapping = decode_mapping(random_genome(layout, rng), layout)
            formats = tuple(
                decode_formats([int(RankFormat.CP)] * 5, mapping.subdims(w.tensor(t).dims)) for t in "PQZ"
            )
            report = evaluate(mapping, SparseStrategySpec(formats, sg), BIG_PLATFORM, w)
            if report.valid:
                break
        assert report.valid
        mc = effectual_macs_mc(w, 1000, np.random.default_rng(100 + k))
        worst = max(worst, abs(report.effectual_macs - mc) / mc)
    elapsed = time.perf_counter() - start
    ok = mismatches == 0 and worst <= 0.05 and elapsed < 120
    verdict(5, ok, f"{mismatches}/{checks} count mismatches, effectual MACs worst error {worst:.2%}, {elapsed:.0f}s")
    assert ok


def _sweep_workload(rng):
    if rng.random() < 0.3:
        y, r = (int(v) for v in rng.choice([1, 2, 3, 4], 2))
        return make_workload(
            "conv",
            [("K", 2), ("C", 2), ("Y", y), ("X", 2), ("R", r), ("S", 1)],
            {"P": ("C", "Y", "X"), "Q": ("K", "C", "R", "S"), "Z": ("K", "Y", "X")},
            {"P": float(rng.uniform(0.05, 1)), "Q": float(rng.uniform(0.05, 1))},
            sliding_pairs=[("Y", "R"), ("X", "S")],
        )
    dims = [int(v) for v in rng.choice([2, 3, 4, 6, 8], 3)]
    return matmul("mm", *dims, float(rng.uniform(0.05, 1)), float(rng.uniform(0.05, 1)))


def _dense(w):
    return dataclasses.replace(w, tensors=tuple(dataclasses.replace(t, density=1.0) for t in w.tensors))


def test_criterion_06_mechanism_properties(verdict):
    rng = np.random.default_rng(6)
    gates = (Mechanism.GATE_P_BY_Q, Mechanism.GATE_Q_BY_P, Mechanism.GATE_BOTH)
    skips = (Mechanism.SKIP_P_BY_Q, Mechanism.SKIP_Q_BY_P, Mechanism.SKIP_BOTH)
    points = violations = 0
    while points < 1000:
        w = _sweep_workload(rng)
        layout = layout_for(w)
        mapping = decode_mapping(random_genome(layout, rng), layout)
        formats = []
        for t in "PQZ":
            genes = [int(rng.choice([1, 2, 3]))] * 5 if t != "Z" else rng.integers(0, 4, 5).tolist()
            formats.append(decode_formats(genes, mapping.subdims(w.tensor(t).dims)))
        base_sg = [Mechanism(int(v)) for v in rng.integers(0, 7, 3)]

        def report(workload, level, mech):
            sg = list(base_sg)
            sg[level] = mech
            return evaluate(mapping, SparseStrategySpec(tuple(formats), tuple(sg)), BIG_PLATFORM, workload)

        level = int(rng.integers(0, 3))
        variants = {m: report(w, level, m) for m in Mechanism}
        dense = {m: report(_dense(w), level, m) for m in Mechanism}
        if not all(r.valid for r in itertools.chain(variants.values(), dense.values())):
            continue
        points += 1
        none = variants[Mechanism.NONE]
        violations += sum(variants[g].cycles != none.cycles for g in gates)
        violations += sum(
            variants[s].energy_pj > none.energy_pj or variants[s].cycles > none.cycles for s in skips
        )
        violations += sum(dense[m] != dense[Mechanism.NONE] for m in Mechanism)
    ok = violations == 0
    verdict(6, ok, f"{violations} violations over {points} design points")
    assert ok


def test_criterion_07_global_optimum_recovery(verdict, toy_workload, toy_platform):
    start = time.perf_counter()
    target = TOY_OPTIMUM_EDP * 1.05
    es_hits = uniform_hits = 0
    for seed in range(10):
        es = run(toy_workload, toy_platform, EsConfig(total_budget=2000, seed=seed))
        uni = run_baseline(toy_workload, toy_platform, BaselineConfig(kind="uniform", budget=2000, seed=seed))
        es_hits += _best_edp(es) <= target
        uniform_hits += _best_edp(uni) <= target
    elapsed = time.perf_counter() - start
    ok = es_hits >= 8 and uniform_hits < es_hits and elapsed < 300
    verdict(7, ok, f"within 5% of optimum: evolution {es_hits}/10, random {uniform_hits}/10, {elapsed:.0f}s")
    assert ok


def test_criterion_08_valid_fraction(verdict):
    w = _load("mm1")
    wins = {}
    for name in ("edge", "mobile", "cloud"):
        p = _platform(name)
        wins[name] = 0
        for seed in range(10):
            es = run(w, p, EsConfig(total_budget=2000, seed=seed))
            uni = run_baseline(w, p, BaselineConfig(kind="uniform", budget=2000, seed=seed))
            wins[name] += es.valid_fraction > uni.valid_fraction
    ok = all(v >= 9 for v in wins.values())
    verdict(8, ok, "seeds with higher valid fraction: " + ", ".join(f"{k} {v}/10" for k, v in wins.items()))
    assert ok


def _desk_wins(platform):
    wins = []
    for name in DESK_SUITE:
        w = _load(name)
        es = _best_edp(run(w, platform, EsConfig(total_budget=5000, seed=0)))
        rm = _best_edp(run_baseline(w, platform, BaselineConfig(kind="random_mapper", budget=5000, seed=0)))
        fm = _best_edp(run_baseline(w, platform, BaselineConfig(kind="fixed_mapping_formats", budget=5000, seed=0)))
        if es <= rm and es <= fm:
            wins.append(name)
    return wins


@pytest.mark.slow
def test_criterion_09_directional_comparison(verdict):
    # gated on the mobile platform; edge and cloud are reported alongside
    start = time.perf_counter()
    wins = {name: _desk_wins(_platform(name)) for name in ("mobile", "edge", "cloud")}
    elapsed = time.perf_counter() - start
    ok = len(wins["mobile"]) >= 8 and elapsed < 1800
    lost = [n for n in DESK_SUITE if n not in wins["mobile"]]
    others = ", ".join(f"{k} {len(v)}/10" for k, v in wins.items() if k != "mobile")
    verdict(9, ok, f"mobile: evolution best on {len(wins['mobile'])}/10 workloads (not on {', '.join(lost) or 'none'}); "
                   f"not gated: {others}; {elapsed:.0f}s")
    assert ok


def test_criterion_10_determinism(verdict, tmp_path):
    outputs = ("trace.csv", "sensitivity.json", "cost_report.json", "best_design.txt")
    runs = {}
    for tag, workers in (("a", "0"), ("b", "0"), ("c", "2"), ("d", "2")):
        out = tmp_path / tag
        code = main(["run", "--workload", "mm1", "--platform", "edge", "--budget", "1500", "--seed", "5",
                     "--workers", workers, "--out", str(out)])
        assert code == 0
        runs[tag] = [(out / f).read_bytes() for f in outputs]
    for tag, workers in (("e", "0"), ("f", "2")):
        out = tmp_path / tag
        assert main(["run", "--workload", "conv1", "--platform", "mobile", "--algo", "sage", "--budget", "800",
                     "--workers", workers, "--out", str(out)]) == 0
        runs[tag] = [(out / f).read_bytes() for f in outputs if (out / f).exists()]
    ok = runs["a"] == runs["b"] == runs["c"] == runs["d"] and runs["e"] == runs["f"]
    verdict(10, ok, "repeated and parallel runs byte-identical" if ok else "outputs differ between runs")
    assert ok
