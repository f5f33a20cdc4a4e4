"""Joint mapping and sparse-strategy search for sparse tensor accelerators."""

from .costmodel import CostReport, check_validity, evaluate, fitness, footprint
from .evolution import EsConfig, run
from .genome import decode, encode, layout_for, random_genome
from .workload import Platform, Workload, parse_platform, parse_workload

__all__ = [
    "CostReport",
    "EsConfig",
    "Platform",
    "Workload",
    "check_validity",
    "decode",
    "encode",
    "evaluate",
    "fitness",
    "footprint",
    "layout_for",
    "parse_platform",
    "parse_workload",
    "random_genome",
    "run",
]
