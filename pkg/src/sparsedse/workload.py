"""Workload and platform descriptions.

Both are read from a flat ``key = value`` text format. Top-level keys come
first; named sections such as ``[tensor P]`` or ``[energy]`` group the keys
that follow them. ``#`` starts a comment. Lists are comma separated.

Workload example::

    name = mm1
    dims = M:124, K:124, N:124
    word_bits = 8

    [tensor P]
    dims = M, K
    density = 0.785

    [tensor Q]
    dims = K, N
    density = 0.785

    [tensor Z]
    dims = M, N

Convolutions add ``sliding = Y:R, X:S`` (output-dim:window-dim, stride 1).

Platform example::

    name = edge
    pe_rows = 16
    pe_cols = 16
    macs_per_pe = 1
    pe_buffer_bytes = 1KB
    glb_bytes = 128KB
    dram_bandwidth_bytes_per_sec = 16MB/s

    [energy]
    dram_read = 100
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

TENSOR_NAMES = ("P", "Q", "Z")

# Per-word access energies in pJ for an 8-bit word.
DEFAULT_ENERGY_PJ = {
    "dram_read": 100.0,
    "dram_write": 100.0,
    "glb_read": 6.0,
    "glb_write": 6.0,
    "pebuf_read": 1.2,
    "pebuf_write": 1.2,
    "mac_op": 0.5,
}
DEFAULT_CLOCK_HZ = 1e9

_UNITS = {
    "": 1,
    "B": 1,
    "KB": 1024,
    "K": 1024,
    "MB": 1024**2,
    "M": 1024**2,
    "GB": 1024**3,
    "G": 1024**3,
}


class ConfigError(ValueError):
    """Raised for malformed or semantically inconsistent config files."""


# ---------------------------------------------------------------------------
# integer helpers


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    if n < 4:
        return True
    if n % 2 == 0:
        return False
    for p in range(3, math.isqrt(n) + 1, 2):
        if n % p == 0:
            return False
    return True


def pad_prime(n: int) -> int:
    """Replace a prime larger than 7 by the next composite number.

    Primes up to 7 stay as they are: they can still be handed to one mapping
    level as a single factor.
    """
    if n < 1:
        raise ValueError(f"dimension size must be >= 1, got {n}")
    if n <= 7 or not is_prime(n):
        return n
    m = n + 1
    while is_prime(m):
        m += 1
    return m


def factorize(n: int) -> List[int]:
    """Prime factors of ``n`` in ascending order, with multiplicity."""
    if n < 1:
        raise ValueError(f"cannot factorize {n}")
    factors = []
    p = 2
    while p * p <= n:
        while n % p == 0:
            factors.append(p)
            n //= p
        p += 1
    if n > 1:
        factors.append(n)
    return factors


# ---------------------------------------------------------------------------
# domain types


@dataclass(frozen=True)
class TensorSpec:
    name: str
    dims: Tuple[str, ...]
    density: float = 1.0


@dataclass(frozen=True)
class Workload:
    """A tensor contraction ``Z = P x Q`` over named dimensions.

    ``dims`` holds the padded sizes; ``padding`` records every
    ``(dim, original, padded)`` substitution made while loading.
    """

    name: str
    dims: Tuple[Tuple[str, int], ...]
    tensors: Tuple[TensorSpec, ...]
    reduction_dims: Tuple[str, ...]
    word_bits: int = 8
    sliding_pairs: Tuple[Tuple[str, str], ...] = ()
    padding: Tuple[Tuple[str, int, int], ...] = ()

    @cached_property
    def dim_names(self) -> Tuple[str, ...]:
        return tuple(d for d, _ in self.dims)

    @cached_property
    def sizes(self) -> Tuple[int, ...]:
        return tuple(s for _, s in self.dims)

    @cached_property
    def dim_index(self) -> Dict[str, int]:
        return {d: i for i, d in enumerate(self.dim_names)}

    @property
    def d(self) -> int:
        return len(self.dims)

    def size(self, dim: str) -> int:
        return self.sizes[self.dim_index[dim]]

    def tensor(self, name: str) -> TensorSpec:
        for t in self.tensors:
            if t.name == name:
                return t
        raise KeyError(name)

    def density(self, name: str) -> float:
        # output footprints are always modelled dense
        if name == "Z":
            return 1.0
        return self.tensor(name).density

    def halo(self, name: str) -> Tuple[Tuple[str, str], ...]:
        """Sliding pairs ``(out, window)`` that widen an input operand: the
        operand is indexed by ``out + window`` along ``out``."""
        if name == "Z":
            return ()
        dims = self.tensor(name).dims
        return tuple((o, w) for o, w in self.sliding_pairs if o in dims and w not in dims)

    @cached_property
    def factors(self) -> Tuple[Tuple[int, ...], ...]:
        return tuple(tuple(factorize(s)) for s in self.sizes)

    @property
    def macs(self) -> int:
        return math.prod(self.sizes)

    @property
    def padded(self) -> bool:
        return bool(self.padding)


@dataclass(frozen=True)
class Platform:
    name: str
    pe_rows: int
    pe_cols: int
    macs_per_pe: int
    pe_buffer_bytes: int
    glb_bytes: int
    dram_bandwidth_bytes_per_sec: float
    clock_hz: float = DEFAULT_CLOCK_HZ
    energy_pj: Tuple[Tuple[str, float], ...] = field(
        default_factory=lambda: tuple(DEFAULT_ENERGY_PJ.items())
    )

    def __post_init__(self):
        for key in ("pe_rows", "pe_cols", "macs_per_pe", "pe_buffer_bytes", "glb_bytes"):
            if getattr(self, key) <= 0:
                raise ConfigError(f"platform {self.name}: {key} must be positive")
        if self.dram_bandwidth_bytes_per_sec <= 0 or self.clock_hz <= 0:
            raise ConfigError(f"platform {self.name}: bandwidth and clock must be positive")
        energy = dict(self.energy_pj)
        missing = set(DEFAULT_ENERGY_PJ) - set(energy)
        if missing:
            raise ConfigError(f"platform {self.name}: missing energies {sorted(missing)}")
        if any(v <= 0 for v in energy.values()):
            raise ConfigError(f"platform {self.name}: energies must be positive")

    @property
    def num_pes(self) -> int:
        return self.pe_rows * self.pe_cols

    @cached_property
    def energy(self) -> Dict[str, float]:
        return dict(self.energy_pj)

    @property
    def dram_bits_per_cycle(self) -> float:
        return 8.0 * self.dram_bandwidth_bytes_per_sec / self.clock_hz


# ---------------------------------------------------------------------------
# construction and validation


def make_workload(
    name: str,
    dims: Sequence[Tuple[str, int]],
    tensors: Mapping[str, Sequence[str]],
    densities: Optional[Mapping[str, float]] = None,
    word_bits: int = 8,
    sliding_pairs: Iterable[Tuple[str, str]] = (),
    reduction_dims: Optional[Iterable[str]] = None,
) -> Workload:
    """Validate a workload description and pad large prime dimensions."""
    densities = dict(densities or {})
    names = [d for d, _ in dims]
    if len(set(names)) != len(names):
        raise ConfigError(f"duplicate dimension names in {names}")
    if not names:
        raise ConfigError("workload declares no dimensions")
    if set(tensors) != set(TENSOR_NAMES):
        raise ConfigError(f"workload needs exactly tensors P, Q, Z; got {sorted(tensors)}")
    if word_bits < 1:
        raise ConfigError("word_bits must be >= 1")

    padded_dims = []
    padding = []
    for d, s in dims:
        if int(s) != s or s < 1:
            raise ConfigError(f"dimension {d} has invalid size {s}")
        p = pad_prime(int(s))
        if p != s:
            padding.append((d, int(s), p))
        padded_dims.append((d, p))

    specs = []
    for t in TENSOR_NAMES:
        tdims = tuple(tensors[t])
        if not tdims:
            raise ConfigError(f"tensor {t} has no dimensions")
        unknown = [d for d in tdims if d not in names]
        if unknown:
            raise ConfigError(f"tensor {t} references unknown dimension(s) {unknown}")
        if len(set(tdims)) != len(tdims):
            raise ConfigError(f"tensor {t} repeats a dimension")
        rho = float(densities.get(t, 1.0))
        if not 0.0 < rho <= 1.0:
            raise ConfigError(f"tensor {t} density {rho} outside (0, 1]")
        specs.append(TensorSpec(t, tdims, rho))

    inputs = set(specs[0].dims) | set(specs[1].dims)
    derived = tuple(d for d in names if d in inputs and d not in specs[2].dims)
    if reduction_dims is not None and set(reduction_dims) != set(derived):
        raise ConfigError(
            f"declared reduction dims {sorted(reduction_dims)} do not match derived {sorted(derived)}"
        )
    if not set(specs[2].dims) <= inputs:
        raise ConfigError("output tensor Z indexes a dimension absent from both inputs")

    pairs = tuple((o, w) for o, w in sliding_pairs)
    for o, w in pairs:
        if o not in names or w not in names:
            raise ConfigError(f"sliding pair {o}:{w} references unknown dimension")

    return Workload(
        name=name,
        dims=tuple(padded_dims),
        tensors=tuple(specs),
        reduction_dims=derived,
        word_bits=int(word_bits),
        sliding_pairs=pairs,
        padding=tuple(padding),
    )


def matmul(name: str, m: int, k: int, n: int, density_p: float = 1.0, density_q: float = 1.0) -> Workload:
    """Shorthand for ``Z[M,N] = P[M,K] x Q[K,N]``."""
    return make_workload(
        name,
        [("M", m), ("K", k), ("N", n)],
        {"P": ("M", "K"), "Q": ("K", "N"), "Z": ("M", "N")},
        {"P": density_p, "Q": density_q},
    )


# ---------------------------------------------------------------------------
# text format


_SECTION = re.compile(r"^\[\s*([A-Za-z_]+)(?:\s+([A-Za-z0-9_]+))?\s*\]$")


def _read_sections(text: str, source: str) -> Dict[Tuple[str, ...], Dict[str, str]]:
    sections: Dict[Tuple[str, ...], Dict[str, str]] = {(): {}}
    current: Tuple[str, ...] = ()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _SECTION.match(line)
        if m:
            current = tuple(x for x in m.groups() if x)
            if current in sections:
                raise ConfigError(f"{source}:{lineno}: duplicate section [{' '.join(current)}]")
            sections[current] = {}
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in sections[current]:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        sections[current][key] = value
    return sections


def _split_list(value: str) -> List[str]:
    return [x.strip() for x in value.split(",") if x.strip()]


def _to_int(value: str, what: str) -> int:
    try:
        f = float(value)
    except ValueError:
        raise ConfigError(f"{what}: not a number: {value!r}") from None
    if f != int(f):
        raise ConfigError(f"{what}: expected an integer, got {value!r}")
    return int(f)


def _to_float(value: str, what: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"{what}: not a number: {value!r}") from None


def parse_quantity(value: str, what: str = "value") -> float:
    """Parse ``128KB``, ``16 MB/s``, ``1e9`` and the like (binary units)."""
    m = re.fullmatch(r"\s*([0-9.eE+-]+)\s*([KMG]?B?|[KMG])\s*(/s)?\s*", value, re.IGNORECASE)
    if not m:
        raise ConfigError(f"{what}: cannot parse quantity {value!r}")
    number = _to_float(m.group(1), what)
    unit = m.group(2).upper()
    return number * _UNITS[unit]


def parse_workload_text(text: str, source: str = "<string>") -> Workload:
    sections = _read_sections(text, source)
    top = sections[()]
    if "dims" not in top:
        raise ConfigError(f"{source}: missing 'dims'")
    dims = []
    for item in _split_list(top["dims"]):
        if ":" not in item:
            raise ConfigError(f"{source}: dimension entry {item!r} should be NAME:SIZE")
        name, size = (s.strip() for s in item.split(":", 1))
        dims.append((name, _to_int(size, f"{source}: dim {name}")))

    tensors: Dict[str, Tuple[str, ...]] = {}
    densities: Dict[str, float] = {}
    for key, body in sections.items():
        if not key:
            continue
        if key[0] != "tensor" or len(key) != 2:
            raise ConfigError(f"{source}: unknown section [{' '.join(key)}]")
        tname = key[1]
        if "dims" not in body:
            raise ConfigError(f"{source}: tensor {tname} lacks 'dims'")
        tensors[tname] = tuple(_split_list(body["dims"]))
        if "density" in body:
            densities[tname] = _to_float(body["density"], f"{source}: density of {tname}")
        extra = set(body) - {"dims", "density"}
        if extra:
            raise ConfigError(f"{source}: unknown keys in [tensor {tname}]: {sorted(extra)}")

    sliding = []
    for item in _split_list(top.get("sliding", "")):
        if ":" not in item:
            raise ConfigError(f"{source}: sliding entry {item!r} should be OUT:WINDOW")
        o, w = (s.strip() for s in item.split(":", 1))
        sliding.append((o, w))

    reduction = _split_list(top["reduction"]) if "reduction" in top else None
    extra = set(top) - {"name", "dims", "word_bits", "sliding", "reduction"}
    if extra:
        raise ConfigError(f"{source}: unknown keys {sorted(extra)}")
    return make_workload(
        top.get("name", Path(source).stem),
        dims,
        tensors,
        densities,
        word_bits=_to_int(top.get("word_bits", "8"), f"{source}: word_bits"),
        sliding_pairs=sliding,
        reduction_dims=reduction,
    )


def parse_workload(path) -> Workload:
    path = Path(path)
    return parse_workload_text(path.read_text(encoding="utf-8"), str(path))


def parse_platform_text(text: str, source: str = "<string>") -> Platform:
    sections = _read_sections(text, source)
    top = sections[()]
    required = (
        "pe_rows",
        "pe_cols",
        "macs_per_pe",
        "pe_buffer_bytes",
        "glb_bytes",
        "dram_bandwidth_bytes_per_sec",
    )
    missing = [k for k in required if k not in top]
    if missing:
        raise ConfigError(f"{source}: missing keys {missing}")
    extra = set(top) - set(required) - {"name", "clock_hz"}
    if extra:
        raise ConfigError(f"{source}: unknown keys {sorted(extra)}")
    energy = dict(DEFAULT_ENERGY_PJ)
    for key, body in sections.items():
        if not key:
            continue
        if key != ("energy",):
            raise ConfigError(f"{source}: unknown section [{' '.join(key)}]")
        for k, v in body.items():
            if k not in DEFAULT_ENERGY_PJ:
                raise ConfigError(f"{source}: unknown energy key {k!r}")
            energy[k] = _to_float(v, f"{source}: energy {k}")

    def qty_int(k):
        v = parse_quantity(top[k], f"{source}: {k}")
        if v != int(v):
            raise ConfigError(f"{source}: {k} must be a whole number")
        return int(v)

    return Platform(
        name=top.get("name", Path(source).stem),
        pe_rows=qty_int("pe_rows"),
        pe_cols=qty_int("pe_cols"),
        macs_per_pe=qty_int("macs_per_pe"),
        pe_buffer_bytes=qty_int("pe_buffer_bytes"),
        glb_bytes=qty_int("glb_bytes"),
        dram_bandwidth_bytes_per_sec=parse_quantity(
            top["dram_bandwidth_bytes_per_sec"], f"{source}: dram_bandwidth_bytes_per_sec"
        ),
        clock_hz=_to_float(top.get("clock_hz", str(DEFAULT_CLOCK_HZ)), f"{source}: clock_hz"),
        energy_pj=tuple(energy.items()),
    )


def parse_platform(path) -> Platform:
    path = Path(path)
    return parse_platform_text(path.read_text(encoding="utf-8"), str(path))


def bundled(name: str) -> Path:
    """Path of a config file shipped in ``sparsedse/data``."""
    return Path(__file__).parent / "data" / name
