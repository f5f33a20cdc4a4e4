import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from sparsedse.oracle import enumerate_space  # noqa: E402
from sparsedse.workload import bundled, make_workload, matmul, parse_platform, parse_workload  # noqa: E402

# Frozen by an exhaustive run of the oracle over all 8283 distinct mappings of
# the 4x4x4 toy workload on the toy platform (see test_oracle for the checks
# that pin the oracle itself).
TOY_OPTIMUM_EDP = 265662.7999999999
TOY_OPTIMUM_GENOME = "1,1,1,1,1|1,1,3,5,3,5|0,0,0,0,2|0,0,0,0,2|0,0,0,0,0|6,6,6"


_VERDICTS = []


@pytest.fixture
def verdict():
    """Record and print one pass/fail line per acceptance criterion."""

    def record(number, ok, detail):
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        _VERDICTS.append((number, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_VERDICTS):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def toy_workload():
    return parse_workload(bundled("toy4.cfg"))


@pytest.fixture(scope="session")
def toy_platform():
    return parse_platform(bundled("toy.cfg"))


@pytest.fixture(scope="session")
def platforms():
    return {name: parse_platform(bundled(name + ".cfg")) for name in ("edge", "mobile", "cloud")}


@pytest.fixture(scope="session")
def toy_enumeration(toy_workload, toy_platform):
    return enumerate_space(toy_workload, toy_platform, "edp")


def small_conv(name="conv_s", k=2, c=2, y=4, x=2, r=3, s=2, dp=0.5, dq=0.5):
    return make_workload(
        name,
        [("K", k), ("C", c), ("Y", y), ("X", x), ("R", r), ("S", s)],
        {"P": ("C", "Y", "X"), "Q": ("K", "C", "R", "S"), "Z": ("K", "Y", "X")},
        {"P": dp, "Q": dq},
        sliding_pairs=[("Y", "R"), ("X", "S")],
    )


# workloads with at most 4096 MACs used by the loop-nest cross-checks
SMALL_SUITE = (
    matmul("mm_4x4x4", 4, 4, 4, 0.5, 0.5),
    matmul("mm_2x8x4", 2, 8, 4, 0.3, 0.7),
    matmul("mm_1x1x1", 1, 1, 1),
    matmul("mm_16x16x16", 16, 16, 16, 0.2, 0.4),
    small_conv(),
    small_conv("conv_pointwise", k=4, c=4, y=4, x=4, r=1, s=1),
)
