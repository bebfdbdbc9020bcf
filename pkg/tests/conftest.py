from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

from resilient_ncs.model import (AttackParameters, DesignParameters, GainSet, MixedParameters,
                                 SwitchedPlant)

ROOT = Path(__file__).resolve().parents[1]
SCENARIOS = ROOT / "scenarios"

EX1 = SwitchedPlant([
    ([[0.88, 0.23], [0.84, -0.47]], [[-0.77, -0.33], [-0.31, 0.50]]),
    ([[0.99, -0.08], [-0.39, -0.33]], [[0.47, 0.31], [0.60, -0.55]]),
])
EX1_REFERENCE_GAINS = GainSet([[[0.7848, 0.0864], [0.2825, 0.3376]],
                             [[-1.6734, 1.9332], [0.0410, 0.1545]]])
EX2 = SwitchedPlant([
    ([[-0.35, 0.70], [0.92, 0.56]], [[0.48, 0.51], [-0.79, 0.06]]),
    ([[0.96, 0.33], [0.36, -0.34]], [[-0.50, -0.96], [0.72, 0.51]]),
])
EX2_GAINS = GainSet([[[0.9854, 0.2560], [0.5152, -2.4460]],
                     [[-1.6440, 1.9572], [1.6131, -0.8412]]])
EX3 = SwitchedPlant([
    ([[0.7152, 0.5893], [0.0051, 0.7392]], [[0.0155], [0.0044]]),
    ([[0.8909, 0.2549], [-0.0003, 0.9233]], [[0.0186], [0.0113]]),
])
EX3_GAINS = GainSet([[[-2.4502, -1.3115]], [[-4.3778, -2.5042]]])

ATTACK = AttackParameters(0.13, 0.13, 0.13)
DESIGN1 = DesignParameters(0.15, 0.3, 1.1)
DESIGN2 = DesignParameters(0.1, 1.0, 1.1)
DESIGN3 = DesignParameters(0.1, 0.4, 1.1)
MIXED2 = MixedParameters(0.1, 1.0, 1.05, 1.1, 1.7)


def random_instance(rng: np.random.Generator, n: int = 2, nu: int = 2, m: int = 2, radius: float = 0.8):
    """Plant and gains with every ``A_p + B_p K_p`` Schur with spectral radius ``radius``."""
    modes, gains = [], []
    for _ in range(m):
        A = rng.normal(size=(n, n))
        B = rng.normal(size=(n, nu))
        K = rng.normal(size=(nu, n))
        # (sA) + B(sK) = s(A + BK) sets the closed-loop spectral radius
        scale = radius / max(abs(np.linalg.eigvals(A + B @ K)))
        modes.append((A * scale, B))
        gains.append(K * scale)
    return SwitchedPlant(modes), GainSet(gains)


@pytest.fixture(scope="session")
def ex3_certificate():
    from resilient_ncs.analysis import analyze
    return analyze(EX3, EX3_GAINS, ATTACK, DESIGN3)


@pytest.fixture(scope="session")
def ex1_synthesis():
    from resilient_ncs.synthesis import synthesize
    return synthesize(EX1, ATTACK, DESIGN1)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.RESULTS, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
