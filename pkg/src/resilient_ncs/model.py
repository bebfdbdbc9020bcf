"""Configuration types: plants, attacks, design constants and scenarios."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import BadMode, DimensionMismatch
from .numerics import as_matrix, spectral_radius

INDEPENDENT = "independent"
MUTUALLY_EXCLUSIVE = "mutually-exclusive"
COUPLINGS = (INDEPENDENT, MUTUALLY_EXCLUSIVE)


@dataclass(frozen=True, eq=False)
class Mode:
    A: np.ndarray
    B: np.ndarray


class SwitchedPlant:
    """Per-mode ``x(k+1) = A_p x(k) + B_p u(k)``. Mode indices are 0-based."""

    def __init__(self, modes: Sequence[tuple]):
        parsed = []
        for idx, (A, B) in enumerate(modes):
            A = as_matrix(A, f"A[{idx}]")
            B = as_matrix(B, f"B[{idx}]")
            parsed.append(Mode(A, B))
        if not parsed:
            raise DimensionMismatch("a plant needs at least one mode")
        self.modes: tuple[Mode, ...] = tuple(parsed)

    @property
    def m(self) -> int:
        return len(self.modes)

    @property
    def n_x(self) -> int:
        return self.modes[0].A.shape[0]

    @property
    def n_u(self) -> int:
        return self.modes[0].B.shape[1]

    def mode(self, p: int) -> Mode:
        if not 0 <= p < self.m:
            raise BadMode(f"mode {p} outside 0..{self.m - 1}")
        return self.modes[p]

    def findings(self) -> list[str]:
        out = []
        n_x, n_u = self.n_x, self.n_u
        for idx, md in enumerate(self.modes):
            if md.A.shape != (n_x, n_x):
                out.append(f"plant.mode.{idx + 1}.A: expected {n_x}x{n_x}, got {md.A.shape}")
            if md.B.shape != (n_x, n_u):
                out.append(f"plant.mode.{idx + 1}.B: expected {n_x}x{n_u}, got {md.B.shape}")
        return out


@dataclass(frozen=True)
class AttackParameters:
    alpha_bar: float
    beta_bar: float
    gamma_bar: float
    coupling: str = INDEPENDENT

    @property
    def alpha_tilde(self) -> float:
        return self.alpha_bar * (1.0 - self.alpha_bar)

    @property
    def beta_tilde(self) -> float:
        return self.beta_bar * (1.0 - self.beta_bar)

    @property
    def chi3(self) -> float:
        """Probability that the true state is delivered (independent coupling)."""
        return (1.0 - self.alpha_bar) * (1.0 - self.beta_bar)

    def findings(self) -> list[str]:
        out = []
        for name in ("alpha_bar", "beta_bar"):
            v = getattr(self, name)
            if not (math.isfinite(v) and 0.0 <= v <= 1.0):
                out.append(f"attack.{name}: must lie in [0, 1], got {v}")
        if not (math.isfinite(self.gamma_bar) and self.gamma_bar >= 0.0):
            out.append(f"attack.gamma_bar: must be >= 0, got {self.gamma_bar}")
        if self.coupling not in COUPLINGS:
            out.append(f"attack.coupling: must be one of {COUPLINGS}, got {self.coupling!r}")
        elif self.coupling == MUTUALLY_EXCLUSIVE and self.alpha_bar + self.beta_bar > 1.0:
            out.append("attack.coupling: mutually-exclusive needs alpha_bar + beta_bar <= 1")
        return out


@dataclass(frozen=True)
class DesignParameters:
    rho_s: float
    rho_u: float
    mu: float

    @property
    def rho_s_bar(self) -> float:
        return 1.0 - self.rho_s

    @property
    def rho_u_bar(self) -> float:
        return 1.0 + self.rho_u

    def c(self, attack: AttackParameters) -> float:
        return attack.beta_bar * self.rho_u_bar / self.rho_s_bar

    def mu_bar(self, attack: AttackParameters) -> float:
        c = self.c(attack)
        return self.mu * (2.0 - attack.beta_bar - c) / (1.0 - c)

    def findings(self, attack: AttackParameters | None = None) -> list[str]:
        out = []
        if not 0.0 < self.rho_s < 1.0:
            out.append(f"design.rho_s: must lie in (0, 1), got {self.rho_s}")
        if not self.rho_u > 0.0:
            out.append(f"design.rho_u: must be > 0, got {self.rho_u}")
        if not self.mu > 1.0:
            out.append(f"design.mu: must be > 1, got {self.mu}")
        if attack is not None and 0.0 < self.rho_s < 1.0:
            c = self.c(attack)
            if c >= 1.0:
                out.append(f"design: c = beta_bar*(1+rho_u)/(1-rho_s) = {c:.6g} violates c < 1 (c >= 1)")
        return out


@dataclass(frozen=True)
class MixedParameters:
    rho_s: float
    lam: float
    mu: float
    mu1: float
    mu2: float

    def findings(self) -> list[str]:
        out = []
        if not 0.0 < self.rho_s < 1.0:
            out.append(f"mixed.rho_s: must lie in (0, 1), got {self.rho_s}")
        if not self.lam > 0.0:
            out.append(f"mixed.lambda: must be > 0, got {self.lam}")
        for name in ("mu", "mu1", "mu2"):
            v = getattr(self, name)
            if not v >= 1.0:
                out.append(f"mixed.{name}: must be >= 1, got {v}")
        return out


class GainSet:
    """One ``n_u x n_x`` feedback gain per mode."""

    def __init__(self, gains: Sequence):
        self.K: tuple[np.ndarray, ...] = tuple(
            as_matrix(np.atleast_2d(np.asarray(k, dtype=float)), f"K[{i}]") for i, k in enumerate(gains)
        )

    def __len__(self) -> int:
        return len(self.K)

    def __getitem__(self, p: int) -> np.ndarray:
        if not 0 <= p < len(self.K):
            raise BadMode(f"no gain for mode {p}")
        return self.K[p]

    def findings(self, plant: SwitchedPlant, name: str = "gains") -> list[str]:
        out = []
        if len(self.K) != plant.m:
            out.append(f"{name}: expected {plant.m} gains, got {len(self.K)}")
            return out
        for p, K in enumerate(self.K):
            if K.shape != (plant.n_u, plant.n_x):
                out.append(f"{name}[{p + 1}]: expected {plant.n_u}x{plant.n_x}, got {K.shape}")
        return out

    def schur_findings(self, plant: SwitchedPlant, name: str = "gains") -> list[str]:
        out = []
        for p, K in enumerate(self.K):
            md = plant.modes[p]
            rho = spectral_radius(md.A + md.B @ K)
            if rho >= 1.0:
                out.append(f"{name}[{p + 1}]: A+BK not Schur stable (spectral radius {rho:.6g})")
        return out


PAYLOAD_POLICIES = ("sphere", "ball", "constant")


@dataclass(frozen=True)
class SimulationSettings:
    runs: int = 100
    horizon: int = 200
    seed: int = 0
    payload: str = "sphere"
    tau_d: int | None = None
    guard_threshold: float | None = None  # defaults to gamma_bar**2


@dataclass
class Scenario:
    plant: SwitchedPlant
    attack: AttackParameters
    design: DesignParameters | None = None
    mixed: MixedParameters | None = None
    gains: GainSet | None = None
    mixed_gains: GainSet | None = None
    x0: np.ndarray | None = None
    simulation: SimulationSettings = field(default_factory=SimulationSettings)
    name: str = "scenario"

    @property
    def initial_state(self) -> np.ndarray:
        if self.x0 is None:
            return np.ones(self.plant.n_x)
        return np.asarray(self.x0, dtype=float).ravel()

    def with_gains(self, gains: GainSet) -> "Scenario":
        return replace(self, gains=gains)

    def with_attack(self, **changes) -> "Scenario":
        return replace(self, attack=replace(self.attack, **changes))


def augmented_initial_state(x0) -> np.ndarray:
    """``[x(0); x(0)]``: the channel memory starts synchronized."""
    x0 = np.asarray(x0, dtype=float).ravel()
    return np.concatenate([x0, x0])


def validate(s: Scenario) -> list[str]:
    """All violated invariants as human-readable findings (empty when clean)."""
    out = list(s.plant.findings())
    out += s.attack.findings()
    if s.design is not None:
        out += s.design.findings(s.attack)
    if s.mixed is not None:
        out += s.mixed.findings()
    dims_ok = not s.plant.findings()
    for name, gs in (("gains", s.gains), ("mixed_gains", s.mixed_gains)):
        if gs is None:
            continue
        gf = gs.findings(s.plant, name)
        out += gf
        if dims_ok and not gf:
            out += gs.schur_findings(s.plant, name)
    if s.x0 is not None:
        x0 = np.asarray(s.x0, dtype=float).ravel()
        if x0.size != s.plant.n_x:
            out.append(f"simulation.x0: expected length {s.plant.n_x}, got {x0.size}")
        elif not np.all(np.isfinite(x0)):
            out.append("simulation.x0: non-finite entries")
    sim = s.simulation
    if sim.horizon < 1:
        out.append(f"simulation.horizon: must be >= 1, got {sim.horizon}")
    if sim.runs < 1:
        out.append(f"simulation.runs: must be >= 1, got {sim.runs}")
    if sim.payload not in PAYLOAD_POLICIES:
        out.append(f"simulation.payload: must be one of {PAYLOAD_POLICIES}, got {sim.payload!r}")
    if sim.tau_d is not None and sim.tau_d < 1:
        out.append(f"simulation.tau_d: must be >= 1, got {sim.tau_d}")
    return out
