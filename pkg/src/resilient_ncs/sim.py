"""Seeded simulation of the attacked loop and Monte Carlo aggregation.

Random stream layout: run ``i`` of seed ``s`` owns the generator
``default_rng(SeedSequence(s, spawn_key=(i,)))`` and draws, in this order,

    u = random((H, 2))            channel uniforms per step
    z = standard_normal((H, n_x)) payload directions per step
    r = random(H)                 payload radii per step (ball policy)

Every policy draws the full layout, so switching policies never shifts the
channel bits. Under independent coupling ``alpha = u[:, 0] < alpha_bar`` and
``beta = u[:, 1] < beta_bar``. Under mutually-exclusive coupling only ``u[:, 0]``
is used: ``alpha`` below ``alpha_bar``, ``beta`` in the next ``beta_bar`` slice.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .analysis import AnalysisCertificate, envelope_curve, security_metrics
from .errors import DimensionMismatch, PreconditionFailed
from .model import (MUTUALLY_EXCLUSIVE, PAYLOAD_POLICIES, AttackParameters, GainSet, Scenario,
                    SwitchedPlant, augmented_initial_state)

TIME = "time"
MIXED = "mixed"
LAWS = (TIME, MIXED)
S1 = "S1"
S2 = "S2"


@dataclass(frozen=True)
class AttackTrace:
    alpha: np.ndarray
    beta: np.ndarray
    payload: np.ndarray
    seed: int
    run_index: int
    policy: str

    @property
    def horizon(self) -> int:
        return self.alpha.size


def sample_attack_trace(attack: AttackParameters, n_x: int, horizon: int, seed: int,
                        run_index: int = 0, payload: str = "sphere") -> AttackTrace:
    if horizon < 1:
        raise PreconditionFailed("horizon must be >= 1")
    if payload not in PAYLOAD_POLICIES:
        raise PreconditionFailed(f"payload must be one of {PAYLOAD_POLICIES}")
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(run_index,)))
    u = rng.random((horizon, 2))
    z = rng.standard_normal((horizon, n_x))
    r = rng.random(horizon)
    ab, bb = attack.alpha_bar, attack.beta_bar
    if attack.coupling == MUTUALLY_EXCLUSIVE:
        alpha = u[:, 0] < ab
        beta = (u[:, 0] >= ab) & (u[:, 0] < ab + bb)
    else:
        alpha = u[:, 0] < ab
        beta = u[:, 1] < bb
    g = attack.gamma_bar
    if payload == "constant":
        direction = np.ones((horizon, n_x)) / math.sqrt(n_x)
    else:
        norms = np.linalg.norm(z, axis=1, keepdims=True)
        norms[norms == 0.0] = 1.0
        direction = z / norms
    scale = g * (r ** (1.0 / n_x))[:, None] if payload == "ball" else g
    return AttackTrace(alpha.astype(np.int8), beta.astype(np.int8), direction * scale,
                       seed, run_index, payload)


@dataclass
class Trace:
    """One run. ``x`` and ``xbar_prev`` have ``H + 1`` rows, the rest ``H``.

    ``xbar_prev[k]`` is the controller's copy before step ``k`` so that
    ``x_tilde(k) = [x[k]; xbar_prev[k]]``; ``xbar_prev[0] = x(0)``.
    """

    x: np.ndarray
    xbar_prev: np.ndarray
    u: np.ndarray
    sigma: np.ndarray
    sigma_bar: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    strategy: list[str]

    @property
    def x_tilde(self) -> np.ndarray:
        return np.hstack([self.x, self.xbar_prev])

    @property
    def xbar(self) -> np.ndarray:
        return self.xbar_prev[1:]


def round_robin(m: int, tau_d: int, horizon: int) -> np.ndarray:
    """Mode ``(k // tau_d) mod m`` for each step, starting in mode 1."""
    return (np.arange(horizon) // tau_d) % m


def _check_dims(plant: SwitchedPlant, gains: GainSet, x0: np.ndarray, trace: AttackTrace) -> None:
    bad = gains.findings(plant)
    if bad:
        raise DimensionMismatch("; ".join(bad))
    if x0.size != plant.n_x or trace.payload.shape[1] != plant.n_x:
        raise DimensionMismatch("initial state and payload must have n_x entries")


def run_time_switching(plant: SwitchedPlant, gains: GainSet, tau_d: int, trace: AttackTrace,
                       x0, schedule: np.ndarray | None = None) -> Trace:
    """Held-input loop ``u(k) = K_{sigma_bar(k)} x_bar(k)`` under a dwell-time schedule."""
    if tau_d < 1:
        raise PreconditionFailed("tau_d must be >= 1")
    x0 = np.asarray(x0, dtype=float).ravel()
    _check_dims(plant, gains, x0, trace)
    H, n = trace.horizon, plant.n_x
    sigma = round_robin(plant.m, tau_d, H) if schedule is None else np.asarray(schedule, int)[:H]
    if sigma.size != H:
        raise DimensionMismatch("schedule shorter than the horizon")
    x = np.empty((H + 1, n))
    xb = np.empty((H + 1, n))
    u = np.empty((H, plant.n_u))
    sb = np.empty(H, dtype=int)
    x[0] = xb[0] = x0
    held = int(sigma[0])
    for k in range(H):
        a, b = int(trace.alpha[k]), int(trace.beta[k])
        xb[k + 1] = (1 - a) * (1 - b) * x[k] + b * xb[k] + a * (1 - b) * trace.payload[k]
        if not b:
            held = int(sigma[k])
        sb[k] = held
        u[k] = gains[held] @ xb[k + 1]
        md = plant.modes[sigma[k]]
        x[k + 1] = md.A @ x[k] + md.B @ u[k]
    return Trace(x, xb, u, sigma, sb, trace.alpha, trace.beta, [TIME] * H)


@dataclass(frozen=True)
class MixedLaw:
    """The runtime pieces of a mixed-switching design."""

    gains: GainSet
    Q: tuple[np.ndarray, ...]
    tau_d1: int
    tau_d2: int
    mu: float
    threshold: float

    @classmethod
    def from_design(cls, design, gamma_bar: float, threshold: float | None = None) -> "MixedLaw":
        th = gamma_bar ** 2 if threshold is None else float(threshold)
        return cls(design.gains, tuple(design.Q), design.tau_d1, design.tau_d2,
                   design.params.mu, th)


def run_mixed(plant: SwitchedPlant, law: MixedLaw, trace: AttackTrace, x0) -> Trace:
    """Two-strategy runtime.

    S1 feeds back ``x_hat = (1-a)(1-b) x + a(1-b) x_a`` through ``K_sigma`` and
    switches round-robin after ``tau_d1`` steps. S2 applies no input and jumps
    to the cheapest other mode under ``Q`` once ``phi(k) > 0`` and ``tau_d2``
    steps have passed. S1 hands over to S2 when ``|x|^2 <= threshold`` and the
    dwell has elapsed; S2 hands back as soon as ``|x|^2 > threshold``.
    """
    x0 = np.asarray(x0, dtype=float).ravel()
    _check_dims(plant, law.gains, x0, trace)
    H, n, m = trace.horizon, plant.n_x, plant.m
    x = np.empty((H + 1, n))
    xb = np.empty((H + 1, n))
    u = np.empty((H, plant.n_u))
    sigma = np.empty(H, dtype=int)
    x[0] = xb[0] = x0
    mode, k_s = 0, 0
    strategy = S1 if float(x0 @ x0) > law.threshold else S2
    tags = []
    for k in range(H):
        xk = x[k]
        size = float(xk @ xk)
        if strategy == S2 and size > law.threshold:
            strategy = S1
        elif strategy == S1 and size <= law.threshold and k >= k_s + law.tau_d1:
            strategy = S2
        if strategy == S1:
            if k >= k_s + law.tau_d1 and m > 1:
                mode, k_s = (mode + 1) % m, k
        elif k >= k_s + law.tau_d2 and m > 1:
            costs = [float(xk @ Q @ xk) for Q in law.Q]
            others = [q for q in range(m) if q != mode]
            best = min(others, key=lambda q: (costs[q], q))
            if costs[mode] - law.mu * costs[best] > 0.0:
                mode, k_s = best, k
        a, b = int(trace.alpha[k]), int(trace.beta[k])
        xhat = (1 - a) * (1 - b) * xk + a * (1 - b) * trace.payload[k]
        xb[k + 1] = xhat
        u[k] = law.gains[mode] @ xhat if strategy == S1 else 0.0
        sigma[k] = mode
        tags.append(strategy)
        md = plant.modes[mode]
        x[k + 1] = md.A @ xk + md.B @ u[k]
    return Trace(x, xb, u, sigma, sigma.copy(), trace.alpha, trace.beta, tags)


# --------------------------------------------------------------------- invariants

def channel_law_residual(trace: Trace, payload: np.ndarray) -> float:
    """Largest deviation from the channel law over the run (time law only)."""
    a = trace.alpha[:, None].astype(float)
    b = trace.beta[:, None].astype(float)
    pred = (1 - a) * (1 - b) * trace.x[:-1] + b * trace.xbar_prev[:-1] + a * (1 - b) * payload
    return float(np.max(np.abs(pred - trace.xbar_prev[1:]), initial=0.0))


def mode_law_holds(trace: Trace) -> bool:
    prev = trace.sigma[0]
    for k in range(trace.sigma.size):
        want = prev if trace.beta[k] else trace.sigma[k]
        if trace.sigma_bar[k] != want:
            return False
        prev = trace.sigma_bar[k]
    return True


def asynchrony_only_under_dos(trace: Trace) -> bool:
    """``sigma_bar != sigma`` only while every step since the last switch was jammed."""
    last_switch = 0
    for k in range(trace.sigma.size):
        if k > 0 and trace.sigma[k] != trace.sigma[k - 1]:
            last_switch = k
        if trace.sigma_bar[k] != trace.sigma[k] and not np.all(trace.beta[last_switch:k + 1]):
            return False
    return True


# --------------------------------------------------------------------- Monte Carlo

@dataclass
class Aggregate:
    """Pointwise statistics over ``runs`` traces for ``k = 0..H``."""

    k: np.ndarray
    mean_state_norm: np.ndarray
    mean_square_norm: np.ndarray
    mean_square_state: np.ndarray
    runs: int
    seed: int
    law: str
    envelope: np.ndarray | None = None
    psi: float | None = None
    ell: float | None = None
    extras: dict = field(default_factory=dict)

    def rows(self):
        env = self.envelope if self.envelope is not None else np.full(self.k.size, np.nan)
        psi = np.nan if self.psi is None else self.psi
        for i, k in enumerate(self.k):
            yield int(k), self.mean_state_norm[i], self.mean_square_norm[i], env[i], psi


@dataclass(frozen=True)
class _Job:
    plant: SwitchedPlant
    attack: AttackParameters
    x0: np.ndarray
    horizon: int
    seed: int
    payload: str
    law: str
    gains: GainSet | None
    tau_d: int
    mixed: MixedLaw | None


def _one_run(job: _Job, run_index: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    tr = sample_attack_trace(job.attack, job.plant.n_x, job.horizon, job.seed, run_index, job.payload)
    if job.law == TIME:
        out = run_time_switching(job.plant, job.gains, job.tau_d, tr, job.x0)
    else:
        out = run_mixed(job.plant, job.mixed, tr, job.x0)
    xt = out.x_tilde
    return out.x, np.einsum("ij,ij->i", xt, xt), np.einsum("ij,ij->i", out.x, out.x)


def _run_chunk(job: _Job, indices: list[int]):
    return [_one_run(job, i) for i in indices]


def _fsum_columns(stack: np.ndarray) -> np.ndarray:
    # exactly rounded sums do not depend on run order or worker layout
    flat = stack.reshape(stack.shape[0], -1)
    return np.array([math.fsum(flat[:, j]) for j in range(flat.shape[1])]).reshape(stack.shape[1:])


def monte_carlo(scenario: Scenario, law: str = TIME, runs: int | None = None, seed: int | None = None,
                horizon: int | None = None, payload: str | None = None, tau_d: int | None = None,
                mixed=None, certificate: AnalysisCertificate | None = None,
                workers: int = 1) -> Aggregate:
    """Run ``runs`` seeded traces and aggregate them pointwise.

    ``mixed`` is a :class:`~resilient_ncs.synthesis.MixedSwitchingDesign` (or a
    :class:`MixedLaw`) and is required for the mixed law. With a ``certificate``
    the envelope, ``psi`` and ``ell`` lines are attached.
    """
    if law not in LAWS:
        raise PreconditionFailed(f"law must be one of {LAWS}")
    sim = scenario.simulation
    runs = sim.runs if runs is None else int(runs)
    seed = sim.seed if seed is None else int(seed)
    horizon = sim.horizon if horizon is None else int(horizon)
    payload = sim.payload if payload is None else payload
    if runs < 1:
        raise PreconditionFailed("runs must be >= 1")
    x0 = scenario.initial_state
    mixed_law = None
    gains = scenario.gains
    if law == TIME:
        if gains is None:
            raise PreconditionFailed("time-switching runs need gains")
        if tau_d is None:
            tau_d = sim.tau_d
        if tau_d is None and certificate is not None:
            tau_d = security_metrics(certificate, augmented_initial_state(x0)).tau_d
        if tau_d is None:
            raise PreconditionFailed("time-switching runs need tau_d")
    else:
        if mixed is None:
            raise PreconditionFailed("mixed runs need a mixed-switching design")
        mixed_law = mixed if isinstance(mixed, MixedLaw) else MixedLaw.from_design(
            mixed, scenario.attack.gamma_bar, sim.guard_threshold)
    job = _Job(scenario.plant, scenario.attack, x0, horizon, seed, payload, law, gains,
               int(tau_d or 1), mixed_law)
    indices = list(range(runs))
    if workers <= 1:
        results = _run_chunk(job, indices)
    else:
        chunks = [indices[i::workers] for i in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_chunk, [job] * len(chunks), chunks))
        by_index = {}
        for chunk, part in zip(chunks, parts):
            by_index.update(zip(chunk, part))
        results = [by_index[i] for i in indices]
    states = np.stack([r[0] for r in results])
    sq_aug = np.stack([r[1] for r in results])
    sq_state = np.stack([r[2] for r in results])
    mean_state = _fsum_columns(states) / runs
    agg = Aggregate(
        k=np.arange(horizon + 1),
        mean_state_norm=np.linalg.norm(mean_state, axis=1),
        mean_square_norm=_fsum_columns(sq_aug) / runs,
        mean_square_state=_fsum_columns(sq_state) / runs,
        runs=runs, seed=seed, law=law,
    )
    if certificate is not None:
        xt0 = augmented_initial_state(x0)
        rep = security_metrics(certificate, xt0, scenario.attack.gamma_bar, job.tau_d if law == TIME else None)
        agg.psi, agg.ell = rep.psi, rep.ell
        if law == TIME:
            agg.envelope = envelope_curve(certificate, job.tau_d, xt0, horizon, scenario.attack.gamma_bar)
    return agg
