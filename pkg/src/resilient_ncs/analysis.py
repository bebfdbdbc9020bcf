"""Stability analysis for fixed gains: LMI certificates, dwell time, security level.

The one-step expectation of ``x_tilde^T P x_tilde`` is a quadratic form in
``xi = [x_tilde; x_a]``. It is built from the first two moments of the channel
coefficients ``(c_x, c_p, c_a)``:

    E = xi^T (V0^T P V0 + sum_ij Cov_ij V_i^T P V_j) xi

with ``V0`` the mean closed-loop map and ``V_x, V_p, V_a`` the maps multiplying
each coefficient. The same factors drive both the LMI assembly and the numeric
closed form used to cross-check the enumeration oracle.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import lmi
from .closedloop import RESYNC, SYNC, async_matrix, resync_matrices, sync_matrices
from .errors import Infeasible, PreconditionFailed
from .model import (MUTUALLY_EXCLUSIVE, AttackParameters, DesignParameters, GainSet,
                    SwitchedPlant)
from .numerics import as_symmetric, extreme_eigenvalues, spectral_radius

FULL = "full"
NON_SWITCHED = "non-switched"
DOS_ONLY = "dos-only"
DECEPTION_ONLY = "deception-only"
REGIMES = (FULL, NON_SWITCHED, DOS_ONLY, DECEPTION_ONLY)


# --------------------------------------------------------------------- moments

def channel_moments(attack: AttackParameters, stage: str) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of ``(c_x, c_p, c_a)`` in closed form."""
    ab, bb = attack.alpha_bar, attack.beta_bar
    at, bt = attack.alpha_tilde, attack.beta_tilde
    if stage == RESYNC:
        pa = ab / (1.0 - bb) if attack.coupling == MUTUALLY_EXCLUSIVE and bb < 1.0 else ab
        v = pa * (1.0 - pa)
        mean = np.array([1.0 - pa, 0.0, pa])
        cov = np.array([[v, 0.0, -v], [0.0, 0.0, 0.0], [-v, 0.0, v]])
        return mean, cov
    if stage != SYNC:
        raise ValueError(f"unknown stage {stage!r}")
    if attack.coupling == MUTUALLY_EXCLUSIVE:
        mean = np.array([1.0 - ab - bb, bb, ab])
        cov = np.diag(mean) - np.outer(mean, mean)
        return mean, cov
    mean = np.array([attack.chi3, bb, ab * (1.0 - bb)])
    var_x = at * (1.0 - bb) ** 2 + bt * (1.0 - ab) ** 2 + at * bt
    cov = np.array([
        [var_x, -bt * (1.0 - ab), -at * (1.0 - bb) ** 2],
        [-bt * (1.0 - ab), bt, -ab * bt],
        [-at * (1.0 - bb) ** 2, -ab * bt, mean[2] * (1.0 - mean[2])],
    ])
    return mean, cov


@dataclass(frozen=True)
class StepFactors:
    """``x_tilde(k+1) = D x_tilde + c_x X x_tilde + c_p Q x_tilde + c_a G x_a``."""

    D: np.ndarray
    X: np.ndarray
    Q: np.ndarray
    G: np.ndarray
    mean: np.ndarray
    cov: np.ndarray

    def gram_terms(self, with_payload: bool = True):
        """Yield ``(weight, left, right)`` with ``left/right`` as (x_tilde-part, x_a-part)."""
        n2, n = self.G.shape
        zero_a = np.zeros((n2, n))
        zero_x = np.zeros((n2, n2))
        m = self.mean
        mean_x = self.D + m[0] * self.X + m[1] * self.Q
        mean_a = m[2] * self.G
        parts = [(self.X, zero_a), (self.Q, zero_a), (zero_x, self.G)]
        terms = [(1.0, (mean_x, mean_a), (mean_x, mean_a))]
        for i in range(3):
            for j in range(3):
                w = self.cov[i, j]
                if w != 0.0:
                    terms.append((w, parts[i], parts[j]))
        if not with_payload:
            terms = [(w, (l[0], None), (r[0], None)) for w, l, r in terms]
        return terms


def step_factors(plant: SwitchedPlant, gains: GainSet, attack: AttackParameters,
                 p: int, stage: str) -> StepFactors:
    n = plant.n_x
    if stage == SYNC:
        sm = sync_matrices(plant, gains, attack, p)
        X, Q, G = sm.A3, sm.A2, sm.A4
    else:
        rm = resync_matrices(plant, gains, attack, p)
        X, Q, G = rm.At2, np.zeros((2 * n, 2 * n)), rm.At3
    D = np.zeros((2 * n, 2 * n))
    D[:n, :n] = plant.mode(p).A
    mean, cov = channel_moments(attack, stage)
    return StepFactors(D, X, Q, G, mean, cov)


def closed_form_step_matrix(P, plant, gains, attack, p: int, stage: str) -> np.ndarray:
    """Matrix ``M`` with ``E[x_tilde(k+1)^T P x_tilde(k+1)] = xi^T M xi``."""
    P = as_symmetric(P, "P")
    f = step_factors(plant, gains, attack, p, stage)
    out = 0.0
    for w, (lx, la), (rx, ra) in f.gram_terms():
        L = np.hstack([lx, la])
        R = np.hstack([rx, ra])
        out = out + w * L.T @ P @ R
    return 0.5 * (out + out.T)


def closed_form_step_quadratic(P, stage, plant, gains, attack, x_tilde, x_a, p: int = 0) -> float:
    xi = np.concatenate([np.ravel(x_tilde), np.ravel(x_a)])
    return float(xi @ closed_form_step_matrix(P, plant, gains, attack, p, stage) @ xi)


def _add_expected_step(expr: lmi.BlockExpr, P: lmi.Variable, f: StepFactors, with_payload: bool) -> None:
    # the full form is symmetric, so the upper cells determine it
    cells = [(0, 0), (0, 1), (1, 1)] if with_payload else [(0, 0)]
    for w, left, right in f.gram_terms(with_payload):
        for bi, bj in cells:
            L, R = left[bi], right[bj]
            if np.any(L) and np.any(R):
                expr.add_quadratic(bi, bj, P, L, R, w)


# --------------------------------------------------------------------- assembly

def regime_attack(attack: AttackParameters, regime: str) -> AttackParameters:
    if regime == DOS_ONLY:
        return replace(attack, alpha_bar=0.0, gamma_bar=0.0)
    if regime == DECEPTION_ONLY:
        return replace(attack, beta_bar=0.0)
    return attack


def _check_preconditions(plant, gains, attack, design, regime):
    if regime not in REGIMES:
        raise PreconditionFailed(f"unknown regime {regime!r}")
    problems = plant.findings() + attack.findings() + design.findings(attack) + gains.findings(plant)
    if regime == NON_SWITCHED and plant.m != 1:
        problems.append(f"regime non-switched needs one mode, plant has {plant.m}")
    if problems:
        raise PreconditionFailed("; ".join(problems))
    schur = gains.schur_findings(plant)
    if schur:
        raise PreconditionFailed("; ".join(schur))


def assemble_analysis(plant: SwitchedPlant, gains: GainSet, attack: AttackParameters,
                      design: DesignParameters, regime: str = FULL,
                      delta: float = 1e-6) -> lmi.FeasibilityProblem:
    """Mean-square decrease, bounded asynchronous growth, and mode-jump conditions."""
    attack = regime_attack(attack, regime)
    _check_preconditions(plant, gains, attack, design, regime)
    n2, n = 2 * plant.n_x, plant.n_x
    m = plant.m
    with_payload = regime != DOS_ONLY
    Ps = [lmi.symmetric(f"P{p + 1}", n2) for p in range(m)]
    eps = lmi.scalar("eps") if with_payload else None
    rho_s, rho_u = design.rho_s, design.rho_u
    sizes = [n2, n] if with_payload else [n2]
    cons: list[lmi.Constraint] = []

    def decrease(p: int, stage: str, label: str) -> lmi.Constraint:
        expr = lmi.BlockExpr(sizes)
        _add_expected_step(expr, Ps[p], step_factors(plant, gains, attack, p, stage), with_payload)
        expr.add_term(0, 0, Ps[p], scale=-(1.0 - rho_s))
        if with_payload:
            expr.add_identity(1, eps, -1.0)
        return lmi.Constraint(expr, lmi.NSD, f"{label}[{p + 1}]")

    for p in range(m):
        cons.append(decrease(p, SYNC, "Pi"))
    if regime in (FULL, DOS_ONLY):
        for p, q in lmi.all_pairs(m):
            Abar = async_matrix(plant, gains, p, q)
            expr = lmi.BlockExpr([n2])
            expr.add_quadratic(0, 0, Ps[p], Abar, Abar)
            expr.add_term(0, 0, Ps[p], scale=-(1.0 + rho_u))
            cons.append(lmi.Constraint(expr, lmi.NSD, f"Omega[{p + 1},{q + 1}]"))
        for p in range(m):
            cons.append(decrease(p, RESYNC, "Psi"))
    if regime != NON_SWITCHED:
        for p, q in lmi.all_pairs(m):
            expr = lmi.BlockExpr([n2])
            expr.add_term(0, 0, Ps[p]).add_term(0, 0, Ps[q], scale=-design.mu)
            cons.append(lmi.Constraint(expr, lmi.NSD, f"jump[{p + 1},{q + 1}]"))
    for p in range(m):
        expr = lmi.BlockExpr([n2]).add_term(0, 0, Ps[p])
        cons.append(lmi.Constraint(expr, lmi.PSD, f"P{p + 1}>0"))
    variables = list(Ps)
    if with_payload:
        cons.append(lmi.Constraint(lmi.BlockExpr([1]).add_identity(0, eps), lmi.PSD, "eps>0"))
        variables.append(eps)
    return lmi.FeasibilityProblem(variables, cons, delta)


# --------------------------------------------------------------------- certificates

@dataclass
class AnalysisCertificate:
    regime: str
    P: list[np.ndarray]
    eps: float
    design: DesignParameters
    attack: AttackParameters
    gains: GainSet
    problem: lmi.FeasibilityProblem = field(repr=False)
    assignment: lmi.Assignment = field(repr=False)
    report: lmi.VerificationReport = field(repr=False)

    @property
    def lambda_min_floor(self) -> float:
        return min(extreme_eigenvalues(P)[0] for P in self.P)

    @property
    def margins(self) -> dict[str, float]:
        return {c.name: c.margin for c in self.report.checks}


def _tighten_problem(problem: lmi.FeasibilityProblem, Ps) -> lmi.FeasibilityProblem:
    extra = []
    for P in Ps:
        n = P.shape[0]
        expr = lmi.BlockExpr([n]).add_term(0, 0, P).add_constant(0, 0, -np.eye(n))
        extra.append(lmi.Constraint(expr, lmi.PSD, f"{P.name}>=I"))
    return lmi.FeasibilityProblem(problem.variables, problem.constraints + extra, problem.delta)


def analyze(plant: SwitchedPlant, gains: GainSet, attack: AttackParameters,
            design: DesignParameters, regime: str = FULL,
            opts: lmi.SolverOptions | None = None, delta: float = 1e-6,
            tighten: bool = True) -> AnalysisCertificate:
    """Solve the analysis conditions and return a verified certificate.

    When ``tighten`` is set a second solve minimizes ``eps`` subject to
    ``P_p >= I``; by homogeneity this minimizes the asymptotic bound's
    ``eps / lambda_min`` ratio. The tightened point is kept only if it verifies.
    """
    opts = opts or lmi.SolverOptions()
    if regime in REGIMES:
        bad = [f for f in gains.findings(plant)] or gains.schur_findings(plant)
        if bad:
            raise Infeasible("no certificate exists for these gains: " + "; ".join(bad))
    problem = assemble_analysis(plant, gains, attack, design, regime, delta)
    assignment = lmi.solve_feasibility(problem, opts)
    if tighten and regime != DOS_ONLY:
        Ps = [v for v in problem.variables if v.kind == "symmetric"]
        eps = problem.variable("eps")
        try:
            tight = lmi.solve_feasibility(_tighten_problem(problem, Ps), opts, objective={eps: 1.0})
            if lmi.verify(problem, tight, opts.verify_tol).passed:
                assignment = tight
        except (Infeasible, lmi.IterationLimit):
            pass
    report = lmi.verify(problem, assignment, opts.verify_tol)
    Ps = [np.asarray(assignment[v]) for v in problem.variables if v.kind == "symmetric"]
    eps = float(assignment.by_name("eps")) if regime != DOS_ONLY else 0.0
    return AnalysisCertificate(regime, Ps, eps, design, regime_attack(attack, regime), gains,
                               problem, assignment, report)


# --------------------------------------------------------------------- scalar formulas

def min_dwell_time(design: DesignParameters, attack: AttackParameters) -> float:
    """``-ln(mu_bar) / ln(1 - rho_s)``; zero when ``mu_bar <= 1``."""
    c = design.c(attack)
    if not c < 1.0:
        raise PreconditionFailed(f"c = {c:.6g} must be < 1")
    if not 0.0 < design.rho_s < 1.0:
        raise PreconditionFailed("rho_s must lie in (0, 1)")
    mu_bar = design.mu_bar(attack)
    if mu_bar <= 1.0:
        return 0.0
    return -math.log(mu_bar) / math.log(1.0 - design.rho_s)


def growth_factor(design: DesignParameters, attack: AttackParameters, regime: str) -> float:
    """Energy growth across one switch as used in the dwell and security formulas."""
    if regime == NON_SWITCHED:
        return 1.0
    if regime == DECEPTION_ONLY:
        return design.mu
    return design.mu_bar(attack)


def regime_dwell_time(design: DesignParameters, attack: AttackParameters, regime: str) -> float:
    g = growth_factor(design, attack, regime)
    if regime == NON_SWITCHED or g <= 1.0:
        return 0.0
    if regime == DECEPTION_ONLY:
        return -math.log(g) / math.log(1.0 - design.rho_s)
    return min_dwell_time(design, attack)


@dataclass(frozen=True)
class SecurityReport:
    tau_d_star: float
    ell: float
    ell_worst: float
    psi: float
    envelope_gain: float
    envelope_rate: float
    lambda_min_floor: float
    g2_cap: float
    growth: float
    V0: float
    tau_d: int


def security_metrics(cert: AnalysisCertificate, x_tilde0, gamma_bar: float | None = None,
                     tau_d: int | None = None) -> SecurityReport:
    """Dwell time, security level and asymptotic bound for a certificate.

    ``sigma(0)`` is mode 1; ``ell_worst`` maximizes over the initial mode.
    ``envelope_rate`` is the per-step decay ``(1-rho_s)^(1 - tau_d*/tau_d)`` of the
    bound ``E|x_tilde(k)|^2 <= envelope_gain * rate^k * |x_tilde(0)|^2 + psi``.
    """
    gb = cert.attack.gamma_bar if gamma_bar is None else float(gamma_bar)
    if cert.regime == DOS_ONLY:
        gb = 0.0
    x0 = np.asarray(x_tilde0, dtype=float).ravel()
    lam = cert.lambda_min_floor
    rho_s = cert.design.rho_s
    g = growth_factor(cert.design, cert.attack, cert.regime)
    tau_star = regime_dwell_time(cert.design, cert.attack, cert.regime)
    V = [float(x0 @ P @ x0) for P in cert.P]
    attack_term = cert.eps * gb ** 2 / (lam * rho_s)
    psi = g * attack_term
    ell = g * max(V[0] / lam, attack_term)
    ell_worst = g * max(max(V) / lam, attack_term)
    td = max(1, math.ceil(tau_star)) if tau_d is None else int(tau_d)
    rate = (1.0 - rho_s) ** (1.0 - tau_star / td) if td > 0 else 1.0
    lam_max0 = extreme_eigenvalues(cert.P[0])[1]
    gain = g * lam_max0 / lam
    return SecurityReport(tau_star, ell, ell_worst, psi, gain, rate, lam, 1.0 / rho_s, g, V[0], td)


def envelope_bound(cert: AnalysisCertificate, tau_d: int, x_tilde0, k: int,
                   gamma_bar: float | None = None) -> float:
    """Upper bound on ``E|x_tilde(k)|^2`` under a round-robin schedule of period ``tau_d``.

    ``[(1-rho_s)^max(k - (s+1) tau_d*, 0) V(0) + growth*eps*gamma^2/rho_s] / lambda_min``
    with ``s = floor(k / tau_d)`` switches completed before ``k``.
    """
    rep = security_metrics(cert, x_tilde0, gamma_bar, tau_d)
    if tau_d < max(1, math.ceil(rep.tau_d_star)):
        raise PreconditionFailed(f"tau_d = {tau_d} below ceil(tau_d*) = {math.ceil(rep.tau_d_star)}")
    if k < 0:
        raise PreconditionFailed("k must be >= 0")
    s = k // tau_d
    expo = max(k - (s + 1) * rep.tau_d_star, 0.0)
    decay = (1.0 - cert.design.rho_s) ** expo * rep.V0
    return decay / rep.lambda_min_floor + rep.psi


def envelope_curve(cert: AnalysisCertificate, tau_d: int, x_tilde0, horizon: int,
                   gamma_bar: float | None = None) -> np.ndarray:
    return np.array([envelope_bound(cert, tau_d, x_tilde0, k, gamma_bar) for k in range(horizon + 1)])
