"""Gain synthesis and mixed-switching design.

Gain synthesis works with block-diagonal Lyapunov matrices ``diag(P1, P2)`` and
replaces ``P1`` in each mean-square factor by a slack ``Xi E`` where ``E`` maps
``B`` to ``[I; 0]``. With ``Xi`` block upper-triangular (split at ``n_u``) the
product ``Xi E B K`` collapses to ``[R1; 0]`` so the conditions are affine in
``(P1, P2, R1, Xi, eps)`` and the gain is recovered as ``K = Xi11^{-1} R1``.

Each stage's one-step second moment is written as a sum of squared factor rows
``w = (w_x, w_p, w_a)`` whose outer products cover the channel covariance.

When those LMIs are infeasible, an iterative route alternates between gains and
Lyapunov matrices on the analysis conditions themselves and only returns gains
that the analysis accepts.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import lmi
from .analysis import FULL, AnalysisCertificate, analyze, assemble_analysis, channel_moments
from .closedloop import RESYNC, SYNC
from .errors import Infeasible, PreconditionFailed, RankDeficient, SingularXi
from .model import (MUTUALLY_EXCLUSIVE, AttackParameters, DesignParameters, GainSet,
                    MixedParameters, SwitchedPlant)
from .numerics import as_matrix, orthonormal_null_basis

XI_COND_LIMIT = 1e12


def input_normalizer(B) -> np.ndarray:
    """``E`` with ``E @ B = [I; 0]``: pseudo-inverse rows stacked on a null basis of ``B^T``."""
    B = as_matrix(B, "B")
    n_x, n_u = B.shape
    if n_u > n_x or np.linalg.matrix_rank(B) < n_u or np.linalg.cond(B.T @ B) > 1e12:
        raise RankDeficient("B must have full column rank")
    left = np.linalg.solve(B.T @ B, B.T)
    perp = orthonormal_null_basis(B.T)
    return np.vstack([left, perp.T])


def coefficients(attack: AttackParameters) -> dict[str, float]:
    """Scalar weights of the independent-coupling factorization."""
    ab, bb = attack.alpha_bar, attack.beta_bar
    at, bt = attack.alpha_tilde, attack.beta_tilde
    return {
        "theta1": ab * (1.0 - bb),
        "theta2": math.sqrt(bt * (2.0 - 2.0 * ab)),
        "theta3": math.sqrt(at) * (1.0 - bb),
        "theta4": math.sqrt(2.0 * bt * (1.0 - ab)),
        "sqrt_ab_bt": math.sqrt(ab * bt),
        "chi3": attack.chi3,
    }


def second_moment_factors(attack: AttackParameters, stage: str) -> tuple[np.ndarray, list[np.ndarray]]:
    """Mean of ``(c_x, c_p, c_a)`` and factor rows with ``sum w w^T >= Cov``."""
    mean, cov = channel_moments(attack, stage)
    if stage == RESYNC:
        v = cov[0, 0]
        return mean, [math.sqrt(v) * np.array([1.0, 0.0, -1.0])]
    if attack.coupling == MUTUALLY_EXCLUSIVE:
        lam, U = np.linalg.eigh(cov)
        return mean, [math.sqrt(l) * U[:, i] for i, l in enumerate(lam) if l > 1e-15]
    c = coefficients(attack)
    return mean, [
        np.array([0.0, c["sqrt_ab_bt"], -c["sqrt_ab_bt"]]),
        np.array([0.0, c["theta2"], 0.0]),
        np.array([c["theta3"], 0.0, -c["theta3"]]),
        np.array([c["theta4"], 0.0, 0.0]),
    ]


@dataclass
class SynthesisVariables:
    P1: list[lmi.Variable]
    P2: list[lmi.Variable]
    R: list[lmi.Variable]
    Xi: list[lmi.Variable]
    eps: lmi.Variable
    E: list[np.ndarray]


def _variables(plant: SwitchedPlant) -> SynthesisVariables:
    n, nu = plant.n_x, plant.n_u
    xi_mask = np.zeros((n, n), bool)
    xi_mask[nu:, :nu] = True
    r_mask = np.zeros((n, n), bool)
    r_mask[nu:, :] = True
    m = plant.m
    return SynthesisVariables(
        P1=[lmi.symmetric(f"P1_{p + 1}", n) for p in range(m)],
        P2=[lmi.symmetric(f"P2_{p + 1}", n) for p in range(m)],
        R=[lmi.rectangular(f"R_{p + 1}", n, n, r_mask) for p in range(m)],
        Xi=[lmi.rectangular(f"Xi_{p + 1}", n, n, xi_mask) for p in range(m)],
        eps=lmi.scalar("eps"),
        E=[input_normalizer(md.B) for md in plant.modes],
    )


def _add_lambda(expr: lmi.BlockExpr, i: int, v: SynthesisVariables, p: int, q: int) -> None:
    """``-diag(Xi_q E_p + (Xi_q E_p)^T - P1_p, P2_p)`` on blocks ``i, i+1``."""
    expr.add_term(i, i, v.Xi[q], right=v.E[p], scale=-2.0)
    expr.add_term(i, i, v.P1[p])
    expr.add_term(i + 1, i + 1, v.P2[p], scale=-1.0)


def _decrease_condition(plant, design, attack, v: SynthesisVariables, p: int, stage: str) -> lmi.BlockExpr:
    n = plant.n_x
    mean, factors = second_moment_factors(attack, stage)
    rows = [mean] + factors
    k = len(rows)
    # blocks: (R-row, P2-row) per factor, then x, x_bar_prev, x_a
    expr = lmi.BlockExpr([n] * (2 * k + 3))
    col_x, col_p, col_a = 2 * k, 2 * k + 1, 2 * k + 2
    A = plant.mode(p).A
    for r, w in enumerate(rows):
        top, bot = 2 * r, 2 * r + 1
        _add_lambda(expr, top, v, p, p)
        if r == 0:
            expr.add_term(top, col_x, v.Xi[p], right=v.E[p] @ A)
        for col, wc in ((col_x, w[0]), (col_p, w[1]), (col_a, w[2])):
            if wc != 0.0:
                expr.add_term(top, col, v.R[p], scale=wc)
                expr.add_term(bot, col, v.P2[p], scale=wc)
    rho = 1.0 - design.rho_s
    expr.add_term(col_x, col_x, v.P1[p], scale=-rho)
    expr.add_term(col_p, col_p, v.P2[p], scale=-rho)
    expr.add_identity(col_a, v.eps, -1.0)
    return expr


def assemble_synthesis(plant: SwitchedPlant, attack: AttackParameters, design: DesignParameters,
                      delta: float = 1e-6) -> tuple[lmi.FeasibilityProblem, SynthesisVariables]:
    problems = plant.findings() + attack.findings() + design.findings(attack)
    if problems:
        raise PreconditionFailed("; ".join(problems))
    try:
        v = _variables(plant)
    except RankDeficient as exc:
        raise PreconditionFailed(str(exc)) from exc
    n, m = plant.n_x, plant.m
    cons: list[lmi.Constraint] = []
    for p in range(m):
        cons.append(lmi.Constraint(_decrease_condition(plant, design, attack, v, p, SYNC), lmi.NSD, f"Pi[{p + 1}]"))
    ru = 1.0 + design.rho_u
    for p, q in lmi.all_pairs(m):
        # asynchronous growth: plant p driven by the held gain of mode q
        expr = lmi.BlockExpr([n] * 4)
        _add_lambda(expr, 0, v, p, q)
        expr.add_term(0, 2, v.Xi[q], right=v.E[p] @ plant.mode(p).A)
        expr.add_term(0, 3, v.R[q])
        expr.add_term(1, 3, v.P2[p])
        expr.add_term(2, 2, v.P1[p], scale=-ru)
        expr.add_term(3, 3, v.P2[p], scale=-ru)
        cons.append(lmi.Constraint(expr, lmi.NSD, f"Omega[{p + 1},{q + 1}]"))
    for p in range(m):
        cons.append(lmi.Constraint(_decrease_condition(plant, design, attack, v, p, RESYNC), lmi.NSD, f"Phi[{p + 1}]"))
    for p, q in lmi.all_pairs(m):
        expr = lmi.BlockExpr([n, n])
        expr.add_term(0, 0, v.P1[p]).add_term(0, 0, v.P1[q], scale=-design.mu)
        expr.add_term(1, 1, v.P2[p]).add_term(1, 1, v.P2[q], scale=-design.mu)
        cons.append(lmi.Constraint(expr, lmi.NSD, f"jump[{p + 1},{q + 1}]"))
    for p in range(m):
        cons.append(lmi.Constraint(lmi.BlockExpr([n]).add_term(0, 0, v.P1[p]), lmi.PSD, f"P1_{p + 1}>0"))
        cons.append(lmi.Constraint(lmi.BlockExpr([n]).add_term(0, 0, v.P2[p]), lmi.PSD, f"P2_{p + 1}>0"))
    cons.append(lmi.Constraint(lmi.BlockExpr([1]).add_identity(0, v.eps), lmi.PSD, "eps>0"))
    variables = v.P1 + v.P2 + v.R + v.Xi + [v.eps]
    return lmi.FeasibilityProblem(variables, cons, delta), v


CONGRUENCE = "congruence"
ITERATIVE = "iterative"
AUTO = "auto"
METHODS = (AUTO, CONGRUENCE, ITERATIVE)


@dataclass
class SynthesisCertificate:
    """Solved synthesis point.

    The congruence route fills ``P1, P2, R, Xi, E``. The iterative route leaves
    them empty and carries the analysis certificate that accepted its gains.
    Both routes carry an ``analysis`` certificate once the round trip has run.
    """

    eps: float
    gains: GainSet
    coefficients: dict[str, float]
    problem: lmi.FeasibilityProblem = field(repr=False)
    assignment: lmi.Assignment = field(repr=False)
    report: lmi.VerificationReport = field(repr=False)
    method: str = CONGRUENCE
    P1: list[np.ndarray] = field(default_factory=list)
    P2: list[np.ndarray] = field(default_factory=list)
    R: list[np.ndarray] = field(default_factory=list)
    Xi: list[np.ndarray] = field(default_factory=list)
    E: list[np.ndarray] = field(default_factory=list)
    iterations: int = 0
    analysis: AnalysisCertificate | None = field(default=None, repr=False)


def recover_gains(R: list[np.ndarray], Xi: list[np.ndarray], n_u: int) -> GainSet:
    gains = []
    for p, (Rp, Xp) in enumerate(zip(R, Xi)):
        X11 = Xp[:n_u, :n_u]
        if np.linalg.cond(X11) > XI_COND_LIMIT:
            raise SingularXi(f"Xi_{p + 1} leading block is numerically singular")
        gains.append(np.linalg.solve(X11, Rp[:n_u, :]))
    return GainSet(gains)


def synthesize_congruence(plant: SwitchedPlant, attack: AttackParameters, design: DesignParameters,
                          opts: lmi.SolverOptions | None = None,
                          delta: float = 1e-6) -> tuple[GainSet, SynthesisCertificate]:
    opts = opts or lmi.SolverOptions()
    problem, v = assemble_synthesis(plant, attack, design, delta)
    a = lmi.solve_feasibility(problem, opts)
    report = lmi.verify(problem, a, opts.verify_tol)
    R = [np.asarray(a[x]) for x in v.R]
    Xi = [np.asarray(a[x]) for x in v.Xi]
    gains = recover_gains(R, Xi, plant.n_u)
    cert = SynthesisCertificate(
        eps=float(a[v.eps]), gains=gains, coefficients=coefficients(attack),
        problem=problem, assignment=a, report=report, method=CONGRUENCE,
        P1=[np.asarray(a[x]) for x in v.P1], P2=[np.asarray(a[x]) for x in v.P2],
        R=R, Xi=Xi, E=v.E,
    )
    return gains, cert


# --------------------------------------------------------------------- iterative route
#
# With the Lyapunov matrices fixed, every analysis condition is an LMI in the gains
# after one Schur complement: sum_r F_r^T P F_r <= S  <=>  [[S, F^T P], [P F, P]] >= 0
# with each F_r affine in K. Alternating a gain step with a normalized analysis
# step climbs the analysis margin until a certificate exists.

def _gain_step(plant: SwitchedPlant, attack: AttackParameters, design: DesignParameters,
               Ps: list[np.ndarray], opts: lmi.SolverOptions) -> GainSet:
    n, nu, m = plant.n_x, plant.n_u, plant.m
    Ks = [lmi.rectangular(f"K{p + 1}", nu, n) for p in range(m)]
    eps = lmi.scalar("eps")
    I, Z = np.eye(n), np.zeros((n, n))
    # x_tilde columns picked by c_x and c_p, and the x_a embedding
    sel_x = np.block([[Z, Z], [I, Z]])
    sel_p = np.block([[Z, Z], [Z, I]])
    embed_a = np.vstack([Z, I])
    cons = []
    for stage in (SYNC, RESYNC):
        mean, cov = channel_moments(attack, stage)
        lam, U = np.linalg.eigh(cov)
        rows = [mean] + [math.sqrt(l) * U[:, i] for i, l in enumerate(lam) if l > 1e-14]
        for p in range(m):
            md = plant.mode(p)
            P = Ps[p]
            PB = P @ np.vstack([md.B, np.zeros((n, nu))])
            expr = lmi.BlockExpr([2 * n, n] + [2 * n] * len(rows))
            expr.add_constant(0, 0, P, 1.0 - design.rho_s)
            expr.add_identity(1, eps)
            for r, w in enumerate(rows):
                b = 2 + r
                Fx = w[0] * sel_x + w[1] * sel_p
                if r == 0:
                    Fx = Fx + np.block([[md.A, Z], [Z, Z]])
                expr.add_constant(b, b, P)
                expr.add_constant(b, 0, P @ Fx)
                expr.add_constant(b, 1, P @ embed_a, w[2])
                right = np.hstack([w[0] * I, w[1] * I])
                if np.any(right):
                    expr.add_term(b, 0, Ks[p], left=PB, right=right)
                if w[2] != 0.0:
                    expr.add_term(b, 1, Ks[p], left=PB, scale=w[2])
            cons.append(lmi.Constraint(expr, lmi.PSD, f"{stage}[{p + 1}]"))
    for p, q in lmi.all_pairs(m):
        md = plant.mode(p)
        P = Ps[p]
        expr = lmi.BlockExpr([2 * n, 2 * n])
        expr.add_constant(0, 0, P, 1.0 + design.rho_u)
        expr.add_constant(1, 1, P)
        expr.add_constant(1, 0, P @ np.block([[md.A, Z], [Z, I]]))
        expr.add_term(1, 0, Ks[q], left=P @ np.vstack([md.B, np.zeros((n, nu))]),
                      right=np.hstack([np.zeros((n, n)), I]))
        cons.append(lmi.Constraint(expr, lmi.PSD, f"Omega[{p + 1},{q + 1}]"))
    problem = lmi.FeasibilityProblem(Ks + [eps], cons, 0.0)
    a, _ = lmi.best_margin(problem, (), replace(opts, margin_cap=1e3))
    return GainSet([a[k] for k in Ks])


def _lyapunov_step(plant, gains, attack, design, opts):
    """Best normalized analysis margin for fixed gains (``-inf`` when not Schur)."""
    if gains.schur_findings(plant):
        return None, -np.inf
    problem = assemble_analysis(plant, gains, attack, design, FULL, 0.0)
    Ps = [v for v in problem.variables if v.kind == "symmetric"]
    a, t = lmi.best_margin(problem, Ps, opts)
    return [np.asarray(a[v]) for v in Ps], t


def initial_gains(plant: SwitchedPlant) -> list[GainSet]:
    """Seeds for the iterative route: contracting gains and discrete LQR gains."""
    from scipy.linalg import solve_discrete_are

    seeds = []
    for shrink in (0.9, 0.7, 0.5):
        Ks = []
        for md in plant.modes:
            # least-squares gain driving A + BK toward shrink * A
            Ks.append(np.linalg.lstsq(md.B, (shrink - 1.0) * md.A, rcond=None)[0])
        seeds.append(GainSet(Ks))
    for r in (1.0, 0.1):
        Ks = []
        try:
            for md in plant.modes:
                R = r * np.eye(plant.n_u)
                X = solve_discrete_are(md.A, md.B, np.eye(plant.n_x), R)
                Ks.append(-np.linalg.solve(R + md.B.T @ X @ md.B, md.B.T @ X @ md.A))
        except (np.linalg.LinAlgError, ValueError):
            continue
        seeds.append(GainSet(Ks))
    return seeds


def refine_gains(plant: SwitchedPlant, gains: GainSet, attack: AttackParameters,
                 design: DesignParameters, opts: lmi.SolverOptions | None = None,
                 iterations: int = 40, target: float = 1e-4) -> tuple[GainSet, float, int]:
    """Alternate gain and Lyapunov steps from ``gains``.

    Each accepted step strictly raises the normalized analysis margin; a step is
    damped until it does. Stops at ``target`` margin, on stagnation, or after
    ``iterations`` rounds. Returns the best gains, their margin and the rounds used.
    """
    opts = opts or lmi.SolverOptions()
    Ps, t = _lyapunov_step(plant, gains, attack, design, opts)
    if Ps is None:
        return gains, t, 0
    it = 0
    for it in range(1, iterations + 1):
        if t >= target:
            break
        cand = _gain_step(plant, attack, design, Ps, opts)
        for lam in (1.0, 0.5, 0.25, 0.1):
            trial = GainSet([(1 - lam) * a + lam * b for a, b in zip(gains.K, cand.K)])
            P_new, t_new = _lyapunov_step(plant, trial, attack, design, opts)
            if t_new > t + 1e-9:
                break
        else:
            break
        gains, Ps, t = trial, P_new, t_new
    return gains, t, it


def synthesize_iterative(plant: SwitchedPlant, attack: AttackParameters, design: DesignParameters,
                         opts: lmi.SolverOptions | None = None, delta: float = 1e-6,
                         seeds: list[GainSet] | None = None,
                         iterations: int = 40) -> tuple[GainSet, SynthesisCertificate]:
    opts = opts or lmi.SolverOptions()
    problems = plant.findings() + attack.findings() + design.findings(attack)
    if problems:
        raise PreconditionFailed("; ".join(problems))
    best = None
    for seed in seeds if seeds is not None else initial_gains(plant):
        gains, t, used = refine_gains(plant, seed, attack, design, opts, iterations)
        if best is None or t > best[1]:
            best = (gains, t, used)
        if t <= 0.0:
            continue
        try:
            cert = analyze(plant, gains, attack, design, FULL, opts, delta)
        except (Infeasible, lmi.IterationLimit):
            continue
        return gains, SynthesisCertificate(
            eps=cert.eps, gains=gains, coefficients=coefficients(attack),
            problem=cert.problem, assignment=cert.assignment, report=cert.report,
            method=ITERATIVE, iterations=used, analysis=cert,
        )
    margin = -np.inf if best is None else best[1]
    raise Infeasible(f"iterative synthesis found no certifiable gains (best normalized margin {margin:.3e})",
                     margin)


def synthesize(plant: SwitchedPlant, attack: AttackParameters, design: DesignParameters,
               opts: lmi.SolverOptions | None = None, delta: float = 1e-6,
               method: str = AUTO) -> tuple[GainSet, SynthesisCertificate]:
    """Gains with a verified analysis certificate.

    ``congruence`` solves the slack-variable synthesis LMIs. ``iterative`` runs the
    alternating refinement. ``auto`` tries the former and falls back to the latter
    when it is infeasible. Either way the returned certificate's ``analysis`` field
    holds a verified analysis certificate for the gains.
    """
    if method not in METHODS:
        raise PreconditionFailed(f"unknown synthesis method {method!r}")
    opts = opts or lmi.SolverOptions()
    if method == AUTO:
        try:
            for md in plant.modes:
                input_normalizer(md.B)
        except RankDeficient:
            # the slack-variable route needs full-column-rank inputs; the iterative one does not
            method = ITERATIVE
    if method in (AUTO, CONGRUENCE):
        try:
            gains, cert = synthesize_congruence(plant, attack, design, opts, delta)
        except (Infeasible, SingularXi):
            if method == CONGRUENCE:
                raise
        else:
            cert.analysis = analyze(plant, gains, attack, design, FULL, opts, delta)
            return gains, cert
    return synthesize_iterative(plant, attack, design, opts, delta)


# --------------------------------------------------------------------- mixed switching

def assemble_mixed(plant: SwitchedPlant, gains: GainSet, attack: AttackParameters,
                      mixed: MixedParameters, delta: float = 1e-6):
    problems = plant.findings() + attack.findings() + mixed.findings() + gains.findings(plant)
    if problems:
        raise PreconditionFailed("; ".join(problems))
    n, m = plant.n_x, plant.m
    P = [lmi.symmetric(f"P{p + 1}", n) for p in range(m)]
    Q = [lmi.symmetric(f"Q{p + 1}", n) for p in range(m)]
    eps = lmi.scalar("eps")
    mean, cov = channel_moments(attack, SYNC)
    ex_x2 = mean[0] ** 2 + cov[0, 0]
    ex_a2 = mean[2] ** 2 + cov[2, 2]
    cons: list[lmi.Constraint] = []
    for p in range(m):
        A = plant.mode(p).A
        BK = plant.mode(p).B @ gains[p]
        expr = lmi.BlockExpr([n, n])
        expr.add_quadratic(0, 0, P[p], A, A)
        expr.add_term(0, 0, P[p], scale=-(1.0 - mixed.rho_s))
        expr.add_quadratic(0, 0, P[p], A, BK, 2.0 * mean[0])
        expr.add_quadratic(0, 0, P[p], BK, BK, ex_x2)
        expr.add_quadratic(0, 1, P[p], A, BK, mean[2])
        expr.add_quadratic(1, 1, P[p], BK, BK, ex_a2)
        expr.add_identity(1, eps, -1.0)
        cons.append(lmi.Constraint(expr, lmi.NSD, f"Lambda[{p + 1}]"))
    for p, q in lmi.all_pairs(m):
        expr = lmi.BlockExpr([n]).add_term(0, 0, P[q], scale=mixed.mu1).add_term(0, 0, P[p], scale=-1.0)
        cons.append(lmi.Constraint(expr, lmi.PSD, f"mu1[{p + 1},{q + 1}]"))
    for p, q in lmi.all_pairs(m):
        A = plant.mode(p).A
        expr = lmi.BlockExpr([n])
        expr.add_quadratic(0, 0, Q[p], A, A)
        expr.add_term(0, 0, Q[p], scale=-(1.0 + mixed.lam))
        expr.add_term(0, 0, Q[q], scale=mixed.lam * mixed.mu)
        cons.append(lmi.Constraint(expr, lmi.NSD, f"Qdecrease[{p + 1},{q + 1}]"))
    for p, q in lmi.all_pairs(m, include_equal=True):
        expr = lmi.BlockExpr([n]).add_term(0, 0, Q[p], scale=mixed.mu).add_term(0, 0, P[q], scale=-1.0)
        cons.append(lmi.Constraint(expr, lmi.NSD, f"muQ<=P[{p + 1},{q + 1}]"))
    for p, q in lmi.all_pairs(m, include_equal=True):
        expr = lmi.BlockExpr([n]).add_term(0, 0, Q[p], scale=mixed.mu2).add_term(0, 0, P[q], scale=-1.0)
        cons.append(lmi.Constraint(expr, lmi.PSD, f"mu2Q>=P[{p + 1},{q + 1}]"))
    for p in range(m):
        cons.append(lmi.Constraint(lmi.BlockExpr([n]).add_term(0, 0, P[p]), lmi.PSD, f"P{p + 1}>0"))
        cons.append(lmi.Constraint(lmi.BlockExpr([n]).add_term(0, 0, Q[p]), lmi.PSD, f"Q{p + 1}>0"))
    cons.append(lmi.Constraint(lmi.BlockExpr([1]).add_identity(0, eps), lmi.PSD, "eps>0"))
    return lmi.FeasibilityProblem(P + Q + [eps], cons, delta)


def mixed_dwell_times(mixed: MixedParameters) -> tuple[float, float]:
    """``(tau_d1*, tau_d2*)`` for the feedback and state-dependent laws."""
    ln_r = math.log(1.0 - mixed.rho_s)
    t1 = max(-math.log(mixed.mu1) / ln_r, -math.log(mixed.mu2) / ln_r)
    t2 = math.log(mixed.mu) / math.log(1.0 + mixed.lam)
    return t1, t2


@dataclass
class MixedSwitchingDesign:
    P: list[np.ndarray]
    Q: list[np.ndarray]
    eps: float
    tau_d1_star: float
    tau_d2_star: float
    params: MixedParameters
    gains: GainSet
    problem: lmi.FeasibilityProblem = field(repr=False)
    assignment: lmi.Assignment = field(repr=False)
    report: lmi.VerificationReport = field(repr=False)

    @property
    def tau_d1(self) -> int:
        return max(1, math.ceil(self.tau_d1_star))

    @property
    def tau_d2(self) -> int:
        return max(0, math.floor(self.tau_d2_star))


def design_mixed(plant: SwitchedPlant, gains: GainSet, attack: AttackParameters,
                 mixed: MixedParameters, opts: lmi.SolverOptions | None = None,
                 delta: float = 1e-6) -> MixedSwitchingDesign:
    opts = opts or lmi.SolverOptions()
    problem = assemble_mixed(plant, gains, attack, mixed, delta)
    a = lmi.solve_feasibility(problem, opts)
    report = lmi.verify(problem, a, opts.verify_tol)
    m = plant.m
    t1, t2 = mixed_dwell_times(mixed)
    return MixedSwitchingDesign(
        P=[np.asarray(a[problem.variable(f"P{p + 1}")]) for p in range(m)],
        Q=[np.asarray(a[problem.variable(f"Q{p + 1}")]) for p in range(m)],
        eps=float(a.by_name("eps")), tau_d1_star=t1, tau_d2_star=t2, params=mixed,
        gains=gains, problem=problem, assignment=a, report=report,
    )
