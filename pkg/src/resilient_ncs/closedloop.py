"""Augmented closed-loop matrices and an exact one-step expectation oracle.

The augmented state is ``x_tilde(k) = [x(k); x_bar(k-1)]`` where ``x_bar`` is the
controller's copy of the state. Per step the channel delivers

    x_bar(k) = c_x * x(k) + c_p * x_bar(k-1) + c_a * x_a(k)

with ``(c_x, c_p, c_a)`` one of the channel outcomes listed by
:func:`channel_outcomes`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch
from .model import MUTUALLY_EXCLUSIVE, AttackParameters, GainSet, SwitchedPlant
from .numerics import as_symmetric, assemble_block

SYNC = "sync"
RESYNC = "resync"


@dataclass(frozen=True)
class SyncMatrices:
    A1: np.ndarray
    A2: np.ndarray
    A3: np.ndarray
    A4: np.ndarray
    chi3: float


@dataclass(frozen=True)
class ResyncMatrices:
    At1: np.ndarray
    At2: np.ndarray
    At3: np.ndarray


@dataclass(frozen=True)
class ChannelOutcome:
    prob: float
    alpha: int
    beta: int
    c_x: float
    c_p: float
    c_a: float
    chi1: float = 0.0
    chi2: float = 0.0


def _blocks(plant: SwitchedPlant, gains: GainSet, p: int):
    md = plant.mode(p)
    BK = md.B @ gains[p]
    return md.A, BK, np.eye(plant.n_x)


def sync_matrices(plant: SwitchedPlant, gains: GainSet, attack: AttackParameters, p: int) -> SyncMatrices:
    A, BK, I = _blocks(plant, gains, p)
    chi3, bb = attack.chi3, attack.beta_bar
    A1 = assemble_block([[A + chi3 * BK, bb * BK], [chi3 * I, bb * I]])
    A2 = assemble_block([[0 * I, BK], [0 * I, I]])
    A3 = assemble_block([[BK, 0 * I], [I, 0 * I]])
    A4 = assemble_block([[BK], [I]])
    return SyncMatrices(A1, A2, A3, A4, chi3)


def async_matrix(plant: SwitchedPlant, gains: GainSet, p: int, q: int) -> np.ndarray:
    """Plant in mode ``p`` driven by the held gain of mode ``q`` while jammed."""
    md = plant.mode(p)
    K = gains[q]
    I = np.eye(plant.n_x)
    return assemble_block([[md.A, md.B @ K], [0 * I, I]])


def resync_matrices(plant: SwitchedPlant, gains: GainSet, attack: AttackParameters, p: int) -> ResyncMatrices:
    A, BK, I = _blocks(plant, gains, p)
    a = 1.0 - attack.alpha_bar
    At1 = assemble_block([[A + a * BK, 0 * I], [a * I, 0 * I]])
    At2 = assemble_block([[BK, 0 * I], [I, 0 * I]])
    At3 = assemble_block([[BK], [I]])
    return ResyncMatrices(At1, At2, At3)


def channel_outcomes(attack: AttackParameters, stage: str) -> list[ChannelOutcome]:
    """Every (alpha, beta) outcome with its probability and channel coefficients.

    The resync stage conditions on a successful transmission (beta = 0); under
    mutually-exclusive coupling this renormalizes the deception probability to
    ``alpha_bar / (1 - beta_bar)``.
    """
    ab, bb = attack.alpha_bar, attack.beta_bar
    excl = attack.coupling == MUTUALLY_EXCLUSIVE
    if stage == SYNC:
        if excl:
            probs = {(0, 0): 1.0 - ab - bb, (1, 0): ab, (0, 1): bb}
        else:
            probs = {(a, b): (ab if a else 1 - ab) * (bb if b else 1 - bb) for a in (0, 1) for b in (0, 1)}
    elif stage == RESYNC:
        pa = ab / (1.0 - bb) if excl and bb < 1.0 else ab
        probs = {(0, 0): 1.0 - pa, (1, 0): pa}
    else:
        raise ValueError(f"unknown stage {stage!r}")
    out = []
    for (a, b), pr in probs.items():
        out.append(ChannelOutcome(
            prob=pr, alpha=a, beta=b,
            c_x=(1 - a) * (1 - b), c_p=float(b), c_a=a * (1 - b),
            chi1=a - ab + b - bb - a * b + ab * bb,
            chi2=a - ab - a * b + ab * bb,
        ))
    return out


def expected_step_quadratic(P, stage: str, plant: SwitchedPlant, gains: GainSet,
                            attack: AttackParameters, x_tilde, x_a, p: int = 0) -> float:
    """``E[x_tilde(k+1)^T P x_tilde(k+1)]`` by enumerating channel outcomes."""
    n = plant.n_x
    P = as_symmetric(P, "P")
    xt = np.asarray(x_tilde, dtype=float).ravel()
    xa = np.asarray(x_a, dtype=float).ravel()
    if P.shape != (2 * n, 2 * n) or xt.size != 2 * n or xa.size != n:
        raise DimensionMismatch("P must be 2n x 2n, x_tilde length 2n, x_a length n")
    md = plant.mode(p)
    K = gains[p]
    x, xbar_prev = xt[:n], xt[n:]
    total = 0.0
    for o in channel_outcomes(attack, stage):
        if o.prob == 0.0:
            continue
        xbar = o.c_x * x + o.c_p * xbar_prev + o.c_a * xa
        nxt = np.concatenate([md.A @ x + md.B @ (K @ xbar), xbar])
        total += o.prob * float(nxt @ P @ nxt)
    return total
