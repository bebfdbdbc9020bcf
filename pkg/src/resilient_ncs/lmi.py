"""Affine linear matrix inequalities over structured matrix variables.

A :class:`BlockExpr` is a symmetric block grid whose cells are affine in the
decision variables. Only the upper triangle is stored; the lower triangle is
implied by transposition. Diagonal cells contribute their symmetric part, so a
cross term such as ``2 A^T X B`` written on the diagonal means
``A^T X B + B^T X A``.

Feasibility is discharged by maximizing the smallest constraint margin with the
dense primal-dual SDP solver shipped in ``cvxopt``; every answer is re-checked
by :func:`verify`, which only uses :func:`evaluate` and eigenvalues.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import DimensionMismatch, Infeasible, IterationLimit, MissingVariable
from .numerics import as_matrix, extreme_eigenvalues

NSD = "nsd"
PSD = "psd"

_ids = itertools.count()


@dataclass(frozen=True, eq=False)
class Variable:
    """A decision variable. Compared and hashed by identity."""

    name: str
    kind: str
    shape: tuple[int, int]
    zero_mask: np.ndarray | None = None
    uid: int = field(default_factory=lambda: next(_ids))

    @property
    def free_entries(self) -> list[tuple[int, int]]:
        r, c = self.shape
        if self.kind == "scalar":
            return [(0, 0)]
        if self.kind == "symmetric":
            return [(i, j) for i in range(r) for j in range(i, r)]
        mask = self.zero_mask if self.zero_mask is not None else np.zeros(self.shape, bool)
        return [(i, j) for i in range(r) for j in range(c) if not mask[i, j]]

    @property
    def size(self) -> int:
        return len(self.free_entries)

    def basis(self) -> list[np.ndarray]:
        out = []
        for i, j in self.free_entries:
            b = np.zeros(self.shape)
            b[i, j] = 1.0
            if self.kind == "symmetric":
                b[j, i] = 1.0
            out.append(b)
        return out

    def from_vector(self, vec: Sequence[float]):
        if self.kind == "scalar":
            return float(vec[0])
        out = np.zeros(self.shape)
        for (i, j), v in zip(self.free_entries, vec):
            out[i, j] = v
            if self.kind == "symmetric":
                out[j, i] = v
        return out

    def as_matrix(self, value) -> np.ndarray:
        if self.kind == "scalar":
            return np.array([[float(value)]])
        val = as_matrix(value, self.name)
        if val.shape != self.shape:
            raise DimensionMismatch(f"{self.name}: value shape {val.shape} != {self.shape}")
        return val

    def check_value(self, value) -> list[str]:
        """Structural problems with ``value`` (asymmetry, nonzero masked entries)."""
        val = self.as_matrix(value)
        issues = []
        if self.kind == "symmetric" and np.max(np.abs(val - val.T), initial=0.0) > 0:
            issues.append(f"{self.name} is not symmetric")
        if self.zero_mask is not None and np.any(val[self.zero_mask] != 0.0):
            issues.append(f"{self.name} violates its zero mask")
        return issues

    def __repr__(self) -> str:
        return f"Variable({self.name!r}, {self.kind}, {self.shape})"


def scalar(name: str) -> Variable:
    return Variable(name, "scalar", (1, 1))


def symmetric(name: str, n: int) -> Variable:
    return Variable(name, "symmetric", (n, n))


def rectangular(name: str, rows: int, cols: int, zero_mask=None) -> Variable:
    mask = None if zero_mask is None else np.array(zero_mask, dtype=bool)
    if mask is not None and mask.shape != (rows, cols):
        raise DimensionMismatch(f"{name}: zero mask shape {mask.shape} != {(rows, cols)}")
    return Variable(name, "rectangular", (rows, cols), mask)


@dataclass(frozen=True)
class Term:
    """``scale * left @ X @ right`` (``X.T`` when ``transpose``)."""

    variable: Variable
    left: np.ndarray | None = None
    right: np.ndarray | None = None
    scale: float = 1.0
    transpose: bool = False

    def shape(self) -> tuple[int, int]:
        r, c = self.variable.shape
        if self.transpose:
            r, c = c, r
        rows = r if self.left is None else self.left.shape[0]
        cols = c if self.right is None else self.right.shape[1]
        if self.left is not None and self.left.shape[1] != r:
            raise DimensionMismatch(f"left factor does not match {self.variable.name}")
        if self.right is not None and self.right.shape[0] != c:
            raise DimensionMismatch(f"right factor does not match {self.variable.name}")
        return rows, cols

    def apply(self, X: np.ndarray) -> np.ndarray:
        out = X.T if self.transpose else X
        if self.left is not None:
            out = self.left @ out
        if self.right is not None:
            out = out @ self.right
        return self.scale * out

    def transposed(self) -> "Term":
        return Term(
            self.variable,
            None if self.right is None else self.right.T,
            None if self.left is None else self.left.T,
            self.scale,
            not self.transpose,
        )


@dataclass
class Cell:
    constant: np.ndarray | None = None
    terms: list[Term] = field(default_factory=list)


class BlockExpr:
    """Symmetric block matrix affine in the decision variables.

    ``sizes`` gives the dimension of each block row (equal to the block column).
    """

    def __init__(self, sizes: Sequence[int]):
        self.sizes = [int(s) for s in sizes]
        self.offsets = np.concatenate([[0], np.cumsum(self.sizes)]).astype(int)
        self.cells: dict[tuple[int, int], Cell] = {}

    @property
    def dim(self) -> int:
        return int(self.offsets[-1])

    def _cell(self, i: int, j: int) -> Cell:
        return self.cells.setdefault((i, j), Cell())

    def _check(self, i: int, j: int, shape: tuple[int, int]) -> None:
        if shape != (self.sizes[i], self.sizes[j]):
            raise DimensionMismatch(
                f"cell ({i},{j}) expects {(self.sizes[i], self.sizes[j])}, got {shape}"
            )

    def add_constant(self, i: int, j: int, M, scale: float = 1.0) -> "BlockExpr":
        M = scale * as_matrix(M)
        if i > j:
            i, j, M = j, i, M.T
        self._check(i, j, M.shape)
        cell = self._cell(i, j)
        cell.constant = M if cell.constant is None else cell.constant + M
        return self

    def add_term(self, i: int, j: int, variable: Variable, left=None, right=None,
                 scale: float = 1.0, transpose: bool = False) -> "BlockExpr":
        """Add ``scale * left @ X @ right`` to cell (i, j)."""
        term = Term(
            variable,
            None if left is None else as_matrix(left),
            None if right is None else as_matrix(right),
            float(scale),
            transpose,
        )
        if i > j:
            i, j, term = j, i, term.transposed()
        self._check(i, j, term.shape())
        self._cell(i, j).terms.append(term)
        return self

    def add_quadratic(self, i: int, j: int, variable: Variable, L, R, scale: float = 1.0) -> "BlockExpr":
        """Add ``scale * L^T @ X @ R``."""
        return self.add_term(i, j, variable, as_matrix(L).T, R, scale)

    def add_identity(self, i: int, variable: Variable, scale: float = 1.0) -> "BlockExpr":
        """Add ``scale * x * I`` for a scalar variable on diagonal block ``i``."""
        if variable.kind != "scalar":
            raise DimensionMismatch("identity terms need a scalar variable")
        n = self.sizes[i]
        # x * I_n written as sum_k e_k x e_k^T keeps the term exact
        for k in range(n):
            e = np.zeros((n, 1))
            e[k, 0] = 1.0
            self._cell(i, i).terms.append(Term(variable, e, e.T, float(scale)))
        return self

    def variables(self) -> list[Variable]:
        seen: dict[int, Variable] = {}
        for cell in self.cells.values():
            for t in cell.terms:
                seen.setdefault(t.variable.uid, t.variable)
        return list(seen.values())

    def _place(self, out: np.ndarray, i: int, j: int, block: np.ndarray) -> None:
        r0, r1 = self.offsets[i], self.offsets[i + 1]
        c0, c1 = self.offsets[j], self.offsets[j + 1]
        if i == j:
            out[r0:r1, c0:c1] += 0.5 * (block + block.T)
        else:
            out[r0:r1, c0:c1] += block
            out[c0:c1, r0:r1] += block.T

    def constant_part(self) -> np.ndarray:
        out = np.zeros((self.dim, self.dim))
        for (i, j), cell in self.cells.items():
            if cell.constant is not None:
                self._place(out, i, j, cell.constant)
        return out

    def coefficient_matrices(self, variable: Variable) -> list[np.ndarray]:
        """One matrix per free coordinate of ``variable`` (the linear part)."""
        basis = variable.basis()
        mats = [np.zeros((self.dim, self.dim)) for _ in basis]
        for (i, j), cell in self.cells.items():
            for t in cell.terms:
                if t.variable is not variable:
                    continue
                for k, b in enumerate(basis):
                    self._place(mats[k], i, j, t.apply(b))
        return mats


class Assignment(dict):
    """Mapping ``Variable -> value`` (float for scalars, array otherwise)."""

    def by_name(self, name: str):
        for var, val in self.items():
            if var.name == name:
                return val
        raise MissingVariable(name)

    def to_vector(self, variables: Sequence[Variable]) -> np.ndarray:
        parts = []
        for var in variables:
            M = var.as_matrix(self[var])
            parts.append([M[i, j] for i, j in var.free_entries])
        return np.concatenate(parts) if parts else np.zeros(0)

    @classmethod
    def from_vector(cls, variables: Sequence[Variable], vec: np.ndarray) -> "Assignment":
        out, k = cls(), 0
        for var in variables:
            out[var] = var.from_vector(vec[k:k + var.size])
            k += var.size
        return out


def evaluate(expr: BlockExpr, assignment: Mapping[Variable, object]) -> np.ndarray:
    """Substitute ``assignment`` into ``expr`` and return the symmetric result."""
    out = expr.constant_part()
    for (i, j), cell in expr.cells.items():
        if not cell.terms:
            continue
        block = np.zeros((expr.sizes[i], expr.sizes[j]))
        for t in cell.terms:
            if t.variable not in assignment:
                raise MissingVariable(t.variable.name)
            block += t.apply(t.variable.as_matrix(assignment[t.variable]))
        expr._place(out, i, j, block)
    return 0.5 * (out + out.T)


@dataclass
class Constraint:
    expr: BlockExpr
    sense: str
    name: str

    def __post_init__(self):
        if self.sense not in (NSD, PSD):
            raise ValueError(f"unknown sense {self.sense!r}")


@dataclass
class FeasibilityProblem:
    """Constraints ``expr <= -delta I`` (NSD) or ``expr >= delta I`` (PSD)."""

    variables: list[Variable]
    constraints: list[Constraint]
    delta: float = 1e-6

    def __post_init__(self):
        declared = {v.uid for v in self.variables}
        for con in self.constraints:
            for v in con.expr.variables():
                if v.uid not in declared:
                    raise MissingVariable(f"{v.name} used in {con.name} is not declared")

    def variable(self, name: str) -> Variable:
        for v in self.variables:
            if v.name == name:
                return v
        raise MissingVariable(name)

    def names(self) -> list[str]:
        return [c.name for c in self.constraints]


@dataclass(frozen=True)
class ConstraintCheck:
    name: str
    sense: str
    worst_eigenvalue: float
    margin: float
    passed: bool


@dataclass
class VerificationReport:
    checks: list[ConstraintCheck]
    delta: float
    tol: float
    structural_issues: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.structural_issues and all(c.passed for c in self.checks)

    @property
    def min_margin(self) -> float:
        return min((c.margin for c in self.checks), default=np.inf)

    def most_violated(self) -> ConstraintCheck | None:
        return min(self.checks, key=lambda c: c.margin, default=None)

    def failed(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]


def verify(problem: FeasibilityProblem, assignment: Mapping[Variable, object],
           tol: float = 1e-9) -> VerificationReport:
    issues = []
    for var in problem.variables:
        if var not in assignment:
            raise MissingVariable(var.name)
        issues.extend(var.check_value(assignment[var]))
    checks = []
    for con in problem.constraints:
        lo, hi = extreme_eigenvalues(evaluate(con.expr, assignment))
        if con.sense == NSD:
            worst, margin = hi, -hi
        else:
            worst, margin = lo, lo
        checks.append(ConstraintCheck(con.name, con.sense, worst, margin,
                                      margin >= problem.delta - tol))
    return VerificationReport(checks, problem.delta, tol, issues)


@dataclass(frozen=True)
class SolverOptions:
    max_iterations: int = 200
    tolerance: float = 1e-9
    margin: float | None = None
    bound: float = 1e4
    margin_cap: float = 1.0
    verify_tol: float = 1e-9


# An objective maps variables to weights: weight*x for scalars, weight*trace(X) otherwise.
Objective = Mapping[Variable, float]
Backend = Callable[[FeasibilityProblem, SolverOptions, "Objective | None"], Assignment]


def _linearize(problem: FeasibilityProblem):
    """Per constraint: (F0, [F_k]) in the NSD orientation, columns over all coordinates."""
    out = []
    for con in problem.constraints:
        F0 = con.expr.constant_part()
        cols = []
        for var in problem.variables:
            cols.extend(con.expr.coefficient_matrices(var))
        if con.sense == PSD:
            F0 = -F0
            cols = [-c for c in cols]
        out.append((F0, cols))
    return out


def _cvxopt_solve(problem: FeasibilityProblem, opts: SolverOptions, objective: Objective | None,
                  normalize: Sequence[Variable] = ()):
    import cvxopt
    from cvxopt import solvers

    n_x = sum(v.size for v in problem.variables)
    with_t = objective is None
    n_z = n_x + (1 if with_t else 0)
    margin = problem.delta if opts.margin is None else opts.margin
    Gs, hs = [], []
    for F0, cols in _linearize(problem):
        d = F0.shape[0]
        G = np.zeros((d * d, n_z))
        for k, Fk in enumerate(cols):
            G[:, k] = Fk.reshape(-1, order="F")
        if with_t:
            G[:, n_x] = np.eye(d).reshape(-1, order="F")
            h = -F0
        else:
            # keep some slack above the requested margin for the verification pass
            h = -F0 - 2.0 * margin * np.eye(d)
        Gs.append(cvxopt.matrix(G))
        hs.append(cvxopt.matrix(h))
    Gl = np.vstack([np.eye(n_x, n_z), -np.eye(n_x, n_z)])
    hl = np.full(2 * n_x, opts.bound)
    c = np.zeros(n_z)
    eq = {}
    if with_t and normalize:
        # sum of traces fixed to one; the margin is then scale free and may go negative
        A = np.zeros((1, n_z))
        k = 0
        for var in problem.variables:
            for (i, j) in var.free_entries:
                if var in normalize and (var.kind == "scalar" or i == j):
                    A[0, k] = 1.0
                k += 1
        eq = {"A": cvxopt.matrix(A), "b": cvxopt.matrix([1.0])}
        c[n_x] = -1.0
    elif with_t:
        cap = np.zeros((1, n_z))
        cap[0, n_x] = 1.0
        Gl = np.vstack([Gl, cap])
        hl = np.append(hl, opts.margin_cap)
        c[n_x] = -1.0
    else:
        k = 0
        for var in problem.variables:
            w = float(objective.get(var, 0.0))
            for (i, j) in var.free_entries:
                if var.kind == "scalar" or i == j:
                    c[k] = w
                k += 1
    saved = dict(solvers.options)
    solvers.options.update(show_progress=False, maxiters=opts.max_iterations,
                           abstol=opts.tolerance, reltol=opts.tolerance, feastol=opts.tolerance)
    try:
        sol = solvers.sdp(cvxopt.matrix(c), Gl=cvxopt.matrix(Gl), hl=cvxopt.matrix(hl),
                          Gs=Gs, hs=hs, **eq)
    except (ArithmeticError, ValueError) as exc:
        return None, "error", str(exc)
    finally:
        solvers.options.clear()
        solvers.options.update(saved)
    if sol["x"] is None:
        return None, sol["status"], ""
    z = np.array(sol["x"]).ravel()
    return z[:n_x], sol["status"], ""


def best_margin(problem: FeasibilityProblem, normalize: Sequence[Variable] = (),
                opts: SolverOptions | None = None) -> tuple[Assignment, float]:
    """Maximize the smallest margin with the traces of ``normalize`` summing to one.

    With nothing to normalize the margin is capped at ``opts.margin_cap`` instead.
    Unlike :func:`solve_feasibility` this never raises on a negative optimum, so it
    grades how far an infeasible homogeneous problem is from feasibility. The
    returned margin is measured by :func:`verify`.
    """
    opts = opts or SolverOptions()
    x, status, msg = _cvxopt_solve(problem, opts, None, tuple(normalize))
    if x is None:
        raise IterationLimit(f"solver stopped with status {status!r} {msg}".strip())
    assignment = Assignment.from_vector(problem.variables, x)
    return assignment, verify(problem, assignment, opts.verify_tol).min_margin


def cvxopt_backend(problem: FeasibilityProblem, opts: SolverOptions,
                   objective: Objective | None = None) -> Assignment:
    """Reference backend: maximize the minimum margin (or minimize ``objective``)."""
    x, status, msg = _cvxopt_solve(problem, opts, objective)
    if x is None:
        if objective is not None and status in ("primal infeasible", "dual infeasible"):
            raise Infeasible(f"no point meets every constraint with margin {problem.delta:g}")
        raise IterationLimit(f"solver stopped with status {status!r} {msg}".strip())
    assignment = Assignment.from_vector(problem.variables, x)
    report = verify(problem, assignment, opts.verify_tol)
    if report.passed:
        return assignment
    worst = report.most_violated()
    diag = (f"most violated constraint {worst.name!r} with margin {worst.margin:.3e} "
            f"(required {problem.delta:g})")
    if status == "optimal":
        raise Infeasible(diag, worst.margin)
    raise IterationLimit(f"solver status {status!r}; {diag}", worst.margin)


def solve_feasibility(problem: FeasibilityProblem, opts: SolverOptions | None = None,
                      objective: Objective | None = None,
                      backend: Backend | None = None) -> Assignment:
    """Find an assignment that :func:`verify` accepts.

    Raises :class:`Infeasible` when the best achievable margin is below
    ``problem.delta`` and :class:`IterationLimit` when the search was inconclusive.
    """
    opts = opts or SolverOptions()
    return (backend or cvxopt_backend)(problem, opts, objective)


def all_pairs(m: int, include_equal: bool = False) -> Iterable[tuple[int, int]]:
    for p in range(m):
        for q in range(m):
            if p != q or include_equal:
                yield p, q
