"""
Dense two-phase tableau simplex with Bland's pivoting rule.

Solves small problems of the form

    maximize  c^T x
    s.t.      A_ub x <= b_ub,  A_eq x = b_eq,  x >= 0

Bland's rule (lowest index enters, lowest basic index leaves on ties) rules
out cycling, and every solution returned is a vertex of the feasible set.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .errors import HromError

logger = logging.getLogger(__name__)

TOLERANCE = 1e-9


class UnboundedError(HromError):
    kind = "unbounded"


class InfeasibleError(HromError):
    kind = "infeasible"


@dataclass
class LinearProgram:
    c: np.ndarray
    A_ub: Optional[np.ndarray] = None
    b_ub: Optional[np.ndarray] = None
    A_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return int(np.asarray(self.c).size)


@dataclass
class SimplexResult:
    x: np.ndarray
    objective: float
    unique: bool
    iterations: int


def _rows(A: Optional[np.ndarray], b: Optional[np.ndarray], n: int):
    if A is None:
        return np.zeros((0, n)), np.zeros(0)
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if A.shape != (b.size, n):
        raise ValueError(f"Constraint matrix {A.shape} does not match {b.size} rows and {n} variables")
    return A, b


class _Tableau:
    """Rows are constraints, the last row holds reduced costs and -objective."""

    def __init__(self, table: np.ndarray, basis: List[int]):
        self.table = table
        self.basis = basis
        self.iterations = 0

    @property
    def costs(self) -> np.ndarray:
        return self.table[-1, :-1]

    def set_objective(self, c: np.ndarray) -> None:
        self.table[-1] = 0.0
        self.table[-1, : c.size] = c
        for row, var in enumerate(self.basis):
            if self.table[-1, var] != 0.0:
                self.table[-1] -= self.table[-1, var] * self.table[row]

    def pivot(self, row: int, col: int) -> None:
        T = self.table
        T[row] /= T[row, col]
        factors = T[:, col].copy()
        factors[row] = 0.0
        T -= np.outer(factors, T[row])
        self.basis[row] = col
        self.iterations += 1

    def optimize(self, columns: int, limit: int) -> None:
        T = self.table
        for _ in range(limit):
            improving = np.flatnonzero(self.costs[:columns] > TOLERANCE)
            if improving.size == 0:
                return
            col = int(improving[0])
            entries = T[:-1, col]
            candidates = np.flatnonzero(entries > TOLERANCE)
            if candidates.size == 0:
                raise UnboundedError(f"Objective is unbounded along variable {col}")
            ratios = T[candidates, -1] / entries[candidates]
            best = ratios.min()
            tied = candidates[ratios <= best + TOLERANCE]
            row = int(min(tied, key=lambda r: self.basis[r]))
            self.pivot(row, col)
        raise HromError(f"Simplex did not terminate within {limit} pivots")


def solve(lp: LinearProgram) -> SimplexResult:
    """Maximize ``lp`` and report whether the optimal vertex is unique."""
    c = np.asarray(lp.c, dtype=np.float64).reshape(-1)
    n = c.size
    A_ub, b_ub = _rows(lp.A_ub, lp.b_ub, n)
    A_eq, b_eq = _rows(lp.A_eq, lp.b_eq, n)
    n_ub, n_eq = b_ub.size, b_eq.size
    n_rows = n_ub + n_eq

    # Standard form columns: x | slacks | artificials | rhs
    A = np.vstack([A_ub, A_eq])
    b = np.concatenate([b_ub, b_eq])
    slack = np.vstack([np.eye(n_ub), np.zeros((n_eq, n_ub))])
    flip = b < 0
    A[flip] *= -1
    slack[flip] *= -1
    b[flip] *= -1

    needs_artificial = [row for row in range(n_rows) if row >= n_ub or flip[row]]
    n_art = len(needs_artificial)
    art = np.zeros((n_rows, n_art))
    basis = []
    for row in range(n_rows):
        if row in needs_artificial:
            k = needs_artificial.index(row)
            art[row, k] = 1.0
            basis.append(n + n_ub + k)
        else:
            basis.append(n + row)

    table = np.zeros((n_rows + 1, n + n_ub + n_art + 1))
    table[:-1, :n] = A
    table[:-1, n : n + n_ub] = slack
    table[:-1, n + n_ub : -1] = art
    table[:-1, -1] = b
    tableau = _Tableau(table, basis)
    real = n + n_ub
    limit = 50 * (n_rows + real + n_art + 1)

    if n_art:
        phase_one = np.zeros(real + n_art)
        phase_one[real:] = -1.0
        tableau.set_objective(phase_one)
        tableau.optimize(real + n_art, limit)
        if -tableau.table[-1, -1] < -TOLERANCE * max(1.0, float(np.abs(b).max(initial=0.0))):
            raise InfeasibleError("Linear program has no feasible point")
        _drive_out_artificials(tableau, real)
        table = tableau.table
        tableau.table = np.hstack([table[:, :real], table[:, -1:]])

    tableau.set_objective(np.concatenate([c, np.zeros(n_ub)]))
    tableau.optimize(real, limit)

    x = np.zeros(real)
    for row, var in enumerate(tableau.basis):
        x[var] = tableau.table[row, -1]
    nonbasic = np.setdiff1d(np.arange(real), tableau.basis)
    unique = bool(np.all(tableau.costs[nonbasic] < -TOLERANCE))
    objective = float(c @ x[:n])
    logger.debug(
        "Simplex: %d rows, %d variables, objective %.6g after %d pivots (unique=%s)",
        n_rows, n, objective, tableau.iterations, unique,
    )
    return SimplexResult(x[:n], objective, unique, tableau.iterations)


def _drive_out_artificials(tableau: _Tableau, real: int) -> None:
    """Pivot basic artificials out after phase one; drop rows that are redundant."""
    row = 0
    while row < len(tableau.basis):
        if tableau.basis[row] < real:
            row += 1
            continue
        entries = np.abs(tableau.table[row, :real])
        candidates = np.flatnonzero(entries > TOLERANCE)
        if candidates.size:
            tableau.pivot(row, int(candidates[0]))
            row += 1
        else:
            tableau.table = np.delete(tableau.table, row, axis=0)
            del tableau.basis[row]
