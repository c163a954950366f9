"""Conic solver contract: LMI containers, solving, and independent verification.

All semidefinite programs in this package are assembled as lists of
:class:`LMI` blocks over cvxpy expressions and solved through
:func:`solve_sdp`.  A returned "optimal" point is re-checked with a plain
eigenvalue decomposition of every block at the numeric solution; points
that fail the margin are downgraded, never silently accepted.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

# Margin used when re-checking LMI blocks at a numeric point.
VERIFY_MARGIN = 1e-6
# Strict inequalities (< 0) are implemented as <= -STRICT_SHIFT * scale * I.
STRICT_SHIFT = 1e-8

DEFAULT_SOLVER = "CLARABEL"


@dataclass
class LMI:
    """One matrix inequality block.

    ``matrix`` is a square cvxpy expression (or ndarray when fully numeric),
    required to be PSD (``cone="psd"``) or negative definite with margin
    (``cone="nsd"``).
    """

    matrix: object
    cone: str = "psd"
    name: str = ""
    shift: float = 0.0  # absolute margin added to the cone constraint

    def constraint(self):
        m = self.matrix
        size = m.shape[0]
        if self.cone == "psd":
            return m >> self.shift * np.eye(size)
        if self.cone == "nsd":
            return m << -self.shift * np.eye(size)
        raise ValueError(f"unknown cone tag {self.cone!r}")

    def value(self):
        """Numeric value of the block at the current variable point."""
        if isinstance(self.matrix, np.ndarray):
            return self.matrix
        return self.matrix.value

    def check(self, margin: float = VERIFY_MARGIN) -> bool:
        val = self.value()
        if val is None:
            return False
        val = np.asarray(val, dtype=float)
        val = (val + val.T) / 2
        eigs = np.linalg.eigvalsh(val)
        if self.cone == "psd":
            return eigs.min() >= -margin * max(1.0, np.abs(val).max())
        return eigs.max() <= margin * max(1.0, np.abs(val).max())


@dataclass
class SDPResult:
    status: str  # optimal | infeasible | numerical-failure
    objective: float | None = None
    values: dict = field(default_factory=dict)
    failed_blocks: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


def solve_sdp(objective, lmis, variables=None, extra_constraints=(),
              solver: str = DEFAULT_SOLVER, verify: bool = True) -> SDPResult:
    """Solve ``min objective`` subject to the LMI blocks.

    ``objective`` may be None for a pure feasibility problem.  On success the
    solution is re-verified block by block; a violation beyond the contract
    margin downgrades the status to "numerical-failure".
    """
    cons = [l.constraint() for l in lmis] + list(extra_constraints)
    obj = cp.Minimize(objective if objective is not None else 0)
    prob = cp.Problem(obj, cons)
    try:
        prob.solve(solver=solver)
    except (KeyboardInterrupt, SystemExit):
        raise
    except BaseException:
        # solver backends fail in many shapes, including panics raised from
        # compiled code that do not derive from Exception; all of them mean
        # the same thing here
        return SDPResult(status="numerical-failure")
    if prob.status in ("infeasible", "infeasible_inaccurate"):
        return SDPResult(status="infeasible")
    if prob.status not in ("optimal", "optimal_inaccurate"):
        return SDPResult(status="numerical-failure")
    values = {}
    if variables:
        for name, var in variables.items():
            if var.value is None:
                return SDPResult(status="numerical-failure")
            values[name] = np.array(var.value, dtype=float)
    result = SDPResult(status="optimal", objective=prob.value, values=values)
    if verify:
        failed = [l.name for l in lmis if not l.check()]
        if failed:
            result.status = "numerical-failure"
            result.failed_blocks = failed
    return result


def block_diag_expr(blocks):
    """cp.bmat block diagonal from a list of square blocks (cvxpy or ndarray)."""
    rows = []
    for i, bi in enumerate(blocks):
        row = []
        for j, bj in enumerate(blocks):
            if i == j:
                row.append(bi)
            else:
                row.append(np.zeros((bi.shape[0], bj.shape[0])))
        rows.append(row)
    return cp.bmat(rows)


def is_psd(mat: np.ndarray, tol: float = 1e-9) -> bool:
    mat = np.asarray(mat, dtype=float)
    sym = (mat + mat.T) / 2
    return np.linalg.eigvalsh(sym).min() >= -tol * max(1.0, np.abs(sym).max())


def real_part_of_hermitian(mat: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Real part of a Hermitian matrix, asserting Hermitian symmetry first.

    Restricted to real test vectors, ``x' Re(M) x == x' M x`` for Hermitian M,
    which is what the real-valued LMIs need.  Discarding a non-Hermitian
    imaginary part would be silent corruption, hence the check.
    """
    mat = np.asarray(mat)
    herm_err = np.abs(mat - mat.conj().T).max()
    if herm_err > tol * max(1.0, np.abs(mat).max()):
        raise ValueError(f"matrix is not Hermitian (asymmetry {herm_err:.3g})")
    re = np.real(mat)
    return (re + re.T) / 2
