"""Small equality-form LPs ``min c^T x  s.t.  A x = b, x >= 0`` via HiGHS.

The limiters and realizability checks only need this one shape, so the
wrapper fixes the bounds and tightens HiGHS' default tolerances, which are
too loose for comparing damping factors to 1e-8.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

TOL = 1e-10
_OPTIONS = {"primal_feasibility_tolerance": TOL, "dual_feasibility_tolerance": TOL}
_STATUS = {0: "optimal", 1: "iteration_limit", 2: "infeasible", 3: "unbounded", 4: "numerical"}


class LPIterationLimit(RuntimeError):
    pass


@dataclass
class LPResult:
    status: str  # "optimal", "infeasible", "unbounded", "numerical"
    x: np.ndarray | None
    objective: float


def simplex(c, A, b, max_iter: int | None = None) -> LPResult:
    """Solve the equality-form LP; raise LPIterationLimit past ``max_iter``."""
    options = dict(_OPTIONS)
    if max_iter is not None:
        options["maxiter"] = int(max_iter)
    res = linprog(np.asarray(c, dtype=float), A_eq=np.asarray(A, dtype=float), b_eq=np.asarray(b, dtype=float),
                  bounds=(0, None), method="highs", options=options)
    status = _STATUS.get(res.status, "numerical")
    if status == "iteration_limit":
        raise LPIterationLimit(f"LP exceeded {max_iter} iterations")
    if status != "optimal":
        return LPResult(status, None, np.inf if status == "infeasible" else -np.inf)
    return LPResult(status, np.maximum(res.x, 0.0), float(res.fun))


def feasible_nonnegative(B: np.ndarray, u: np.ndarray, max_iter: int | None = None) -> bool:
    """Is there w >= 0 with B w = u?  Columns of B are the generators."""
    norm = float(np.max(np.abs(u)))
    if norm == 0.0:
        return False
    return simplex(np.zeros(B.shape[1]), B, u / norm, max_iter=max_iter).status == "optimal"
