"""Optimization kernels used by the synthesis modules.

Three solvers live here:

* ``SdpProblem`` / ``solve_sdp`` — dense semidefinite programs with a
  linear objective (optionally minus Frobenius norms of affine maps,
  which the backing solver handles through its native second-order
  cone).  Problems are compiled to cvxpy and handed to a primal-dual
  interior-point backend (CVXOPT with Nesterov-Todd scaling, then
  Clarabel, then SCS as fallbacks).  Strict cone constraints are
  realized with an explicit slack ``eps * S`` for a configurable slack
  matrix ``S`` (identity by default).

* ``solve_eq_least_squares`` — minimizes a sum of squared Frobenius
  norms of affine matrix maps subject to affine equality constraints by
  solving the KKT system directly; exact up to linear-solver precision.

* ``minimize_smooth`` — gradient descent with Armijo backtracking for
  smooth nonconvex objectives (condition-number shaping in the pole
  placement module).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import cvxpy as cp
import numpy as np

from .errors import DimensionError, InfeasibleError, NumericError, ValidationError

DEFAULT_STRICT_EPS = 1e-8
DEFAULT_FEAS_TOL = 1e-7
DEFAULT_GAP_TOL = 1e-7

# Tried in order; each entry is (name, solve kwargs). CVXOPT at 1e-9
# tolerances is the most accurate on these small dense problems but
# can fail outright on ill-scaled instances, where Clarabel takes over.
_SOLVER_CHAIN = (
    ("CVXOPT", {"abstol": 1e-9, "reltol": 1e-9, "feastol": 1e-9}),
    ("CLARABEL", {}),
    ("SCS", {"eps": 1e-9, "max_iters": 100_000}),
)


class SdpProblem:
    """Affine semidefinite program over named matrix variable blocks.

    Variables are declared once by name; constraints and the objective
    are cvxpy expressions built by the caller from those variables and
    constant numpy matrices.
    """

    def __init__(self, name: str = "sdp"):
        self.name = name
        self._vars: dict[str, cp.Variable] = {}
        self._psd: list[tuple[cp.Expression, str]] = []
        self._eqs: list[cp.Constraint] = []
        self._linear_obj: cp.Expression | None = None
        self._norm_terms: list[cp.Expression] = []
        self.strict_eps = DEFAULT_STRICT_EPS

    def add_var(self, name: str, rows: int, cols: int, symmetric: bool = False) -> cp.Variable:
        if name in self._vars:
            raise ValidationError(f"variable block {name!r} declared twice")
        if symmetric and rows != cols:
            raise DimensionError(f"symmetric block {name!r} must be square")
        if rows == 1 and cols == 1:
            v = cp.Variable((1, 1), name=name, symmetric=symmetric)
        else:
            v = cp.Variable((rows, cols), name=name, symmetric=symmetric)
        self._vars[name] = v
        return v

    def add_psd(self, expr, strict: bool = False, slack: np.ndarray | None = None) -> None:
        """Constrain ``expr >= 0`` on the PSD cone.

        ``strict=True`` encodes positive definiteness as
        ``expr - eps * slack >= 0`` (slack defaults to the identity).
        """
        if expr.shape[0] != expr.shape[1]:
            raise DimensionError("PSD constraint expression must be square")
        if strict:
            S = np.eye(expr.shape[0]) if slack is None else np.asarray(slack)
            if S.shape != expr.shape:
                raise DimensionError("slack matrix shape mismatch in strict PSD constraint")
            expr = expr - self.strict_eps * S
        self._psd.append((expr, "psd"))

    def add_nsd(self, expr, strict: bool = False, slack: np.ndarray | None = None) -> None:
        """Constrain ``expr <= 0`` on the negative-semidefinite side."""
        self.add_psd(-expr, strict=strict, slack=slack)

    def add_eq(self, lhs, rhs=None) -> None:
        self._eqs.append(lhs == (0 if rhs is None else rhs))

    def add_scalar_lb(self, expr, lb: float) -> None:
        self._eqs.append(expr >= lb)

    def maximize(self, expr) -> None:
        self._linear_obj = expr

    def minimize_norm(self, expr) -> None:
        """Add a Frobenius-norm term to be minimized alongside the
        linear objective (epigraph handled by the conic backend)."""
        self._norm_terms.append(expr)

    # -- compilation -------------------------------------------------

    def _objective(self) -> cp.problems.objective.Objective:
        obj = self._linear_obj if self._linear_obj is not None else cp.Constant(0)
        for term in self._norm_terms:
            obj = obj - cp.norm(term, "fro")
        return cp.Maximize(obj)

    def _constraints(self) -> list[cp.Constraint]:
        cons: list[cp.Constraint] = [expr >> 0 for expr, _ in self._psd]
        cons.extend(self._eqs)
        return cons

    def value(self, name: str) -> np.ndarray:
        v = self._vars[name].value
        if v is None:
            raise NumericError(f"variable {name!r} has no value (problem not solved?)")
        return np.atleast_2d(np.asarray(v, dtype=float))


@dataclass
class SdpSolution:
    """Solver outcome: status is one of optimal | infeasible | numeric-failure."""

    status: str
    values: dict[str, np.ndarray] = field(default_factory=dict)
    objective: float | None = None
    duality_gap: float | None = None
    solver: str | None = None
    raw_status: str | None = None
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


def _gap_estimate(problem: cp.Problem) -> float | None:
    stats = problem.solver_stats
    if stats is None or stats.extra_stats is None:
        return None
    extra = stats.extra_stats
    if isinstance(extra, dict) and "gap" in extra:
        try:
            return float(extra["gap"])
        except (TypeError, ValueError):
            return None
    return None


def solve_sdp(
    p: SdpProblem,
    feas_tol: float = DEFAULT_FEAS_TOL,
    gap_tol: float = DEFAULT_GAP_TOL,
    solvers: Sequence[tuple[str, dict]] = _SOLVER_CHAIN,
) -> SdpSolution:
    """Solve an ``SdpProblem``, falling back across the solver chain.

    Deterministic for identical inputs (every backend in the chain is
    deterministic).  A clean ``optimal`` status is returned as soon as a
    backend reports one; an ``optimal_inaccurate`` result is kept as a
    candidate and used only if no later backend does better.
    """
    problem = cp.Problem(p._objective(), p._constraints())
    if not problem.is_dcp():
        raise ValidationError(f"SDP {p.name!r} is not a valid convex program")

    fallback: SdpSolution | None = None
    failures: list[str] = []
    for solver_name, kwargs in solvers:
        if solver_name not in cp.installed_solvers():
            continue
        try:
            problem.solve(solver=solver_name, **kwargs)
        except (cp.error.SolverError, ZeroDivisionError, ValueError, ArithmeticError) as exc:
            failures.append(f"{solver_name}: {exc}")
            continue
        status = problem.status
        if status in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
            sol = SdpSolution(
                status="optimal",
                values={name: np.atleast_2d(np.asarray(v.value, dtype=float))
                        for name, v in p._vars.items() if v.value is not None},
                objective=float(problem.value),
                duality_gap=_gap_estimate(problem),
                solver=solver_name,
                raw_status=status,
            )
            if status == cp.OPTIMAL:
                return sol
            if fallback is None:
                fallback = sol
        elif status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
            return SdpSolution(status="infeasible", solver=solver_name, raw_status=status,
                               message=f"SDP {p.name!r} reported infeasible by {solver_name}")
        elif status in (cp.UNBOUNDED, cp.UNBOUNDED_INACCURATE):
            return SdpSolution(status="numeric-failure", solver=solver_name, raw_status=status,
                               message=f"SDP {p.name!r} objective is unbounded")
        else:
            failures.append(f"{solver_name}: status {status}")
    if fallback is not None:
        return fallback
    return SdpSolution(status="numeric-failure",
                       message=f"all solvers failed on {p.name!r}: " + "; ".join(failures))


# -- equality-constrained least squares ------------------------------


@dataclass(frozen=True)
class MatrixVar:
    """A named real matrix decision variable."""

    name: str
    rows: int
    cols: int

    @property
    def size(self) -> int:
        return self.rows * self.cols


@dataclass
class AffineMap:
    """Affine matrix-valued map ``sum_k L_k @ V_k @ R_k - target``.

    ``terms`` is a list of ``(var_name, L, R)`` with ``L`` or ``R``
    allowed to be ``None`` (identity).  Used both for quadratic residual
    terms and for equality constraints (``map == 0``).
    """

    terms: list[tuple[str, np.ndarray | None, np.ndarray | None]]
    target: np.ndarray

    def shape(self, vars_by_name: dict[str, MatrixVar]) -> tuple[int, int]:
        return self.target.shape


def _vec_lift(amap: AffineMap, variables: Sequence[MatrixVar], offsets: dict[str, int],
              total: int) -> tuple[np.ndarray, np.ndarray]:
    """Row block of the stacked linear system for one affine map.

    Uses the row-major identity ``vec(L @ V @ R) = kron(L, R.T) vec(V)``.
    """
    vars_by_name = {v.name: v for v in variables}
    rows = amap.target.size
    block = np.zeros((rows, total))
    for name, L, R in amap.terms:
        v = vars_by_name[name]
        Lm = np.eye(amap.target.shape[0]) if L is None else np.asarray(L, float)
        Rm = np.eye(amap.target.shape[1]) if R is None else np.asarray(R, float)
        if Lm.shape[1] != v.rows or Rm.shape[0] != v.cols:
            raise DimensionError(
                f"affine term on {name!r}: L is {Lm.shape}, R is {Rm.shape}, "
                f"variable is {v.rows}x{v.cols}")
        if (Lm.shape[0], Rm.shape[1]) != amap.target.shape:
            raise DimensionError(
                f"affine term on {name!r} maps to {(Lm.shape[0], Rm.shape[1])}, "
                f"target is {amap.target.shape}")
        block[:, offsets[name]:offsets[name] + v.size] += np.kron(Lm, Rm.T)
    return block, np.asarray(amap.target, float).ravel()


def solve_eq_least_squares(
    variables: Sequence[MatrixVar],
    residuals: Sequence[AffineMap],
    equalities: Sequence[AffineMap] = (),
    kkt_tol: float = 1e-9,
) -> dict[str, np.ndarray]:
    """Minimize ``sum ||residual_k||_F^2`` subject to ``equality_j == 0``.

    Solves the KKT system ``[[2 A'A, C'], [C, 0]] [z; lam] = [2 A'b; d]``
    with a minimum-norm linear solve, so underdetermined directions are
    resolved deterministically.  Raises ``InfeasibleError`` when the
    equality constraints are inconsistent.
    """
    if not residuals:
        raise ValidationError("at least one residual term is required")
    offsets, total = {}, 0
    for v in variables:
        offsets[v.name] = total
        total += v.size

    blocks = [_vec_lift(r, variables, offsets, total) for r in residuals]
    A = np.vstack([b for b, _ in blocks])
    b = np.concatenate([t for _, t in blocks])
    if equalities:
        cblocks = [_vec_lift(c, variables, offsets, total) for c in equalities]
        C = np.vstack([blk for blk, _ in cblocks])
        d = np.concatenate([t for _, t in cblocks])
    else:
        C = np.zeros((0, total))
        d = np.zeros(0)

    ncon = C.shape[0]
    KKT = np.block([[2.0 * A.T @ A, C.T], [C, np.zeros((ncon, ncon))]])
    rhs = np.concatenate([2.0 * A.T @ b, d])
    sol, *_ = np.linalg.lstsq(KKT, rhs, rcond=None)
    z = sol[:total]

    if ncon:
        eq_resid = np.linalg.norm(C @ z - d)
        eq_scale = 1.0 + np.linalg.norm(d)
        if eq_resid > 1e-6 * eq_scale:
            raise InfeasibleError(
                f"equality constraints inconsistent (residual {eq_resid:.3e})")
    kkt_resid = np.linalg.norm(KKT @ sol - rhs)
    if kkt_resid > kkt_tol * (1.0 + np.linalg.norm(rhs)):
        raise NumericError(f"KKT solve residual {kkt_resid:.3e} above tolerance")

    return {v.name: z[offsets[v.name]:offsets[v.name] + v.size].reshape(v.rows, v.cols)
            for v in variables}


# -- smooth local descent --------------------------------------------


@dataclass
class MinimizeResult:
    x: np.ndarray
    fval: float
    grad_norm: float
    iterations: int
    converged: bool


def _fd_gradient(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    g = np.zeros_like(x, dtype=float)
    for i in range(x.size):
        e = np.zeros_like(x, dtype=float)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def minimize_smooth(
    f: Callable[[np.ndarray], float],
    x0: np.ndarray,
    grad: Callable[[np.ndarray], np.ndarray] | None = None,
    iters: int = 200,
    grad_tol: float = 1e-8,
    step0: float = 1.0,
    shrink: float = 0.5,
    armijo: float = 1e-4,
) -> MinimizeResult:
    """Gradient descent with Armijo backtracking line search.

    ``f`` may return ``inf`` to mark undefined points (e.g. singular
    matrices); the line search backs away from them.  Guarantees
    ``f(x*) <= f(x0)``.
    """
    x = np.asarray(x0, dtype=float).copy()
    fx = float(f(x))
    if not np.isfinite(fx):
        raise NumericError("objective undefined at the initial point")
    gfun = grad if grad is not None else (lambda y: _fd_gradient(f, y))

    step = step0
    it = 0
    gnorm = np.inf
    for it in range(1, iters + 1):
        g = np.asarray(gfun(x), dtype=float)
        gnorm = float(np.linalg.norm(g))
        if gnorm <= grad_tol:
            return MinimizeResult(x, fx, gnorm, it, True)
        t = step
        improved = False
        for _ in range(50):
            xn = x - t * g
            fn = float(f(xn))
            if np.isfinite(fn) and fn <= fx - armijo * t * gnorm**2:
                x, fx = xn, fn
                step = min(t * 2.0, step0 * 16.0)
                improved = True
                break
            t *= shrink
        if not improved:
            return MinimizeResult(x, fx, gnorm, it, False)
    return MinimizeResult(x, fx, gnorm, it, gnorm <= grad_tol)
