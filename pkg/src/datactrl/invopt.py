"""Inverse problem of optimal control: given a stabilizing gain, find
cost weights for which it is (close to) LQR optimal.

Closed-loop trajectories under the candidate gain supply the stacked
sample matrices; persistently excited open-loop data supplies the
Hankel matrices and the data-based ``A Hx`` surrogate.  The optimality
defect of the gain equation ``R K = B' P`` is minimized in its
data-expressed form

    || Hu' R Uhat + Hxd' P Xihat - H_A' P Xihat ||_F

subject to the data-expressed Lyapunov equality and detectability
inequality.  The program is invariant under joint positive scaling of
(Q, R, P), so the gauge ``tr(R) = m`` is fixed; the detectability
inequality, congruence-compressed by the fat matrix Hx, is made strict
with the slack ``eps * Hx' Hx`` (an ``eps * I`` slack would be
infeasible: the compressed matrix has rank at most n < N).
"""

from __future__ import annotations

from dataclasses import dataclass

import cvxpy as cp
import numpy as np

from . import convex, linalg, lqr
from .datamat import HankelTriple, compute_HA, require_pe_at
from .errors import DimensionError, InfeasibleError, RankError, ValidationError
from .system import LtiSystem

ASSUMPTION_BUDGET = 500


@dataclass(frozen=True)
class ReferenceBundle:
    """Stacked closed-loop samples: states, derivatives and inputs."""

    Xi: np.ndarray    # (n, qM)
    Xid: np.ndarray   # (n, qM)
    U: np.ndarray     # (m, qM)

    def __post_init__(self):
        if self.Xi.shape != self.Xid.shape:
            raise DimensionError("Xi and Xid shapes differ")
        if self.U.shape[1] != self.Xi.shape[1]:
            raise DimensionError("U column count does not match Xi")

    @property
    def n(self) -> int:
        return self.Xi.shape[0]

    @property
    def m(self) -> int:
        return self.U.shape[0]

    @property
    def columns(self) -> int:
        return self.Xi.shape[1]

    def full_row_rank(self, tol: float = linalg.DEFAULT_RANK_TOL) -> bool:
        return linalg.numerical_rank(self.Xi, tol) == self.n


@dataclass
class InverseOcResult:
    Q: np.ndarray
    R: np.ndarray
    P: np.ndarray
    P1: np.ndarray
    residual: float
    solver: str | None = None


def collect_closedloop(sys: LtiSystem, K, x0_list, dt: float = 0.1,
                       min_samples: int | None = None,
                       budget: int = ASSUMPTION_BUDGET) -> ReferenceBundle:
    """Simulate ``xdot = (A - BK) x`` from each initial state and sample
    every ``dt`` until the stacked state matrix reaches full row rank.

    ``min_samples`` forces at least that many samples per trajectory
    (useful to enrich the bundle beyond the bare rank requirement).
    """
    K = np.asarray(K, dtype=float)
    if K.shape != (sys.m, sys.n):
        raise DimensionError(f"K must be {sys.m}x{sys.n}, got {K.shape}")
    Acl = sys.A - sys.B @ K
    if not linalg.is_hurwitz(Acl):
        raise ValidationError("the supplied gain is not stabilizing; "
                              "closed-loop sampling would diverge")
    x0s = [np.asarray(x, dtype=float).ravel() for x in x0_list]
    if not x0s:
        raise ValidationError("at least one initial state is required")
    for x in x0s:
        if x.size != sys.n:
            raise DimensionError("initial state dimension mismatch")

    step = linalg.expm(Acl * dt)
    per_traj = [[x.copy()] for x in x0s]
    target = max(min_samples or 1, 1)

    def stacked() -> np.ndarray:
        return np.hstack([np.column_stack(cols) for cols in per_traj])

    total = len(x0s)
    while True:
        Xi = stacked()
        enough = all(len(cols) >= target for cols in per_traj)
        if enough and linalg.numerical_rank(Xi) == sys.n:
            break
        if total >= budget:
            raise RankError(
                "stacked closed-loop states never reached full row rank "
                f"within {budget} samples; the initial states may span a "
                "proper invariant subspace")
        for cols in per_traj:
            cols.append(step @ cols[-1])
            total += 1
    Xi = stacked()
    return ReferenceBundle(Xi=Xi, Xid=Acl @ Xi, U=-K @ Xi)


def solve_inverse_oc(h: HankelTriple, j: int, bundle: ReferenceBundle,
                     strict_eps: float = convex.DEFAULT_STRICT_EPS) -> InverseOcResult:
    """Recover (Q, R) and certificates (P, P1) from data."""
    require_pe_at(h, j)
    if not bundle.full_row_rank():
        raise RankError("bundle state matrix is not full row rank; "
                        "collect more closed-loop samples")
    if bundle.n != h.n or bundle.m != h.m:
        raise DimensionError("bundle dimensions do not match the Hankel data")

    n, m = h.n, h.m
    Hu, Hx, Hxd = h.Hu, h.hx(j), h.hxd(j)
    HA = compute_HA(h, j)
    Xi, Xid, U = bundle.Xi, bundle.Xid, bundle.U

    p = convex.SdpProblem("inverse-oc")
    p.strict_eps = strict_eps
    Q = p.add_var("Q", n, n, symmetric=True)
    R = p.add_var("R", m, m, symmetric=True)
    P = p.add_var("P", n, n, symmetric=True)
    P1 = p.add_var("P1", n, n, symmetric=True)
    p.add_psd(Q)
    p.add_psd(P)
    p.add_psd(R, strict=True)
    p.add_psd(P1, strict=True)
    p.add_eq(Xi.T @ Q @ Xi + U.T @ R @ U + Xi.T @ P @ Xid + Xid.T @ P @ Xi,
             np.zeros((bundle.columns, bundle.columns)))
    p.add_psd(Hx.T @ Q @ Hx - Hx.T @ P1 @ HA - HA.T @ P1 @ Hx,
              strict=True, slack=Hx.T @ Hx)
    p.add_eq(cp.trace(R), float(m))
    p.minimize_norm(Hu.T @ R @ U + Hxd.T @ P @ Xi - HA.T @ P @ Xi)

    sol = convex.solve_sdp(p)
    if sol.status == "infeasible":
        raise InfeasibleError("inverse optimal control program infeasible")
    if not sol.ok:
        raise InfeasibleError(f"inverse optimal control program failed: {sol.message}")

    sym = lambda M: 0.5 * (M + M.T)
    Qv, Rv = sym(sol.values["Q"]), sym(sol.values["R"])
    Pv, P1v = sym(sol.values["P"]), sym(sol.values["P1"])
    residual = float(np.linalg.norm(Hu.T @ Rv @ U + Hxd.T @ Pv @ Xi - HA.T @ Pv @ Xi))
    return InverseOcResult(Q=Qv, R=Rv, P=Pv, P1=P1v, residual=residual, solver=sol.solver)


@dataclass
class RoundTripReport:
    K_roundtrip: np.ndarray
    deviation: float
    lqr_result: lqr.LqrResult


def round_trip(h: HankelTriple, j: int, result: InverseOcResult, K) -> RoundTripReport:
    """Solve the LQR problem with the recovered weights and compare the
    resulting gain to the gain that produced the bundle."""
    K = np.asarray(K, dtype=float)
    floor = convex.DEFAULT_STRICT_EPS * 10
    Qfix = result.Q + max(0.0, floor - float(np.linalg.eigvalsh(result.Q).min())) * np.eye(h.n)
    w = lqr.WeightPair(Q=Qfix, R=result.R)
    res = lqr.solve_lqr_data(h, j, w)
    return RoundTripReport(K_roundtrip=res.K,
                           deviation=float(np.linalg.norm(res.K - K)),
                           lqr_result=res)
