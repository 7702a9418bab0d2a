"""Data-based continuous-time LQR synthesis.

The optimal value matrix is the trace-maximizing P subject to the
data-expressed Bellman inequality ``L(P) >= 0`` with

    L(P) = Hx' Q Hx + Hu' R Hu + Hx' P Hxd + Hxd' P Hx,

all matrices taken at one fixed grid time.  The gain follows from the
linear system ``[Hx; L(P*)] Gamma = [I; 0]`` as ``K = -Hu Gamma``;
multiplying by ``(Hx Gamma)^-1`` (which the same equations force to the
identity) absorbs residual solver error and covers the variant where
any nonsingular matrix replaces I in the first block row.
"""

from __future__ import annotations

from dataclasses import dataclass

import cvxpy as cp
import numpy as np

from . import convex, linalg
from .datamat import HankelTriple, require_pe_at
from .errors import InfeasibleError, NumericError, ValidationError
from .system import LtiSystem

GAMMA_RESIDUAL_TOL = 1e-7


@dataclass(frozen=True)
class WeightPair:
    """State and input cost weights; Q must be PSD, R positive definite."""

    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        Q = linalg.require_square(self.Q, "Q").astype(float)
        R = linalg.require_square(self.R, "R").astype(float)
        if not np.allclose(Q, Q.T, atol=1e-12 * (1 + np.abs(Q).max())):
            raise ValidationError("Q must be symmetric")
        if not np.allclose(R, R.T, atol=1e-12 * (1 + np.abs(R).max())):
            raise ValidationError("R must be symmetric")
        if np.linalg.eigvalsh(Q).min() < -1e-10 * (1 + np.abs(Q).max()):
            raise ValidationError("Q must be positive semidefinite")
        if np.linalg.eigvalsh(R).min() <= 0:
            raise ValidationError("R must be positive definite")
        object.__setattr__(self, "Q", 0.5 * (Q + Q.T))
        object.__setattr__(self, "R", 0.5 * (R + R.T))


@dataclass
class LqrResult:
    K: np.ndarray
    Pstar: np.ndarray
    Gamma: np.ndarray
    gamma_residual: float
    sdp_objective: float
    solver: str | None = None


def bellman_data_matrix(h: HankelTriple, j: int, w: WeightPair, P) -> object:
    """L(P) as a cvxpy expression (or ndarray for numeric P)."""
    Hx, Hxd, Hu = h.hx(j), h.hxd(j), h.Hu
    return Hx.T @ w.Q @ Hx + Hu.T @ w.R @ Hu + Hx.T @ P @ Hxd + Hxd.T @ P @ Hx


def solve_lqr_data(h: HankelTriple, j: int, w: WeightPair,
                   strict_eps: float = convex.DEFAULT_STRICT_EPS) -> LqrResult:
    """LQR gain from persistently excited data at grid time j.

    Detectability of (A, Q^1/2) is the caller's hypothesis; it cannot be
    verified from data alone.
    """
    require_pe_at(h, j)
    if w.Q.shape[0] != h.n or w.R.shape[0] != h.m:
        raise ValidationError(
            f"weights sized {w.Q.shape[0]}/{w.R.shape[0]} do not match data n={h.n}, m={h.m}")

    p = convex.SdpProblem("lqr")
    p.strict_eps = strict_eps
    P = p.add_var("P", h.n, h.n, symmetric=True)
    p.add_psd(P, strict=True)
    p.add_psd(bellman_data_matrix(h, j, w, P))
    p.maximize(cp.trace(P))
    sol = convex.solve_sdp(p)
    if sol.status == "infeasible":
        raise InfeasibleError("LQR trace program infeasible on this data")
    if not sol.ok:
        raise InfeasibleError(f"LQR trace program failed: {sol.message or sol.raw_status}")

    Pstar = 0.5 * (sol.values["P"] + sol.values["P"].T)
    Hx, Hu = h.hx(j), h.Hu
    Lstar = np.asarray(bellman_data_matrix(h, j, w, Pstar), dtype=float)
    stacked = np.vstack([Hx, Lstar])
    rhs = np.vstack([np.eye(h.n), np.zeros((h.N, h.n))])
    Gamma = linalg.lstsq(stacked, rhs)
    residual = float(np.linalg.norm(stacked @ Gamma - rhs))
    if residual > GAMMA_RESIDUAL_TOL * (1.0 + np.linalg.norm(rhs)):
        raise NumericError(
            f"gain extraction system residual {residual:.3e} exceeds tolerance; "
            "the trace program solution is not accurate enough")
    HxG = Hx @ Gamma
    K = -Hu @ Gamma @ np.linalg.inv(HxG)
    return LqrResult(K=K, Pstar=Pstar, Gamma=Gamma, gamma_residual=residual,
                     sdp_objective=float(sol.objective), solver=sol.solver)


@dataclass(frozen=True)
class LqrVerification:
    are_residual: float
    gain_residual: float

    @property
    def ok(self) -> bool:
        return self.are_residual <= 1e-6


def verify_lqr(sys: LtiSystem, res: LqrResult, w: WeightPair) -> LqrVerification:
    """Model-based check: Riccati residual of P* and gain formula residual."""
    A, B = sys.A, sys.B
    P = res.Pstar
    are = w.Q + P @ A + A.T @ P - P @ B @ np.linalg.solve(w.R, B.T @ P)
    gain = res.K - np.linalg.solve(w.R, B.T @ P)
    return LqrVerification(are_residual=float(np.linalg.norm(are)),
                           gain_residual=float(np.linalg.norm(gain)))
