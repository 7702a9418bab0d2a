"""Data-based stability certificates and stabilizing-gain synthesis.

A gain K is stabilizing exactly when the data-reconstructed closed loop
``Hxd(t) Gamma (Hx(t) Gamma)^-1`` is Hurwitz, where Gamma annihilates
``Hu + K Hx(t)`` and keeps ``Hx(t) Gamma`` nonsingular.  We normalize
``Hx(t) Gamma = I`` so the reconstruction is simply ``Hxd(t) Gamma``.
Two LMI synthesis routes are provided: the classical
positive-definite-image program and the noise-robust program driven by
a quadratic disturbance bound ``T Hw Hw' <= Wbar``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

from . import convex, linalg
from .datamat import HankelTriple, require_pe_at
from .errors import InfeasibleError, RankError

STRICT_EPS = convex.DEFAULT_STRICT_EPS


@dataclass
class GainResult:
    """Synthesized gain plus the certificates its method produced."""

    K: np.ndarray
    method: str
    P: np.ndarray | None = None
    L: np.ndarray | None = None
    beta: float | None = None
    Gamma: np.ndarray | None = None
    closed_loop_estimate: np.ndarray | None = None
    objective: float | None = None
    metadata: dict = field(default_factory=dict)


def gamma_for_gain(h: HankelTriple, j: int, K) -> np.ndarray:
    """Gamma with (Hu + K Hx(j)) Gamma = 0 and Hx(j) Gamma = I."""
    K = np.asarray(K, dtype=float)
    require_pe_at(h, j)
    Hx, Hu = h.hx(j), h.Hu
    Z = linalg.null_space_basis(Hu + K @ Hx)
    HxZ = Hx @ Z
    if linalg.numerical_rank(HxZ) < h.n:
        raise RankError(
            "Hx(j) restricted to null(Hu + K Hx(j)) is rank deficient; "
            "data is not persistently excited enough for this gain")
    Gamma = Z @ linalg.lstsq(HxZ, np.eye(h.n))
    return Gamma


def closed_loop_from_data(h: HankelTriple, j: int, K) -> np.ndarray:
    """Data-based reconstruction of A - B K at grid time j."""
    Gamma = gamma_for_gain(h, j, K)
    HxG = h.hx(j) @ Gamma
    return h.hxd(j) @ Gamma @ np.linalg.inv(HxG)


def is_stabilizing(h: HankelTriple, j: int, K, margin: float = 0.0) -> bool:
    """Hurwitz test of the data-based closed loop."""
    return linalg.is_hurwitz(closed_loop_from_data(h, j, K), margin)


def estimate_disturbance_bound(T: float, q: int, N: int, vbar: float, n: int) -> np.ndarray:
    """Conservative Wbar for per-entry noise bounded by vbar.

    The quadratic form of an n x N noise row matrix is dominated by its
    trace, giving ``T * N * n * vbar^2``; an extra factor q covers the
    grid-wide worst case.
    """
    return T * q * N * n * vbar**2 * np.eye(n)


def _extract_gain(L: np.ndarray, P: np.ndarray) -> np.ndarray:
    return -L @ np.linalg.inv(P)


def stabilize_depersis(h: HankelTriple, j: int,
                       strict_eps: float = STRICT_EPS) -> GainResult:
    """Stabilizing gain from the LMIs ``Hx G > 0`` (as a symmetric matrix
    P) and ``Hxd G + G' Hxd' < 0``, with ``K = -Hu G (Hx G)^-1``.

    The program is positively homogeneous, so the scale is pinned with
    ``tr(Hx G) = n`` (always reachable by scaling a feasible point).
    """
    require_pe_at(h, j)
    Hu, Hx, Hxd = h.Hu, h.hx(j), h.hxd(j)
    n, N = h.n, h.N

    p = convex.SdpProblem("stabilize-depersis")
    p.strict_eps = strict_eps
    G = p.add_var("Gamma", N, n)
    P = p.add_var("P", n, n, symmetric=True)
    p.add_eq(Hx @ G, P)
    p.add_psd(P, strict=True)
    p.add_nsd(Hxd @ G + (Hxd @ G).T, strict=True)
    p.add_eq(cp.trace(P), float(n))

    sol = convex.solve_sdp(p)
    if not sol.ok:
        raise InfeasibleError(f"stabilization LMIs infeasible: {sol.message or sol.status}")
    Gv = sol.values["Gamma"]
    Pv = 0.5 * (sol.values["P"] + sol.values["P"].T)
    K = -Hu @ Gv @ np.linalg.inv(Hx @ Gv)
    return GainResult(K=K, method="depersis", P=Pv, Gamma=Gv,
                      closed_loop_estimate=closed_loop_from_data(h, j, K),
                      metadata={"solver": sol.solver})


def _noise_robust_constraints(p: convex.SdpProblem, h: HankelTriple, j: int, Wbar, P, L, beta):
    """Shared LMI: T Z Z' >= [[Wbar + beta I, P, L'], [P, 0, 0], [L, 0, 0]]
    with Z = [Hxd; -Hx; -Hu]."""
    n, m = h.n, h.m
    Wbar = np.zeros((n, n)) if Wbar is None else np.asarray(Wbar, dtype=float)
    Hu, Hx, Hxd = h.Hu, h.hx(j), h.hxd(j)
    Z = np.vstack([Hxd, -Hx, -Hu])
    block = cp.bmat([
        [Wbar + beta * np.eye(n), P, L.T],
        [P, np.zeros((n, n)), np.zeros((n, m))],
        [L, np.zeros((m, n)), np.zeros((m, m))],
    ])
    p.add_psd(h.T * (Z @ Z.T) - block)


def _solve_noise_robust(h: HankelTriple, j: int, Wbar, objective: str,
                        trace_gauge: float | None, strict_eps: float) -> convex.SdpSolution:
    n, m = h.n, h.m
    p = convex.SdpProblem("stabilize-noise-robust")
    p.strict_eps = strict_eps
    P = p.add_var("P", n, n, symmetric=True)
    L = p.add_var("L", m, n)
    beta = p.add_var("beta", 1, 1)
    _noise_robust_constraints(p, h, j, Wbar, P, L, beta[0, 0])
    p.add_psd(P, strict=True)
    p.add_scalar_lb(beta[0, 0], strict_eps)
    if trace_gauge is not None:
        p.add_eq(cp.trace(P), trace_gauge)
    if objective == "max_trace":
        p.maximize(cp.trace(P))
    elif objective == "max_beta":
        p.maximize(beta[0, 0])
    return convex.solve_sdp(p)


def stabilize_noise_robust(h: HankelTriple, j: int, Wbar=None,
                           strict_eps: float = STRICT_EPS) -> GainResult:
    """Gain robust to every disturbance satisfying ``T Hw Hw' <= Wbar``.

    Solved as a feasibility program; if the interior point the solver
    returns fails the data-based Hurwitz check (possible when it sits
    too close to the degenerate small-scale boundary), the program is
    re-solved maximizing beta.
    """
    require_pe_at(h, j)
    for objective in ("feasibility", "max_beta"):
        sol = _solve_noise_robust(h, j, Wbar, objective, None, strict_eps)
        if sol.status == "infeasible":
            raise InfeasibleError(
                "noise-robust stabilization LMI infeasible: the data is not "
                "informative for the supplied disturbance bound")
        if not sol.ok:
            continue
        Pv = 0.5 * (sol.values["P"] + sol.values["P"].T)
        K = _extract_gain(sol.values["L"], Pv)
        if is_stabilizing(h, j, K):
            return GainResult(K=K, method="noise-robust", P=Pv, L=sol.values["L"],
                              beta=float(sol.values["beta"][0, 0]),
                              closed_loop_estimate=closed_loop_from_data(h, j, K),
                              metadata={"solver": sol.solver, "objective": objective})
    raise InfeasibleError("noise-robust stabilization failed to produce a verified gain")
