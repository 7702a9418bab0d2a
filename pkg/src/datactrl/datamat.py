"""Time-indexed data matrices and persistence-of-excitation checks.

For a sampled PCPE experiment the depth-1 Hankel row of a signal at
grid offset ``t_j`` collects its values at ``t_j + i*T`` across the N
segments.  The input row matrix is constant in time for piecewise
constant inputs and is stored once.  For noise-free data the three
matrices satisfy ``Hxd(j) = A Hx(j) + B Hu`` exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import DimensionError, RankError, ValidationError
from .system import TrajectoryData


@dataclass(frozen=True)
class HankelTriple:
    """Input/state/state-derivative data matrices on a common grid."""

    Hu: np.ndarray       # (m, N), constant over the grid
    Hx: np.ndarray       # (q, n, N)
    Hxd: np.ndarray      # (q, n, N)
    grid: np.ndarray     # (q,)
    T: float

    @property
    def N(self) -> int:
        return self.Hu.shape[1]

    @property
    def m(self) -> int:
        return self.Hu.shape[0]

    @property
    def n(self) -> int:
        return self.Hx.shape[1]

    @property
    def q(self) -> int:
        return self.grid.shape[0]

    def hx(self, j: int) -> np.ndarray:
        return self.Hx[j]

    def hxd(self, j: int) -> np.ndarray:
        return self.Hxd[j]

    def stacked(self, j: int) -> np.ndarray:
        """[Hu; Hx(j)] — the (m+n) x N matrix whose rank certifies PE."""
        return np.vstack([self.Hu, self.Hx[j]])

    def mid_index(self) -> int:
        return self.q // 2


@dataclass(frozen=True)
class PeReport:
    """Per-grid-time smallest singular values of the stacked data matrix."""

    passed: bool
    sigma_min: np.ndarray     # (q,)
    sigma_max: np.ndarray     # (q,)
    rank: np.ndarray          # (q,)
    required_rank: int
    message: str = ""

    @property
    def worst_sigma_min(self) -> float:
        return float(self.sigma_min.min()) if self.sigma_min.size else 0.0


@dataclass(frozen=True)
class RepresentationCoefficients:
    """Coefficients alpha with [Hu; Hx(j)] alpha = [ubar; xbar]."""

    alpha: np.ndarray
    residual: float
    grid_index: int


def build_hankel(data: TrajectoryData, u_tol: float = 1e-9) -> HankelTriple:
    """Assemble the Hankel triple from trajectory data.

    Verifies that the stored input is constant within each segment
    across the grid (within the noise bound, had the input channel been
    corrupted; it is not under the supported noise models).
    """
    u, x, xd = data.u, data.x, data.xdot
    spread = np.abs(u - u[0:1]).max() if data.q > 1 else 0.0
    scale = 1.0 + np.abs(u).max()
    if spread > u_tol * scale:
        raise ValidationError(
            f"input is not constant within segments (spread {spread:.3e}); "
            "the Hankel input row is only defined for piecewise constant inputs")
    Hu = u[0].T.copy()
    Hx = np.transpose(x, (0, 2, 1)).copy()
    Hxd = np.transpose(xd, (0, 2, 1)).copy()
    return HankelTriple(Hu=Hu, Hx=Hx, Hxd=Hxd, grid=data.grid.copy(), T=data.T)


def check_pe(h: HankelTriple, tol: float = linalg.DEFAULT_RANK_TOL) -> PeReport:
    """Rank-(m+n) test of [Hu; Hx(t_j)] at every grid time."""
    m, n, N, q = h.m, h.n, h.N, h.q
    need = m + n
    if N < need:
        return PeReport(
            passed=False,
            sigma_min=np.zeros(q), sigma_max=np.zeros(q),
            rank=np.zeros(q, dtype=int), required_rank=need,
            message=f"N={N} < m+n={need}: the stacked data matrix cannot reach rank {need}")
    smin = np.zeros(q)
    smax = np.zeros(q)
    rank = np.zeros(q, dtype=int)
    for j in range(q):
        s = np.linalg.svd(h.stacked(j), compute_uv=False)
        smin[j], smax[j] = s[need - 1], s[0]
        rank[j] = int(np.sum(s > tol * s[0])) if s[0] > 0 else 0
    passed = bool(np.all(rank == need))
    msg = "" if passed else "persistence of excitation fails at some grid times"
    return PeReport(passed=passed, sigma_min=smin, sigma_max=smax, rank=rank,
                    required_rank=need, message=msg)


def require_pe_at(h: HankelTriple, j: int, tol: float = linalg.DEFAULT_RANK_TOL) -> None:
    stacked = h.stacked(j)
    if linalg.numerical_rank(stacked, tol) != h.m + h.n:
        raise RankError(
            f"data not persistently excited at grid index {j}: "
            f"rank([Hu; Hx]) < {h.m + h.n}")


def represent_state(h: HankelTriple, j: int, ubar, xbar) -> RepresentationCoefficients:
    """Minimum-norm alpha reproducing the input/state pair at time t_j."""
    ubar = np.asarray(ubar, dtype=float).reshape(h.m, -1)
    xbar = np.asarray(xbar, dtype=float).reshape(h.n, -1)
    if ubar.shape[1] != xbar.shape[1]:
        raise DimensionError("ubar and xbar must have matching column counts")
    require_pe_at(h, j)
    stacked = h.stacked(j)
    rhs = np.vstack([ubar, xbar])
    alpha = linalg.lstsq(stacked, rhs)
    residual = float(np.linalg.norm(stacked @ alpha - rhs))
    scale = 1.0 + float(np.linalg.norm(rhs))
    if residual > 1e-8 * scale:
        raise RankError(f"representation residual {residual:.3e} too large; "
                        "data may not span the requested pair")
    if alpha.shape[1] == 1 and np.asarray(ubar).ndim == 1:
        alpha = alpha[:, 0]
    return RepresentationCoefficients(alpha=alpha, residual=residual, grid_index=j)


def compute_HA(h: HankelTriple, j: int) -> np.ndarray:
    """Data-based ``A @ Hx(t_j)`` without knowledge of A.

    Solves ``[Hu; Hx(j)] Gbar = [0; Hx(j)]`` (minimum norm) and returns
    ``Hxd(j) @ Gbar``; unique under persistence of excitation.
    """
    require_pe_at(h, j)
    stacked = h.stacked(j)
    rhs = np.vstack([np.zeros((h.m, h.N)), h.hx(j)])
    gbar = linalg.lstsq(stacked, rhs)
    return h.hxd(j) @ gbar
