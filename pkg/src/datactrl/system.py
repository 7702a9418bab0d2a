"""Continuous-time LTI plants, PCPE input generation and exact simulation.

Experiments apply a piecewise constant persistently exciting (PCPE)
input: ``N`` constant levels held for ``T`` time units each.  Within a
segment the state is propagated exactly through the exponential of the
augmented block matrix ``[[A, B], [0, 0]]``, so simulation error never
contaminates the exact-representation identities the rest of the
package relies on.  Sampled signals are stored on a grid of offsets
``t_j`` within ``[0, T)`` at absolute times ``t_j + i*T``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import linalg
from .errors import DimensionError, RankError, ValidationError

DEFAULT_GRID_SIZE = 21
_PCPE_DRAW_LIMIT = 100


@dataclass(frozen=True)
class LtiSystem:
    """State-space pair ``xdot = A x + B u``."""

    A: np.ndarray
    B: np.ndarray
    label: str = ""

    def __post_init__(self):
        A = linalg.require_square(self.A, "A")
        B = linalg.as_matrix(self.B, "B")
        if B.shape[0] != A.shape[0]:
            raise DimensionError("A and B must have the same number of rows")
        object.__setattr__(self, "A", A.astype(float))
        object.__setattr__(self, "B", B.astype(float))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    def is_controllable(self, tol: float = linalg.DEFAULT_RANK_TOL) -> bool:
        return linalg.is_controllable(self.A, self.B, tol)


@dataclass(frozen=True)
class PcpeInput:
    """Piecewise constant input: levels ``mu[i]`` held on ``[iT, (i+1)T)``.

    ``order`` is the excitation order L certified at construction: the
    depth-L mosaic Hankel matrix of the levels has full rank ``m * L``.
    """

    T: float
    mu: np.ndarray  # (N, m)
    order: int

    def __post_init__(self):
        if self.T <= 0:
            raise ValidationError("segment length T must be positive")
        mu = np.asarray(self.mu, dtype=float)
        if mu.ndim != 2:
            raise DimensionError("mu must be an (N, m) array of input levels")
        object.__setattr__(self, "mu", mu)
        if not pcpe_rank_holds(mu, self.order):
            raise RankError(
                f"input levels are not persistently exciting of order {self.order}")

    @property
    def N(self) -> int:
        return self.mu.shape[0]

    @property
    def m(self) -> int:
        return self.mu.shape[1]


@dataclass(frozen=True)
class NoiseModel:
    """Bounded per-sample noise, entries uniform on [-bound, bound].

    ``kind`` is 'measurement' (added to stored x, and to xdot when
    ``corrupt_xdot``) or 'process' (an exogenous disturbance w entering
    xdot directly).
    """

    kind: str
    bound: float
    seed: int
    corrupt_xdot: bool = True

    def __post_init__(self):
        if self.kind not in ("measurement", "process"):
            raise ValidationError("noise kind must be 'measurement' or 'process'")
        if self.bound < 0:
            raise ValidationError("noise bound must be >= 0")


@dataclass(frozen=True)
class TrajectoryData:
    """Sampled record of one PCPE experiment.

    Arrays are indexed ``[j, i]`` for grid offset ``t_j`` and segment
    ``i``, i.e. absolute sample time ``t_j + i*T``.
    """

    T: float
    grid: np.ndarray      # (q,) offsets within [0, T)
    u: np.ndarray         # (q, N, m)
    x: np.ndarray         # (q, N, n)
    xdot: np.ndarray      # (q, N, n)
    noise: NoiseModel | None = None

    @property
    def N(self) -> int:
        return self.u.shape[1]

    @property
    def n(self) -> int:
        return self.x.shape[2]

    @property
    def m(self) -> int:
        return self.u.shape[2]

    @property
    def q(self) -> int:
        return self.grid.shape[0]


def mosaic_hankel(mu: np.ndarray, depth: int) -> np.ndarray:
    """Depth-L block Hankel matrix of the level sequence (levels as columns)."""
    mu = np.asarray(mu, dtype=float)
    N, m = mu.shape
    if depth < 1 or depth > N:
        raise ValidationError(f"mosaic Hankel depth {depth} incompatible with N={N}")
    cols = N - depth + 1
    H = np.zeros((m * depth, cols))
    for k in range(depth):
        H[k * m:(k + 1) * m, :] = mu[k:k + cols].T
    return H


def pcpe_rank_holds(mu: np.ndarray, order: int, tol: float = linalg.DEFAULT_RANK_TOL) -> bool:
    H = mosaic_hankel(mu, order)
    return linalg.numerical_rank(H, tol) == mu.shape[1] * order


def min_segments(m: int, n: int) -> int:
    """Smallest N for which the depth-(n+1) mosaic Hankel can reach full rank."""
    return (m + 1) * (n + 1) - 1


def generate_pcpe(m: int, n: int, N: int, T: float, seed: int,
                  amplitude: float = 5.0) -> PcpeInput:
    """Draw a PCPE input of order n+1 with levels uniform on [-amplitude, amplitude].

    Redraws until the mosaic-Hankel rank condition holds (almost surely
    immediate for random levels).
    """
    nmin = min_segments(m, n)
    if N < nmin:
        raise ValidationError(
            f"N={N} too small for PCPE of order {n + 1} with m={m}: need N >= {nmin}")
    rng = np.random.default_rng(seed)
    order = n + 1
    for _ in range(_PCPE_DRAW_LIMIT):
        mu = rng.uniform(-amplitude, amplitude, (N, m))
        if pcpe_rank_holds(mu, order):
            return PcpeInput(T=T, mu=mu, order=order)
    raise RankError("failed to draw a persistently exciting input level sequence")


def default_grid(T: float, q: int = DEFAULT_GRID_SIZE) -> np.ndarray:
    """q equally spaced offsets on [0, T), endpoint excluded so the input
    level is unambiguous at every sample."""
    if q < 1:
        raise ValidationError("grid size must be >= 1")
    return np.linspace(0.0, T, q, endpoint=False)


def simulate(sys: LtiSystem, inp: PcpeInput, x0, grid=None,
             noise: NoiseModel | None = None) -> TrajectoryData:
    """Exact piecewise simulation of a PCPE experiment.

    Per segment the transition pair ``(E(t), F(t))`` comes from the
    augmented matrix exponential; stored derivatives are ``A x + B u``
    evaluated at the sample (plus the process disturbance when one is
    modeled).  Measurement noise is added after exact simulation.
    """
    if inp.m != sys.m:
        raise DimensionError(f"input dimension {inp.m} does not match system m={sys.m}")
    x0 = np.asarray(x0, dtype=float).ravel()
    if x0.size != sys.n:
        raise DimensionError(f"x0 has size {x0.size}, expected n={sys.n}")
    grid = default_grid(inp.T) if grid is None else np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or np.any(np.diff(grid) <= 0):
        raise ValidationError("grid must be a non-empty strictly increasing 1-D array")
    if grid[0] < 0 or grid[-1] > inp.T:
        raise ValidationError("grid offsets must lie within [0, T]")

    n, m, N, q = sys.n, sys.m, inp.N, grid.size
    aug = np.zeros((n + m, n + m))
    aug[:n, :n] = sys.A
    aug[:n, n:] = sys.B
    ET = linalg.expm(aug * inp.T)
    EG = [linalg.expm(aug * t) for t in grid]

    rng_proc = None
    w = np.zeros((q, N, n))
    if noise is not None and noise.kind == "process" and noise.bound > 0:
        rng_proc = np.random.default_rng(noise.seed)
        w = rng_proc.uniform(-noise.bound, noise.bound, (q, N, n))

    u = np.zeros((q, N, m))
    x = np.zeros((q, N, n))
    xd = np.zeros((q, N, n))
    xseg = x0.copy()
    for i in range(N):
        mu_i = inp.mu[i]
        for j in range(q):
            xt = EG[j][:n, :n] @ xseg + EG[j][:n, n:] @ mu_i
            u[j, i] = mu_i
            x[j, i] = xt
            xd[j, i] = sys.A @ xt + sys.B @ mu_i + w[j, i]
        xseg = ET[:n, :n] @ xseg + ET[:n, n:] @ mu_i

    if noise is not None and noise.kind == "measurement" and noise.bound > 0:
        rng = np.random.default_rng(noise.seed)
        x = x + rng.uniform(-noise.bound, noise.bound, x.shape)
        if noise.corrupt_xdot:
            xd = xd + rng.uniform(-noise.bound, noise.bound, xd.shape)

    return TrajectoryData(T=inp.T, grid=grid, u=u, x=x, xdot=xd, noise=noise)


def check_T_admissible(sys: LtiSystem, T: float, tol: float = 1e-9,
                       k_window: int = 64) -> tuple[bool, float]:
    """Model-based check that T avoids the measure-zero resonant values
    ``2*pi*k / |Im(lam_i - lam_j)|``.

    Returns (admissible, margin) where margin is the distance to the
    nearest excluded value found in the scan window.  Test-harness use
    only: requires the true eigenvalues.
    """
    if T <= 0:
        raise ValidationError("T must be positive")
    lams = linalg.eigvals(sys.A)
    margin = np.inf
    for i in range(lams.size):
        for j in range(lams.size):
            d = abs((lams[i] - lams[j]).imag)
            if d <= 0:
                continue
            base = 2.0 * np.pi / d
            kmax = max(1, int(np.ceil(T / base)) + 1)
            for k in range(1, min(kmax, k_window) + 1):
                margin = min(margin, abs(T - k * base))
    return bool(margin > tol), float(margin)


def builtin_aircraft() -> LtiSystem:
    """Linearized lateral aircraft model (sideslip angle, pitch rate, yaw
    rate, roll angle) with two control surfaces."""
    A = np.array([
        [-0.493, 0.015, -1.0, 0.02],
        [-61.176, -7.835, 4.991, 0.0],
        [31.804, -0.235, -0.994, 0.0],
        [0.0, 1.0, -0.015, 0.0],
    ])
    B = np.array([
        [-0.002, 0.002],
        [8.246, 1.849],
        [0.249, -0.436],
        [0.0, 0.0],
    ])
    return LtiSystem(A=A, B=B, label="aircraft")


BUILTIN_SYSTEMS = {"aircraft": builtin_aircraft}


def with_seed(noise: NoiseModel, seed: int) -> NoiseModel:
    return replace(noise, seed=seed)
