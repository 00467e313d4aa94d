"""Invariant density from the Ulam discretisation of the induced map.

The induced density ``h_Y`` is the stationary vector of the (row-stochastic)
Lebesgue Ulam matrix of F on an equal-width grid of Y.  The density on the
rest of the interval is obtained by pushing ``h_Y`` up the levels of the
first-return tower: a point x < y_lo receives mass from every level j >= 1.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NoConvergence, TruncationTooCoarse
from .induced import ReturnStructure, grid_preimages, induced_overlaps


@dataclass(frozen=True)
class DensityEstimate:
    """Piecewise-constant invariant density, normalised to ``mu(Y) = 1``."""

    y_lo: float
    h_y: np.ndarray
    eig_residual: float = 0.0
    second_eig: Optional[float] = None
    x_edges: Optional[np.ndarray] = None
    h_x: Optional[np.ndarray] = None
    levels_used: int = 0
    _cum: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        cum = np.concatenate([[0.0], np.cumsum(self.h_y * self.width)])
        object.__setattr__(self, "_cum", cum)

    @property
    def m(self) -> int:
        return len(self.h_y)

    @property
    def width(self) -> float:
        return (1.0 - self.y_lo) / len(self.h_y)

    @property
    def grid_y(self) -> np.ndarray:
        return self.y_lo + self.width * np.arange(self.m + 1)

    @property
    def cell_mass(self) -> np.ndarray:
        """mu of each grid cell of Y."""
        return self.h_y * self.width

    def cumulative(self, y):
        """``mu([y_lo, y])`` for y in Y."""
        y = np.clip(np.asarray(y, dtype=float), self.y_lo, 1.0)
        s = (y - self.y_lo) / self.width
        k = np.clip(np.floor(s).astype(np.int64), 0, self.m - 1)
        return self._cum[k] + (s - k) * self.width * self.h_y[k]

    def integrate(self, lo, width):
        """``mu([lo, lo + width])``; keeps relative precision for tiny widths."""
        lo = np.asarray(lo, dtype=float)
        width = np.asarray(width, dtype=float)
        hi = lo + width
        k_lo = np.clip(np.floor((lo - self.y_lo) / self.width).astype(np.int64), 0, self.m - 1)
        k_hi = np.clip(np.floor((hi - self.y_lo) / self.width).astype(np.int64), 0, self.m - 1)
        same = k_lo == k_hi
        return np.where(same, self.h_y[k_lo] * width,
                        self.cumulative(hi) - self.cumulative(lo))


def ulam_matrix(rs: ReturnStructure, m: int, N: Optional[int] = None) -> sp.csr_matrix:
    """Lebesgue Ulam matrix of F: ``P[j, i] = |cell_j ∩ F^{-1} cell_i| / |cell_j|``.

    Row-stochastic; return times beyond N enter through the tail profile.
    The row sums are normalised away from rounding (they equal 1 exactly in
    exact arithmetic).
    """
    ov = induced_overlaps(rs, m, N)
    rows = np.concatenate([ov.j, ov.tail_j])
    cols = np.concatenate([ov.i, ov.tail_i])
    vals = np.concatenate([ov.leb, ov.tail_leb])
    P = sp.csr_matrix((vals, (rows, cols)), shape=(m, m))
    # the pieces of each cell tile it exactly; divide by their float sum
    rowsum = np.asarray(P.sum(axis=1)).ravel()
    return sp.diags(1.0 / rowsum) @ P


def stationary_vector(P: sp.csr_matrix, tol: float = 1e-12, maxiter: int = 20000):
    """Left Perron vector of a row-stochastic matrix by power iteration."""
    m = P.shape[0]
    PT = P.T.tocsr()
    pi = np.full(m, 1.0 / m)
    res = np.inf
    for it in range(maxiter):
        nxt = PT @ pi
        nxt /= nxt.sum()
        res = float(np.abs(nxt - pi).sum())
        pi = nxt
        if res <= tol:
            return pi, res
    raise NoConvergence(f"power iteration residual {res:.3e} after {maxiter} steps")


def second_eigenvalue(P: sp.csr_matrix) -> float:
    """Modulus of the second eigenvalue of the Ulam matrix."""
    m = P.shape[0]
    if m <= 1024:
        ev = np.linalg.eigvals(P.toarray())
    else:
        ev = spla.eigs(P.T.tocsc(), k=4, which="LM", return_eigenvectors=False, tol=1e-10)
    ev = np.sort(np.abs(ev))[::-1]
    return float(ev[1])


def induced_density(rs: ReturnStructure, m: int = 1024, N: Optional[int] = None,
                    with_gap: bool = False) -> DensityEstimate:
    """Invariant density of the induced map on m equal cells of Y."""
    if m < 8 or m & (m - 1):
        raise ValueError("m must be a power of two, at least 8")
    P = ulam_matrix(rs, m, N)
    pi, res = stationary_vector(P)
    h = pi / pi.sum() / ((1.0 - rs.y_lo) / m)
    lam2 = second_eigenvalue(P) if with_gap else None
    return DensityEstimate(rs.y_lo, h, res, lam2)


def h_at_half(density: DensityEstimate) -> float:
    """Right limit of h at y_lo from the first three cell averages.

    The quadratic with those cell averages has value
    ``(11 a0 - 7 a1 + 2 a2) / 6`` at the left edge.
    """
    a = density.h_y[:3]
    return float((11.0 * a[0] - 7.0 * a[1] + 2.0 * a[2]) / 6.0)


def tower_cell_masses(rs: ReturnStructure, density: DensityEstimate,
                      N: Optional[int] = None) -> np.ndarray:
    """``M[k, i] = mu(Linv^k(cell_i))`` for k = 0..N-1, Linv the indifferent inverse branch.

    Level k of the tower above ``cell_i`` collects every y with ``phi(y) > k``
    whose k-th iterate lands in ``Linv^k(cell_i)``, i.e. the pieces of
    ``F^{-1}(cell_i)`` in cylinders n > k.  Summing those from the deep end
    (including the mass beyond the horizon) needs no level-by-level
    truncation.
    """
    m = density.m
    ov = induced_overlaps(rs, m, N)
    N = ov.N
    key = ("tower", m, N, density.h_y.tobytes().__hash__())
    if key in rs._memo:
        return rs._memo[key]
    h = density.h_y
    S = np.bincount((ov.n.astype(np.int64) - 1) * m + ov.i, weights=h[ov.j] * ov.leb,
                    minlength=N * m).reshape(N, m)
    tail = np.bincount(ov.tail_i, weights=h[ov.tail_j] * ov.tail_leb, minlength=m)
    M = np.empty((N, m))
    # M[k] = tail + sum_{n > k} S_n, and row S[n-1] holds cylinder n
    acc = tail.copy()
    for k in range(N - 1, -1, -1):
        acc = acc + S[k]
        M[k] = acc
    rs._memo[key] = M
    return M


def spread_density(rs: ReturnStructure, h_y, epsilon: float = 0.05, m_x: int = 1024,
                   N: Optional[int] = None) -> DensityEstimate:
    """Cell averages of the invariant density on ``[epsilon, 1]``.

    The grid consists of those cells of the equal m_x-cell grid of [0, 1]
    that lie in ``[epsilon, 1]`` (epsilon is rounded down to a grid edge), so
    that y_lo = 1/2 is a grid edge for even m_x.  Masses come from
    :func:`tower_cell_masses`; within each preimage cell the density is
    taken constant.
    """
    density = h_y if isinstance(h_y, DensityEstimate) else DensityEstimate(rs.y_lo, np.asarray(h_y))
    if not 0.0 < epsilon < rs.y_lo:
        raise ValueError("epsilon must lie in (0, y_lo)")
    k0 = int(np.floor(epsilon * m_x + 1e-9))
    if k0 < 1:
        raise ValueError("epsilon must cover at least one grid cell above 0")
    edges = np.arange(k0, m_x + 1) / m_x
    N = rs.n_max if N is None else N
    # levels k = 1..K meet [edges[0], y_lo)
    K = int(np.searchsorted(-rs.x_seq, -edges[0], side="left"))
    if K > N - 1:
        raise TruncationTooCoarse(
            f"epsilon={epsilon} needs {K} tower levels, horizon is {N}")
    M = tower_cell_masses(rs, density, N)
    z = grid_preimages(rs, density.m, N)
    pts = [z[k] for k in range(K, 0, -1)] + [density.grid_y]
    masses = [M[k] for k in range(K, 0, -1)] + [density.cell_mass]
    bp = np.concatenate([p[:-1] for p in pts] + [[1.0]])
    cm = np.concatenate([[0.0], np.cumsum(np.concatenate(masses))])
    # total mass of the levels deeper than K lies left of bp[0]; not needed
    C = np.interp(edges, bp, cm)
    h_x = np.diff(C) / np.diff(edges)
    return DensityEstimate(rs.y_lo, density.h_y, density.eig_residual, density.second_eig,
                           edges, h_x, K)
