"""Full-branch interval maps with an indifferent fixed point at 0.

The LSV (Liverani-Saussol-Vaienti) family

    f(x) = x (1 + 2^alpha x^alpha)   on [0, 1/2)
    f(x) = 2x - 1                    on [1/2, 1]

is built by :func:`make_lsv`; arbitrary full-branch maps are assembled from
branch tables with :func:`make_map`.  Branch domains are half-open ``[lo, hi)``
except the last one, which also contains 1.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import NonContractingPreimage

ORBIT_FLOOR = 1e-300
ORBIT_CEIL = 1.0 - 1e-16
ENDPOINT_NUDGE = 1e-15

_NEWTON_TOL = 1e-14
_NEWTON_MAXITER = 100


def guarded_inverse(forward, derivative, lo, hi, t, increasing=True,
                    x0=None, tol=_NEWTON_TOL, maxiter=_NEWTON_MAXITER):
    """Solve ``forward(x) = t`` on ``[lo, hi]`` for a monotone branch.

    Newton's method with a shrinking bracket; any step leaving the bracket is
    replaced by bisection.  Works elementwise on arrays.
    """
    t = np.asarray(t, dtype=float)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    a = np.full(t.shape, float(lo))
    b = np.full(t.shape, float(hi))
    if x0 is None:
        frac = np.clip((t - forward(np.float64(lo))) /
                       (forward(np.float64(hi)) - forward(np.float64(lo))), 0.0, 1.0)
        x = lo + (hi - lo) * frac
    else:
        x = np.clip(np.atleast_1d(np.asarray(x0, dtype=float)).copy(), lo, hi)
    done = np.zeros(t.shape, dtype=bool)
    sign = 1.0 if increasing else -1.0
    for _ in range(maxiter):
        act = ~done
        if not act.any():
            break
        xa, ta = x[act], t[act]
        g = sign * (forward(xa) - ta)
        aa, bb = a[act], b[act]
        aa = np.where(g < 0, xa, aa)
        bb = np.where(g > 0, xa, bb)
        d = sign * derivative(xa)
        with np.errstate(divide="ignore", invalid="ignore"):
            xn = xa - g / d
        bad = ~np.isfinite(xn) | (xn <= aa) | (xn >= bb)
        xn = np.where(bad, 0.5 * (aa + bb), xn)
        step = np.abs(xn - xa)
        conv = (g == 0) | (step <= tol * np.maximum(np.abs(xn), 1e-300)) | \
               ((bb - aa) <= tol * np.maximum(np.abs(xn), 1e-300))
        xn = np.where(g == 0, xa, xn)
        x[act], a[act], b[act] = xn, aa, bb
        idx = np.flatnonzero(act)
        done[idx[conv]] = True
    if not done.all():
        raise NonContractingPreimage(
            f"inverse branch did not converge for {np.count_nonzero(~done)} points")
    return x[0] if scalar else x


@dataclass(frozen=True)
class Branch:
    """One monotone C^2 branch ``forward: [lo, hi) -> (0, 1)``."""

    lo: float
    hi: float
    forward: Callable
    derivative: Callable
    inverse: Optional[Callable] = None

    @property
    def increasing(self) -> bool:
        mid = 0.5 * (self.lo + self.hi)
        return bool(self.derivative(np.float64(mid)) > 0)

    def invert(self, t, x0=None):
        """Inverse branch: the point of ``[lo, hi]`` mapped to ``t``."""
        if self.inverse is not None:
            return self.inverse(t)
        return guarded_inverse(self.forward, self.derivative, self.lo, self.hi,
                               t, increasing=self.increasing, x0=x0)


@dataclass(frozen=True)
class PiecewiseMap:
    """A full-branch interval map; the first branch holds the indifferent point 0."""

    branches: tuple
    indifferent_points: tuple = (0.0,)
    name: str = "custom"
    alpha: Optional[float] = None
    _memo: dict = field(default_factory=dict, compare=False, repr=False, hash=False)

    def __post_init__(self):
        edges = [b.lo for b in self.branches] + [self.branches[-1].hi]
        if abs(edges[0]) > 1e-15 or abs(edges[-1] - 1.0) > 1e-15:
            raise ValueError("branch domains must cover [0, 1]")
        for left, right in zip(self.branches[:-1], self.branches[1:]):
            if abs(left.hi - right.lo) > 1e-15:
                raise ValueError("branch domains must be contiguous")
            if not left.lo < left.hi:
                raise ValueError("empty branch domain")

    @property
    def edges(self) -> np.ndarray:
        return np.array([b.lo for b in self.branches] + [self.branches[-1].hi])

    @property
    def beta(self) -> Optional[float]:
        return None if self.alpha is None else 1.0 / self.alpha

    def branch_index(self, x):
        """Index of the branch containing each x (half-open policy)."""
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.edges[1:-1], x, side="right")
        return idx

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        idx = self.branch_index(x)
        out = np.empty_like(x)
        for k, br in enumerate(self.branches):
            sel = idx == k
            if np.any(sel):
                out[sel] = br.forward(x[sel])
        return out

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        idx = self.branch_index(x)
        out = np.empty_like(x)
        for k, br in enumerate(self.branches):
            sel = idx == k
            if np.any(sel):
                out[sel] = br.derivative(x[sel])
        return out


@dataclass(frozen=True)
class LsvParams:
    alpha: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")

    @property
    def beta(self) -> float:
        return 1.0 / self.alpha


def make_lsv(params) -> PiecewiseMap:
    """Two-branch LSV map with parameter ``alpha``."""
    if not isinstance(params, LsvParams):
        params = LsvParams(float(params))
    alpha = params.alpha
    coef = 2.0 ** alpha

    def left(x):
        return x * (1.0 + coef * x ** alpha)

    def dleft(x):
        return 1.0 + coef * (1.0 + alpha) * x ** alpha

    def left_inv(t):
        t = np.asarray(t, dtype=float)
        # f(x) >= x, so t itself brackets from above
        return guarded_inverse(left, dleft, 0.0, 0.5, t, increasing=True,
                               x0=np.minimum(t, 0.5) / (1.0 + coef * np.minimum(t, 0.5) ** alpha))

    branches = (
        Branch(0.0, 0.5, left, dleft, left_inv),
        Branch(0.5, 1.0, lambda x: 2.0 * x - 1.0,
               lambda x: np.full_like(np.asarray(x, dtype=float), 2.0),
               lambda t: 0.5 * (np.asarray(t, dtype=float) + 1.0)),
    )
    return PiecewiseMap(branches, (0.0,), name=f"lsv(alpha={alpha:g})", alpha=alpha)


def make_map(table: Sequence[dict], alpha: Optional[float] = None,
             name: str = "custom") -> PiecewiseMap:
    """Build a map from a branch table.

    Each entry holds ``lo``, ``hi``, ``forward``, ``derivative`` and optionally
    ``inverse``.  The first branch must fix 0 with derivative 1 there;
    ``alpha`` (order of tangency at 0) is recorded when known.
    """
    branches = tuple(Branch(float(e["lo"]), float(e["hi"]), e["forward"],
                            e["derivative"], e.get("inverse")) for e in table)
    fmap = PiecewiseMap(branches, (0.0,), name=name, alpha=alpha)
    left = branches[0]
    eps = 1e-12
    if abs(float(left.forward(np.float64(0.0)))) > 1e-14:
        raise ValueError("first branch must fix 0")
    if abs(float(left.derivative(np.float64(eps))) - 1.0) > 1e-6:
        raise ValueError("0 must be an indifferent fixed point (f'(0) = 1)")
    return fmap


def _scalar_inverse(br: Branch, t: float, x0: float) -> float:
    """Scalar guarded Newton for one inverse-branch evaluation."""
    fwd, der = br.forward, br.derivative
    a, b = br.lo, br.hi
    x = min(max(x0, a), b)
    for _ in range(_NEWTON_MAXITER):
        g = float(fwd(x)) - t
        if g == 0.0:
            return x
        if g > 0:
            b = x
        else:
            a = x
        xn = x - g / float(der(x))
        if not (a < xn < b):
            xn = 0.5 * (a + b)
        if abs(xn - x) <= _NEWTON_TOL * abs(xn) or b - a <= _NEWTON_TOL * abs(xn):
            return xn
        x = xn
    raise NonContractingPreimage(f"left inverse failed at t={t!r}")


def boundary_sequence(fmap: PiecewiseMap, n_max: int) -> np.ndarray:
    """Points ``x_0 > x_1 > ... > x_{n_max}`` with ``x_0`` the right end of the
    indifferent branch and ``f(x_{n+1}) = x_n``.

    Results are memoised on the map and extended on demand.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    left = fmap.branches[0]
    if not left.increasing:
        raise NonContractingPreimage("indifferent branch must be increasing")
    cached = fmap._memo.get("xseq")
    if cached is not None and len(cached) > n_max:
        return cached[: n_max + 1].copy()
    start = [left.hi] if cached is None else list(cached)
    xs = start
    fwd = left.forward
    x = xs[-1]
    for _ in range(len(xs) - 1, n_max):
        # one explicit backward step is an excellent Newton seed near 0
        guess = x - (float(fwd(x)) - x)
        if guess <= 0.0:
            guess = 0.5 * x
        xn = _scalar_inverse(left, x, guess)
        if not (0.0 < xn < x):
            raise NonContractingPreimage(f"boundary sequence stalled at x={x!r}")
        xs.append(xn)
        x = xn
    arr = np.array(xs)
    fmap._memo["xseq"] = arr
    return arr[: n_max + 1].copy()


def orbit(fmap: PiecewiseMap, x0: float, n: int) -> np.ndarray:
    """Forward orbit ``x0, f(x0), ..., f^n(x0)`` in double precision.

    Points landing exactly on an interior branch endpoint are nudged down by
    1e-15 (a warning is issued); outputs are clamped into (1e-300, 1 - 1e-16).
    """
    if not 0.0 < x0 < 1.0:
        raise ValueError("x0 must lie in (0, 1)")
    interior = set(float(e) for e in fmap.edges[1:-1])
    out = np.empty(n + 1)
    x = float(x0)
    out[0] = x
    for k in range(1, n + 1):
        if x in interior:
            warnings.warn(f"orbit hit branch endpoint {x!r} at step {k - 1}; "
                          f"nudged by -{ENDPOINT_NUDGE:g}", RuntimeWarning, stacklevel=2)
            x -= ENDPOINT_NUDGE
        x = float(fmap(np.float64(x)))
        x = min(max(x, ORBIT_FLOOR), ORBIT_CEIL)
        out[k] = x
    return out


def orbits(fmap: PiecewiseMap, x0, n: int) -> np.ndarray:
    """Vectorised forward orbits; returns an array of shape ``(n + 1, len(x0))``."""
    x = np.array(x0, dtype=float, ndmin=1)
    out = np.empty((n + 1, x.size))
    out[0] = x
    for k in range(1, n + 1):
        x = np.clip(fmap(x), ORBIT_FLOOR, ORBIT_CEIL)
        out[k] = x
    return out


def flow_level(fmap: PiecewiseMap, x, x_ref: float, k_ref: int):
    """Continuous level index of points below ``x_ref = x_{k_ref}``.

    Uses the flow approximation ``x^{-alpha} ~ alpha 2^alpha k`` anchored at
    ``x_ref``; only meaningful for LSV maps.
    """
    if fmap.alpha is None:
        raise ValueError("flow extrapolation needs the tangency order alpha")
    a = fmap.alpha
    rate = a * 2.0 ** a
    return k_ref + (np.asarray(x, dtype=float) ** (-a) - x_ref ** (-a)) / rate

