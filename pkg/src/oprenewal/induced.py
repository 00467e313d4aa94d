"""First-return structure to Y = [y_lo, 1] and the return-time tail.

Points of Y sit on the right (full) branches.  A point y on branch ``b``
returns at time n >= 2 exactly when ``g_b(y)`` lies in ``[x_{n-1}, x_{n-2})``,
where ``x_k`` is the boundary sequence of the indifferent branch (with the
convention ``x_{-1} = 1``).  Cylinder ends are therefore ``g_b^{-1}(x_k)``.

The module also builds the exact cell-overlap data of the induced map on an
equal-width grid of Y, which both the density estimate and the operator
discretisation are assembled from.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (BetaOutOfRange, CylinderBoundary, HorizonTooLarge,
                     InvalidInducingSet)
from .maps import Branch, PiecewiseMap, boundary_sequence

BOUNDARY_TOL = 1e-14


def preimage_offsets(branch: Branch, base: float, targets) -> np.ndarray:
    """Accurate ``g^{-1}(targets) - g^{-1}(base)`` for a right branch ``g``.

    Small differences are formed from ``targets - base`` times a midpoint
    inverse derivative, so they keep full relative precision even when the
    absolute preimages agree in most digits.
    """
    t = np.asarray(targets, dtype=float)
    dt = t - base
    far = np.abs(dt) > 1e-6
    out = np.empty_like(dt)
    if np.any(far):
        out[far] = branch.invert(t[far]) - branch.invert(np.float64(base))
    near = ~far
    if np.any(near):
        mid = base + 0.5 * dt[near]
        out[near] = dt[near] / branch.derivative(branch.invert(mid))
    return out


@dataclass(frozen=True)
class ReturnStructure:
    """Return-time cylinders of Y = [y_lo, 1] up to horizon ``n_max``."""

    fmap: PiecewiseMap
    y_lo: float
    n_max: int
    x_seq: np.ndarray
    right: tuple
    _memo: dict = field(default_factory=dict, compare=False, repr=False, hash=False)

    @property
    def y_len(self) -> float:
        return 1.0 - self.y_lo

    @property
    def beta(self) -> Optional[float]:
        return self.fmap.beta

    def x_ext(self, k):
        """Boundary sequence with ``x_{-1} = 1``."""
        k = np.asarray(k)
        return np.where(k < 0, 1.0, self.x_seq[np.maximum(k, 0)])

    def cylinder(self, n: int, branch: int = 0):
        """Endpoints ``(lo, hi)`` of ``{phi = n}`` on one right branch."""
        if not 1 <= n <= self.n_max:
            raise ValueError(f"cylinder index must be in [1, {self.n_max}]")
        br = self.right[branch]
        a = float(br.invert(np.float64(self.x_ext(n - 1))))
        b = float(br.invert(np.float64(self.x_ext(n - 2))))
        return (min(a, b), max(a, b))

    def cylinder_widths(self, branch: int = 0) -> np.ndarray:
        """Lebesgue widths of cylinders 1..n_max on one branch."""
        key = ("widths", branch)
        if key not in self._memo:
            br = self.right[branch]
            k = np.arange(1, self.n_max + 1)
            w = np.abs(preimage_offsets_pairs(br, self.x_ext(k - 1), self.x_ext(k - 2)))
            self._memo[key] = w
        return self._memo[key]

    def tail_widths(self, branch: int = 0) -> np.ndarray:
        """Lebesgue measure of ``{phi > n}`` on one branch, n = 0..n_max."""
        key = ("tailw", branch)
        if key not in self._memo:
            br = self.right[branch]
            xs = self.x_ext(np.arange(-1, self.n_max))
            self._memo[key] = np.abs(preimage_offsets_pairs(br, np.zeros_like(xs), xs))
        return self._memo[key]

    def leb_tail(self) -> np.ndarray:
        """Lebesgue measure of ``{phi > n}`` in Y for n = 0..n_max."""
        return sum(self.tail_widths(b) for b in range(len(self.right)))

    def return_time(self, y) -> np.ndarray:
        """Return time of each y in Y by cylinder lookup (0 if beyond n_max)."""
        y = np.atleast_1d(np.asarray(y, dtype=float))
        out = np.zeros(y.shape, dtype=np.int64)
        for b, br in enumerate(self.right):
            on = (y >= br.lo) & (y <= br.hi)
            if not np.any(on):
                continue
            t = br.forward(y[on])
            # t in [x_{n-1}, x_{n-2}) <=> n - 1 = #{k >= 0 : x_k > t}
            k = np.searchsorted(-self.x_seq, -t, side="left")
            n = k + 1
            n = np.where(t >= 1.0, 1, n)
            n[k > self.n_max - 1] = 0
            out[on] = n
        return out


def preimage_offsets_pairs(branch: Branch, base, targets) -> np.ndarray:
    """Vectorised ``g^{-1}(targets) - g^{-1}(base)`` for paired arrays."""
    base = np.asarray(base, dtype=float)
    t = np.asarray(targets, dtype=float)
    dt = t - base
    out = np.empty_like(dt)
    far = np.abs(dt) > 1e-6
    if np.any(far):
        out[far] = branch.invert(t[far]) - branch.invert(base[far])
    near = ~far
    if np.any(near):
        mid = base[near] + 0.5 * dt[near]
        out[near] = dt[near] / branch.derivative(branch.invert(mid))
    return out


def build_return_structure(fmap: PiecewiseMap, y_lo: float = 0.5,
                           n_max: int = 4096) -> ReturnStructure:
    """First-return structure to ``[y_lo, 1]``.

    ``y_lo`` must be the right end of the indifferent branch and every branch
    to its right must map fully onto (0, 1).
    """
    if n_max < 2:
        raise ValueError("n_max must be >= 2")
    if fmap.alpha is not None and fmap.alpha < 1.0:
        raise BetaOutOfRange("alpha < 1: finite measure, out of scope")
    left = fmap.branches[0]
    if abs(y_lo - left.hi) > 1e-12:
        raise InvalidInducingSet(
            f"y_lo={y_lo} must equal the right end {left.hi} of the indifferent branch")
    right = tuple(fmap.branches[1:])
    if not right:
        raise InvalidInducingSet("no branches to the right of the indifferent branch")
    for br in right:
        ends = sorted([float(br.forward(np.float64(br.lo))),
                       float(br.forward(np.float64(br.hi)))])
        if abs(ends[0]) > 1e-9 or abs(ends[1] - 1.0) > 1e-9:
            raise InvalidInducingSet(
                f"branch on [{br.lo}, {br.hi}] is not full: image {ends}")
    lf = [float(left.forward(np.float64(0.0))), float(left.forward(np.float64(left.hi)))]
    if abs(lf[0]) > 1e-12 or abs(lf[1] - 1.0) > 1e-9:
        raise InvalidInducingSet("indifferent branch must map [0, y_lo) onto [0, 1)")
    xs = boundary_sequence(fmap, n_max)
    return ReturnStructure(fmap, float(y_lo), int(n_max), xs, right)


def induced_apply(rs: ReturnStructure, y: float):
    """``(F(y), phi(y))`` for the first-return map F."""
    y = float(y)
    if not rs.y_lo <= y <= 1.0:
        raise ValueError("y must lie in Y")
    fmap = rs.fmap
    # distance to the nearest cylinder end on this branch
    for br in rs.right:
        if br.lo <= y <= br.hi:
            t = float(br.forward(np.float64(y)))
            k = int(np.searchsorted(-rs.x_seq, -t, side="left"))
            near = []
            if k < len(rs.x_seq):
                near.append(rs.x_seq[k])
            if k >= 1:
                near.append(rs.x_seq[k - 1])
            near.append(1.0)
            for e in near:
                ye = float(br.invert(np.float64(e)))
                if abs(ye - y) <= BOUNDARY_TOL:
                    raise CylinderBoundary(f"y={y!r} within 1e-14 of cylinder end {ye!r}")
            break
    x = y
    n = 0
    while True:
        x = float(fmap(np.float64(x)))
        n += 1
        if x >= rs.y_lo:
            return x, n
        if x <= 0.0:
            raise CylinderBoundary("orbit collapsed onto the fixed point")


@dataclass(frozen=True)
class TailModel:
    """Return-time tail ``tail[n] = measure(phi > n)`` and its power-law fit.

    ``tail`` holds the Lebesgue measure (unnormalised) or the invariant
    measure normalised so that ``mu(Y) = 1``.
    """

    beta: float
    tail: np.ndarray
    c_fit: float
    remainder_bound: float
    measure: str = "invariant"
    remainder_coef: float = 0.0
    fit_window: tuple = (0, 0)

    @property
    def n_max(self) -> int:
        return len(self.tail) - 1

    @property
    def beta_is_one(self) -> bool:
        return abs(self.beta - 1.0) < 1e-12

    def tail_at(self, n):
        """Tail values, extrapolated by ``c n^{-beta}`` beyond the horizon."""
        n = np.asarray(n)
        ext = self.c_fit * np.maximum(n, 1).astype(float) ** (-self.beta)
        inside = n <= self.n_max
        return np.where(inside, self.tail[np.minimum(n, self.n_max).astype(np.int64)], ext)

    def ell(self, n):
        """Slowly varying part ``tail(n) n^beta`` for n >= 1."""
        n = np.asarray(n, dtype=float)
        return self.tail_at(n.astype(np.int64)) * n ** self.beta

    def remainder(self, n):
        """``H(n) = tail(n)/c - n^{-beta}`` for n >= 1."""
        n = np.asarray(n)
        return self.tail_at(n) / self.c_fit - np.asarray(n, dtype=float) ** (-self.beta)

    def masses(self) -> np.ndarray:
        """Return-time masses ``measure(phi = n)`` for n = 1..n_max."""
        return self.tail[:-1] - self.tail[1:]

    @classmethod
    def pareto(cls, beta: float, n_max: int) -> "TailModel":
        """Exact tail ``n^{-beta}`` (n >= 1), ``tail(0) = 1``: c = 1, H = 0."""
        n = np.arange(n_max + 1, dtype=float)
        tail = np.ones(n_max + 1)
        tail[1:] = n[1:] ** (-beta)
        return cls(beta, tail, 1.0, 0.0, "synthetic", 0.0, (n_max // 4, n_max))

    @classmethod
    def from_tail(cls, beta: float, tail, measure: str = "invariant",
                  window=None) -> "TailModel":
        """Fit ``c`` and the remainder over ``[n_max/4, n_max]``."""
        tail = np.asarray(tail, dtype=float)
        n_max = len(tail) - 1
        lo, hi = window if window is not None else (max(n_max // 4, 1), n_max)
        n = np.arange(lo, hi + 1, dtype=float)
        wts = n ** (2 * beta)
        c = float(np.sum(wts * tail[lo:hi + 1] * n ** beta) / np.sum(wts))
        H = tail[lo:hi + 1] / c - n ** (-beta)
        bound = float(np.max(np.abs(H) * n ** (2 * beta)))
        # least-squares coefficient of H(n) ~ kappa n^{-2 beta}, used for extrapolation
        basis = n ** (-2 * beta)
        kappa = float(np.dot(H, basis) / np.dot(basis, basis))
        return cls(beta, tail, c, bound, measure, kappa, (lo, hi))


def tail_model(rs: ReturnStructure, measure="lebesgue", density=None,
               n_max: Optional[int] = None) -> TailModel:
    """Tail of the return time under Lebesgue or the invariant measure.

    ``measure`` is ``"lebesgue"`` or ``"invariant"``; the latter needs a
    :class:`~oprenewal.density.DensityEstimate` (or any object with an
    ``integrate(lo, width)`` method returning mu of ``[lo, lo + width]``).
    """
    if rs.beta is None:
        raise ValueError("tail exponent unknown: map has no alpha")
    beta = rs.beta
    if n_max is not None and n_max != rs.n_max:
        rs = build_return_structure(rs.fmap, rs.y_lo, n_max)
    if measure == "lebesgue":
        tail = rs.leb_tail()
    elif measure == "invariant":
        if density is None:
            raise ValueError("invariant tail needs a density estimate")
        tail = np.zeros(rs.n_max + 1)
        for b, br in enumerate(rs.right):
            widths = rs.tail_widths(b)
            # {phi > n} on branch b is the preimage of [0, x_{n-1}]: one end is g^{-1}(0)
            anchor = float(br.invert(np.float64(0.0)))
            if br.increasing:
                tail += density.integrate(np.full_like(widths, anchor), widths)
            else:
                tail += density.integrate(anchor - widths, widths)
        tail = tail / tail[0]
    else:
        raise ValueError(f"unknown measure {measure!r}")
    return TailModel.from_tail(beta, tail, measure)


# ---------------------------------------------------------------------------
# exact cell overlaps of the induced map on an equal-width grid of Y


@dataclass(frozen=True)
class InducedOverlaps:
    """Lebesgue overlaps ``|cell_j ∩ {phi = n} ∩ F^{-1} cell_i|``.

    Stored in COO form sorted by return time; ``tail_*`` arrays describe the
    mass with ``phi > N`` distributed over target cells with the profile of
    the deepest computed cylinder.
    """

    m: int
    N: int
    y_lo: float
    width: float
    n: np.ndarray
    i: np.ndarray
    j: np.ndarray
    leb: np.ndarray
    tail_i: np.ndarray
    tail_j: np.ndarray
    tail_leb: np.ndarray
    z_mid: np.ndarray = field(repr=False, default=None)

    def ptr(self) -> np.ndarray:
        """Offsets so that entries of return time n are ``ptr[n-1]:ptr[n]``."""
        return np.searchsorted(self.n, np.arange(1, self.N + 2), side="left")


def grid_preimages(rs: ReturnStructure, m: int, depth: int) -> np.ndarray:
    """``z[k, e] = Linv^k(edge_e)`` for the m+1 grid edges of Y, k < depth."""
    key = ("zgrid", m, depth)
    if key in rs._memo:
        return rs._memo[key]
    left = rs.fmap.branches[0]
    edges = rs.y_lo + (1.0 - rs.y_lo) * np.arange(m + 1) / m
    z = np.empty((depth, m + 1))
    z[0] = edges
    prev = edges
    for k in range(1, depth):
        cur = left.invert(prev)
        cur[0] = rs.x_seq[k] if k < len(rs.x_seq) else cur[0]
        z[k] = cur
        if not np.all(np.diff(cur) > 0):
            raise HorizonTooLarge(
                f"preimages of the grid collapse at depth {k}", max_usable=k)
        prev = cur
    rs._memo[key] = z
    return z


def _segment(local_edges, grid_local, m):
    """Overlap of an ascending partition with grid cells (local coordinates)."""
    width = local_edges[-1]
    inner = grid_local[(grid_local > 0.0) & (grid_local < width)]
    pts = np.concatenate([local_edges, inner])
    pts.sort(kind="mergesort")
    lens = np.diff(pts)
    mids = 0.5 * (pts[:-1] + pts[1:])
    keep = lens > 0
    lens, mids = lens[keep], mids[keep]
    e = np.searchsorted(local_edges, mids, side="right") - 1
    c = np.searchsorted(grid_local, mids, side="right") - 1
    np.clip(c, 0, m - 1, out=c)
    return e, c, lens


def induced_overlaps(rs: ReturnStructure, m: int, N: Optional[int] = None) -> InducedOverlaps:
    """Cell overlaps of the induced map for return times 1..N on m cells."""
    N = rs.n_max if N is None else int(N)
    if N > rs.n_max:
        raise HorizonTooLarge(f"horizon {N} exceeds return structure n_max={rs.n_max}",
                              max_usable=rs.n_max)
    key = ("overlaps", m, N)
    if key in rs._memo:
        return rs._memo[key]
    z = grid_preimages(rs, m, N)
    w = (1.0 - rs.y_lo) / m
    grid_abs = rs.y_lo + w * np.arange(m + 1)
    ns, is_, js, lebs = [], [], [], []
    tail_i, tail_j, tail_leb = [], [], []
    for b, br in enumerate(rs.right):
        inc = br.increasing
        for n in range(1, N + 1):
            zz = z[n - 1]
            off = preimage_offsets(br, float(zz[0]), zz)
            # absolute position of the preimage of the lowest target edge
            anchor = float(br.invert(np.float64(zz[0])))
            if inc:
                left_abs = anchor
                loc = off
                order_e = np.arange(m)
            else:
                left_abs = anchor + off[-1]
                loc = (off - off[-1])[::-1]
                order_e = np.arange(m)[::-1]
            loc[0] = 0.0
            e, c, lens = _segment(loc, grid_abs - left_abs, m)
            ns.append(np.full(len(e), n, dtype=np.int32))
            is_.append(order_e[e].astype(np.int32))
            js.append(c.astype(np.int32))
            lebs.append(lens)
            if n == N:
                # mass with phi > N: the preimage of [0, x_{N-1}], spread over
                # targets with the profile of the deepest cylinder
                prof = np.empty(m)
                prof[order_e] = np.diff(loc)
                prof /= prof.sum()
                t_w = float(rs.tail_widths(b)[N])
                t_anchor = float(br.invert(np.float64(0.0)))
                t_lo = t_anchor if inc else t_anchor - t_w
                _, tc, tl = _segment(np.array([0.0, t_w]), grid_abs - t_lo, m)
                for cj, lj in zip(tc, tl):
                    tail_i.append(np.arange(m, dtype=np.int32))
                    tail_j.append(np.full(m, cj, dtype=np.int32))
                    tail_leb.append(lj * prof)
    n_arr = np.concatenate(ns)
    order = np.argsort(n_arr, kind="stable")
    ov = InducedOverlaps(
        m=m, N=N, y_lo=rs.y_lo, width=w,
        n=n_arr[order], i=np.concatenate(is_)[order], j=np.concatenate(js)[order],
        leb=np.concatenate(lebs)[order],
        tail_i=np.concatenate(tail_i), tail_j=np.concatenate(tail_j),
        tail_leb=np.concatenate(tail_leb),
        z_mid=0.5 * (z[:, :-1] + z[:, 1:]),
    )
    rs._memo[key] = ov
    return ov
