"""Numerical checks of the limit laws for ``T_n`` and ``L^n``.

Each verifier turns a computed sequence into a :class:`VerifierReport`
holding normalised values at checkpoints, the limiting constant, relative
deviations and a trend verdict.  "Pointwise on Y" statements are evaluated
at the mu-median cell of the grid together with a 5-cell sample at the mu
quantiles 0.1, 0.3, 0.5, 0.7, 0.9.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .density import spread_density
from .errors import BetaOutOfRange, UnsupportedObservable
from .induced import TailModel
from .maps import PiecewiseMap
from .renewal_ops import ObservableOnX, OperatorSeq, _cell_average, integral_on_X, \
    lift_series, renewal_recursion
from .spectral import ConstantSet, d_beta, gamma_rate

SAMPLE_QUANTILES = (0.1, 0.3, 0.5, 0.7, 0.9)


# ---------------------------------------------------------------------------
# normalisation


@dataclass(frozen=True)
class NormalizerM:
    """``m(n) = ell(n)`` for beta < 1 and ``sum_{j<=n} ell(j)/j`` for beta = 1.

    ``mode='ell'`` takes ``ell(n) = tail(n) n^beta`` from the tail model;
    ``mode='constant'`` freezes ell at the fitted constant c (beta < 1 only).
    """

    beta: float
    ell: Callable
    mode: str = "ell"

    @classmethod
    def from_tail(cls, tail: TailModel, mode: str = "ell") -> "NormalizerM":
        b = tail.beta
        if mode == "constant":
            if b >= 1.0:
                raise ValueError("constant normaliser needs beta < 1")
            c = tail.c_fit
            return cls(b, lambda n: np.full(np.shape(n), c, dtype=float), mode)
        if mode != "ell":
            raise ValueError(f"unknown mode {mode!r}")
        return cls(b, lambda n: tail.tail_at(n) * np.asarray(n, dtype=float) ** b, mode)

    @classmethod
    def constant(cls, beta: float, c: float) -> "NormalizerM":
        return cls(beta, lambda n: np.full(np.shape(n), c, dtype=float), "constant")

    def m_of_n(self, n) -> np.ndarray:
        n = np.atleast_1d(np.asarray(n, dtype=np.int64))
        if self.beta < 1.0:
            return self.ell(n.astype(float))
        j = np.arange(1, int(n.max()) + 1, dtype=float)
        cum = np.cumsum(self.ell(j) / j)
        return cum[n - 1]


def seq_tail(seq: OperatorSeq):
    """``mu(phi > n)`` of the discretised operator, ``c n^{-beta}`` past the horizon."""
    t = np.concatenate([[1.0], 1.0 - np.cumsum(seq.return_masses())])
    c, b, N = seq.tail_c, seq.tail_beta, seq.N

    def tail(n):
        n = np.asarray(n)
        ni = np.minimum(n, N).astype(np.int64)
        return np.where(n <= N, t[ni], c * np.maximum(n, 1.0) ** (-b))
    return tail


def _default_norm(seq: OperatorSeq) -> NormalizerM:
    """Constant c for beta < 1; the truncated mean ``sum_{j<=n} tail(j)`` for beta = 1."""
    if seq.tail_beta >= 1.0:
        tail = seq_tail(seq)
        return NormalizerM(1.0, lambda n: tail(n) * np.asarray(n, dtype=float), "ell")
    return NormalizerM.constant(seq.tail_beta, seq.tail_c)


# ---------------------------------------------------------------------------
# reports


def trend_of(devs: Sequence[float], rtol: float = 1e-9) -> str:
    d = np.asarray(devs, dtype=float)
    if len(d) < 2:
        return "flat"
    steps = np.diff(d)
    if np.all(steps <= rtol * np.abs(d[:-1])):
        return "shrinking"
    if np.all(steps >= -rtol * np.abs(d[:-1])):
        return "growing"
    return "flat"


def loglog_slope(n, y) -> float:
    n = np.asarray(n, dtype=float)
    y = np.abs(np.asarray(y, dtype=float))
    return float(np.polyfit(np.log(n), np.log(y), 1)[0])


@dataclass
class VerifierReport:
    statement_id: str
    beta: float
    alpha: Optional[float]
    target: float
    tolerance: float
    n_checkpoints: list = field(default_factory=list)
    values: list = field(default_factory=list)
    deviations: list = field(default_factory=list)
    trend: str = "flat"
    passed: bool = False
    extra: dict = field(default_factory=dict)

    def append(self, n: int, value: float, deviation: float) -> None:
        self.n_checkpoints.append(int(n))
        self.values.append(float(value))
        self.deviations.append(float(deviation))

    def as_dict(self) -> dict:
        d = asdict(self)
        d["pass"] = d.pop("passed")
        return d

    def to_json(self, path=None, indent: int = 2) -> str:
        text = json.dumps(self.as_dict(), indent=indent, default=_json_default)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    def summary(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        last = self.values[-1] if self.values else float("nan")
        dev = self.deviations[-1] if self.deviations else float("nan")
        return (f"{flag} {self.statement_id} beta={self.beta:.4g} value={last:.6g} "
                f"target={self.target:.6g} dev={dev:.3g} trend={self.trend}")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(type(o))


# ---------------------------------------------------------------------------
# helpers


def sample_cells(mu: np.ndarray, quantiles=SAMPLE_QUANTILES):
    """Median cell and the cells at the given mu quantiles."""
    cum = np.cumsum(mu) / np.sum(mu)
    med = int(np.searchsorted(cum, 0.5))
    cells = np.searchsorted(cum, np.asarray(quantiles)).astype(int)
    return med, cells


def T_history(seq: OperatorSeq, V=None, n_max: Optional[int] = None) -> np.ndarray:
    """``T_n V`` for n = 0..n_max, reusing ``seq.T_obs`` when it matches."""
    V = np.ones((seq.m, 1)) if V is None else np.asarray(V, dtype=float)
    if V.ndim == 1:
        V = V[:, None]
    n_max = seq.N if n_max is None else n_max
    if (seq.T_obs is not None and seq.observables is not None
            and seq.observables.shape == V.shape and np.array_equal(seq.observables, V)
            and len(seq.T_obs) > n_max):
        return seq.T_obs[: n_max + 1]
    return renewal_recursion(seq, V, n_max=n_max)


def _series(seq: OperatorSeq, v, history, n_max):
    v = np.ones(seq.m) if v is None else np.asarray(v, dtype=float).ravel()
    H = T_history(seq, v, n_max) if history is None else np.asarray(history)
    if H.ndim == 3:
        H = H[:, :, 0]
    return v, H


# ---------------------------------------------------------------------------
# first order


def verify_first_order(seq: OperatorSeq, consts: Optional[ConstantSet] = None,
                       checkpoints: Sequence[int] = (512, 1024, 2048, 4096), v=None,
                       norm: Optional[NormalizerM] = None, history=None,
                       tol: float = 0.10) -> VerifierReport:
    """``m(n) n^{1-beta} (T_n v)(y) -> d_beta int_Y v dmu``.

    Passes when the last value is within ``tol`` and the maximal deviation
    over the sample cells shrinks along the checkpoints.
    """
    beta = seq.tail_beta
    if not 0.5 < beta <= 1.0:
        raise BetaOutOfRange("first-order convergence needs beta in (1/2, 1]")
    norm = _default_norm(seq) if norm is None else norm
    v, H = _series(seq, v, history, max(checkpoints))
    db = consts.d_beta if consts is not None else d_beta(beta)
    target = db * float(seq.integrate(v))
    med, cells = sample_cells(seq.mu)
    rep = VerifierReport("first-order", beta, seq.alpha, target, tol)
    mn = norm.m_of_n(checkpoints)
    samples = []
    for n, m_n in zip(checkpoints, mn):
        w = m_n * n ** (1.0 - beta) * H[n]
        dev = float(np.max(np.abs(w[cells] / target - 1.0)))
        rep.append(n, w[med], dev)
        samples.append(w[cells].tolist())
    rep.trend = trend_of(rep.deviations)
    rep.passed = bool(abs(rep.values[-1] / target - 1.0) <= tol and rep.trend == "shrinking")
    rep.extra = {"sample_cells": cells.tolist(), "median_cell": med, "sample_values": samples,
                 "normalizer": norm.mode}
    return rep


def verify_mean_zero(seq: OperatorSeq, v, checkpoints: Sequence[int] = (512, 1024, 2048, 4096),
                     history=None, slack: float = 0.15) -> VerifierReport:
    """For ``int v dmu = 0``: ``max |T_n v|`` decays at least like ``n^{-beta}``."""
    beta = seq.tail_beta
    v, H = _series(seq, v, history, max(checkpoints))
    if abs(seq.integrate(v)) > 1e-10 * np.max(np.abs(v)):
        raise ValueError("observable must have mean zero")
    rep = VerifierReport("mean-zero", beta, seq.alpha, -beta, slack)
    for n in checkpoints:
        val = float(np.max(np.abs(H[n])))
        rep.append(n, val, val * n ** beta)
    slope = loglog_slope(checkpoints, rep.values)
    rep.extra = {"slope": slope}
    rep.trend = trend_of(rep.values)
    rep.passed = bool(slope <= -beta + slack)
    return rep


# ---------------------------------------------------------------------------
# second order


def verify_second_order(seq: OperatorSeq, consts: ConstantSet,
                        checkpoints: Sequence[int] = (512, 1024, 2048, 4096), history=None,
                        tol: float = 0.25, slack: float = 0.1) -> VerifierReport:
    """Residual ``n^{1-beta}(c n^{1-beta} T_n 1 - d_beta)``.

    For beta > 3/4 it is compared with ``d_{beta,1}``; otherwise only the
    decay of ``|c n^{1-beta} T_n 1 - d_beta|`` at rate ``n^{-gamma}`` is
    checked.
    """
    beta = seq.tail_beta
    if not 0.5 < beta < 1.0:
        raise BetaOutOfRange("second-order expansion needs beta in (1/2, 1)")
    c = consts.c
    _, H = _series(seq, None, history, max(checkpoints))
    med, cells = sample_cells(seq.mu)
    g = gamma_rate(beta)
    if beta > 0.75:
        target = consts.d_beta_j(1)
        rep = VerifierReport("second-order", beta, seq.alpha, target, tol)
        for n in checkpoints:
            r = n ** (1.0 - beta) * (c * n ** (1.0 - beta) * H[n] - consts.d_beta)
            rep.append(n, r[med], float(np.max(np.abs(r[cells] / target - 1.0))))
        rep.trend = trend_of(rep.deviations)
        rep.passed = bool(abs(rep.values[-1] / target - 1.0) <= tol
                          and rep.trend == "shrinking")
        rep.extra = {"c_H": consts.c_H, "gamma": g}
        return rep
    rep = VerifierReport("second-order-envelope", beta, seq.alpha, -g, slack)
    for n in checkpoints:
        e = np.abs(c * n ** (1.0 - beta) * H[n][cells] - consts.d_beta)
        rep.append(n, float(e.max()), float(e.max()) * n ** g)
    slope = loglog_slope(checkpoints, rep.values)
    rep.trend = trend_of(rep.values)
    rep.passed = bool(slope <= -g + slack)
    rep.extra = {"slope": slope, "gamma": g, "informational": beta < 0.7}
    return rep


# ---------------------------------------------------------------------------
# Cesaro sums


def verify_dual_ergodicity(seq: OperatorSeq, consts: Optional[ConstantSet] = None,
                           checkpoints: Sequence[int] = (512, 1024, 2048, 4096), v=None,
                           norm: Optional[NormalizerM] = None, history=None,
                           tol: float = 0.05) -> VerifierReport:
    """``m(n) n^{-beta} sum_{j=1}^n (T_j v)(y) -> beta^{-1} d_beta int_Y v dmu``."""
    beta = seq.tail_beta
    norm = _default_norm(seq) if norm is None else norm
    v, H = _series(seq, v, history, max(checkpoints))
    db = consts.d_beta if consts is not None else d_beta(beta)
    target = db / beta * float(seq.integrate(v))
    med, cells = sample_cells(seq.mu)
    S = np.cumsum(H[1:], axis=0)   # S[n-1] = sum_{j=1}^n T_j v
    rep = VerifierReport("dual-ergodicity", beta, seq.alpha, target, tol)
    for n, m_n in zip(checkpoints, norm.m_of_n(checkpoints)):
        w = m_n * n ** (-beta) * S[n - 1]
        rep.append(n, w[med], float(np.max(np.abs(w[cells] / target - 1.0))))
    rep.trend = trend_of(rep.deviations)
    rep.passed = bool(rep.deviations[-1] <= tol)
    rep.extra = {"normalizer": norm.mode}
    return rep


# ---------------------------------------------------------------------------
# beta <= 1/2


def verify_small_beta(seq: OperatorSeq, checkpoints: Sequence[int] = (1024, 2048, 4096),
                      eps: Sequence[float] = (0.1, 0.05), norm: Optional[NormalizerM] = None,
                      history=None, tol: float = 0.10) -> VerifierReport:
    """Envelope bound, zero-density convergence and liminf for beta <= 1/2.

    Values are running minima of ``ell(n) n^{1-beta} (T_n 1)(y)`` over
    ``[N/2, N]`` at the median cell; the pass flag also requires the
    exceptional-set densities to decrease and the envelope to stay bounded.
    """
    beta = seq.tail_beta
    if beta > 0.5:
        raise BetaOutOfRange("small-beta checks need beta <= 1/2")
    norm = _default_norm(seq) if norm is None else norm
    Nmax = max(checkpoints)
    _, H = _series(seq, None, history, Nmax)
    med, cells = sample_cells(seq.mu)
    n = np.arange(1, Nmax + 1)
    ell = norm.m_of_n(n)
    w = (ell * n ** (1.0 - beta))[:, None] * H[1:]
    target = d_beta(beta)
    env = n ** beta / ell * H[1:].max(axis=1)
    if beta == 0.5:
        env = env / np.log(math.pi * n)
    env = np.maximum.accumulate(env)
    rep = VerifierReport("small-beta", beta, seq.alpha, target, tol)
    dens = {e: [] for e in eps}
    for N in checkpoints:
        lo = N // 2 - 1
        rep.append(N, float(w[lo:N, med].min()),
                   float(np.max(np.abs(w[lo:N, cells].min(axis=0) / target - 1.0))))
        for e in eps:
            dens[e].append(float(np.mean(np.abs(w[:N, med] - target) > e)))
    decreasing = all(np.all(np.diff(dens[e]) < 0) or max(dens[e]) == 0.0 for e in eps)
    env_vals = [float(env[N - 1]) for N in checkpoints]
    bounded = env_vals[-1] <= 1.05 * env_vals[-2] if len(env_vals) > 1 else True
    rep.trend = trend_of(rep.deviations)
    rep.passed = bool(decreasing and bounded and abs(rep.values[-1] / target - 1.0) <= tol)
    rep.extra = {"exceptional_density": {str(e): d for e, d in dens.items()},
                 "envelope": env_vals, "envelope_log_factor": beta == 0.5,
                 "decreasing": decreasing, "bounded": bounded}
    return rep


# ---------------------------------------------------------------------------
# the lift to X


def lebesgue_ulam(fmap: PiecewiseMap, cells: int) -> sp.csr_matrix:
    """Ulam matrix of the Lebesgue transfer operator on ``cells`` equal cells of [0, 1].

    ``P[j, i] = |cell_j ∩ f^{-1} cell_i| / |cell_j|``; rows sum to 1.
    """
    w = 1.0 / cells
    edges = np.linspace(0.0, 1.0, cells + 1)
    rows, cols, vals = [], [], []
    for br in fmap.branches:
        ya, yb = sorted((float(br.forward(br.lo)), float(br.forward(br.hi))))
        t = np.unique(np.concatenate([[ya, yb], edges[(edges > ya) & (edges < yb)]]))
        p = np.asarray(br.invert(t))
        if not br.increasing:
            p, t = p[::-1], t[::-1]
        # partition of the branch domain into preimages of target cells, refined by the grid
        g = edges[(edges > br.lo) & (edges < br.hi)]
        bp = np.unique(np.concatenate([p, g]))
        mid = 0.5 * (bp[:-1] + bp[1:])
        length = np.diff(bp)
        piece = np.clip(np.searchsorted(p, mid) - 1, 0, len(p) - 2)
        tmid = 0.5 * (t[piece] + t[piece + 1])
        src = np.clip((mid / w).astype(np.int64), 0, cells - 1)
        dst = np.clip((tmid / w).astype(np.int64), 0, cells - 1)
        rows.append(src)
        cols.append(dst)
        vals.append(length / w)
    P = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(cells, cells))
    rowsum = np.asarray(P.sum(axis=1)).ravel()
    return sp.diags(1.0 / rowsum) @ P


def integral_on_grid(density_x, v: ObservableOnX) -> float:
    """``int v dmu`` from the spread density on its x-grid."""
    e = density_x.x_edges
    return float(np.sum(_cell_average(v, e[:-1], e[1:]) * density_x.h_x * np.diff(e)))


def direct_Ln(seq: OperatorSeq, v: ObservableOnX, n_max: int, cells: int = 4096,
              epsilon: float = 0.05):
    """``L^n v`` on the window ``[epsilon, 1]`` by Ulam iteration on [0, 1].

    ``L v = Lhat(v h) / h`` with Lhat the Lebesgue transfer operator.
    Returns (window edges, values of shape (n_max + 1, window cells), density).
    """
    if v.support_lo < epsilon:
        raise UnsupportedObservable("support must lie inside the window")
    dx = spread_density(seq.rs, seq.density, epsilon=epsilon, m_x=cells, N=seq.N)
    e = dx.x_edges
    k0 = cells - (len(e) - 1)
    P = lebesgue_ulam(seq.rs.fmap, cells)
    PT = P.T.tocsr()
    rho = np.zeros(cells)
    rho[k0:] = _cell_average(v, e[:-1], e[1:]) * dx.h_x
    out = np.empty((n_max + 1, cells - k0))
    out[0] = rho[k0:] / dx.h_x
    for k in range(1, n_max + 1):
        rho = PT @ rho
        out[k] = rho[k0:] / dx.h_x
    return e, out, dx


def verify_Ln_on_X(seq: OperatorSeq, v: ObservableOnX, direct_ulam: bool = True,
                   checkpoints: Sequence[int] = (512, 1024, 2048), cells: int = 4096,
                   epsilon: float = 0.05, norm: Optional[NormalizerM] = None,
                   tol: float = 0.05) -> VerifierReport:
    """``m(n) n^{1-beta} L^n v -> d_beta int_X v dmu`` for v supported away from 0.

    The renewal lift gives ``1_Y L^n v``; the direct Ulam iteration gives
    ``L^n v`` on the whole window, whose Y part is averaged onto the grid of
    Y for the comparison.
    """
    beta = seq.tail_beta
    if not 0.5 < beta <= 1.0:
        raise BetaOutOfRange("the lift check needs beta in (1/2, 1]")
    if not v.support_lo > 0.0:
        raise UnsupportedObservable("observable support reaches the indifferent point 0")
    norm = _default_norm(seq) if norm is None else norm
    nmax = max(checkpoints)
    lifted = lift_series(seq, v, nmax)
    I_dec = integral_on_X(seq, v)
    target = d_beta(beta) * I_dec
    med, cells_s = sample_cells(seq.mu)
    rep = VerifierReport("on-X", beta, seq.alpha, target, tol)
    mn = norm.m_of_n(checkpoints)
    for n, m_n in zip(checkpoints, mn):
        w = m_n * n ** (1.0 - beta) * lifted[n]
        rep.append(n, w[med], float(np.max(np.abs(w[cells_s] / target - 1.0))))
    rep.trend = trend_of(rep.deviations)
    extra = {"integral_decomposition": I_dec}
    ok = abs(rep.values[-1] / target - 1.0) <= tol
    if direct_ulam:
        e, D, dx = direct_Ln(seq, v, nmax, cells, epsilon)
        extra["integral_grid"] = integral_on_grid(dx, v)
        # average the Y part of the direct result onto the grid of Y
        hx = dx.h_x
        xw = np.diff(e)
        ycells = e[:-1] >= seq.y_lo - 1e-15
        per = int(ycells.sum()) // seq.m
        agree, window = [], []
        for n, m_n in zip(checkpoints, mn):
            mass = (D[n] * hx * xw)[ycells].reshape(seq.m, per).sum(axis=1)
            dY = mass / (hx * xw)[ycells].reshape(seq.m, per).sum(axis=1)
            wd = m_n * n ** (1.0 - beta) * dY
            wl = m_n * n ** (1.0 - beta) * lifted[n]
            agree.append(float(np.max(np.abs(wd[cells_s] / wl[cells_s] - 1.0))))
            win = m_n * n ** (1.0 - beta) * D[n]
            window.append([float(win.min()), float(win.max())])
        extra.update({"direct_vs_lift": agree, "direct_window_range": window,
                      "direct_median": float(wd[med])})
        ok = ok and agree[-1] <= tol and abs(wd[med] / target - 1.0) <= tol
    rep.extra = extra
    rep.passed = bool(ok)
    return rep
