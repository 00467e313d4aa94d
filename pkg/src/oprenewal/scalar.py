"""Scalar renewal sequences ``u_0 = 1, u_n = sum_{j=1}^n f_j u_{n-j}``.

These are the 1x1 shadow of the operator recursion and a fast oracle for it.
The ``fft`` path is an online (divide and conquer) convolution: the left half
of every block is finished first, its contribution to the right half is added
by one FFT product, and short blocks are solved as an IIR filter.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import signal

from .spectral import d_beta

# ---------------------------------------------------------------------------
# renewal sequences


@dataclass
class ScalarRenewal:
    f: np.ndarray
    u: np.ndarray
    method: str = "direct"

    @property
    def N(self) -> int:
        return len(self.u) - 1

    def check(self, n: int) -> float:
        """Residual of the convolution identity at n."""
        j = np.arange(1, n + 1)
        fj = np.where(j < len(self.f), self.f[np.minimum(j, len(self.f) - 1)], 0.0)
        return float(abs(self.u[n] - np.dot(fj, self.u[n - j])))

    def normalized(self, beta: float, ell: Optional[Callable] = None) -> np.ndarray:
        """``ell(n) n^{1-beta} u_n`` for n >= 1 (index 0 is NaN)."""
        n = np.arange(self.N + 1, dtype=float)
        out = np.full(self.N + 1, np.nan)
        lv = 1.0 if ell is None else ell(n[1:])
        out[1:] = lv * n[1:] ** (1.0 - beta) * self.u[1:]
        return out


def _as_f(f, N: Optional[int]) -> np.ndarray:
    f = np.asarray(f, dtype=float).copy()
    if f.ndim != 1 or len(f) < 1:
        raise ValueError("f must be a 1-d sequence indexed from 0")
    if np.any(f < 0):
        raise ValueError("f_n must be nonnegative")
    N = len(f) - 1 if N is None else int(N)
    if len(f) < N + 1:
        f = np.concatenate([f, np.zeros(N + 1 - len(f))])
    f = f[: N + 1]
    f[0] = 0.0
    if f.sum() > 1.0 + 1e-12:
        raise ValueError(f"sum of f_n is {f.sum():.15g} > 1")
    return f


def _direct(f: np.ndarray) -> np.ndarray:
    N = len(f) - 1
    u = np.zeros(N + 1)
    u[0] = 1.0
    frev = f[::-1].copy()        # frev[N - j] = f_j
    for n in range(1, N + 1):
        # sum_{j=1}^n f_j u_{n-j} = sum_{k=0}^{n-1} u_k f_{n-k}
        u[n] = np.dot(u[:n], frev[N - n:N])
    return u


def _conv(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if min(len(a), len(b)) <= 64:
        return np.convolve(a, b)
    return signal.fftconvolve(a, b)


def _online(f: np.ndarray, base: int) -> np.ndarray:
    N = len(f) - 1
    acc = np.zeros(N + 1)
    acc[0] = 1.0
    u = np.zeros(N + 1)
    den = np.concatenate([[1.0], -f[1:base + 1]])

    def solve(lo: int, hi: int) -> None:
        if hi - lo <= base:
            u[lo:hi] = signal.lfilter([1.0], den[: hi - lo + 1], acc[lo:hi])
            return
        mid = (lo + hi) // 2
        solve(lo, mid)
        # u[lo:mid] feeds n in [mid, hi) through f_{n-k}, n - k in [1, hi - lo)
        c = _conv(u[lo:mid], f[: hi - lo])
        acc[mid:hi] += c[mid - lo: hi - lo]
        solve(mid, hi)

    solve(0, N + 1)
    return u


def renewal_sequence(f, N: Optional[int] = None, method: str = "direct",
                     base: int = 256) -> np.ndarray:
    """``u_0..u_N`` for first-return probabilities ``f`` (``f[0]`` ignored).

    ``method='fft'`` costs O(N log^2 N) and agrees with ``'direct'`` to
    rounding.
    """
    f = _as_f(f, N)
    if method == "direct":
        return _direct(f)
    if method == "fft":
        return _online(f, base)
    raise ValueError(f"unknown method {method!r}")


def renewal(f, N: Optional[int] = None, method: str = "direct") -> ScalarRenewal:
    f = _as_f(f, N)
    return ScalarRenewal(f, renewal_sequence(f, method=method), method)


# ---------------------------------------------------------------------------
# synthetic first-return laws


def f_from_tail(tail) -> np.ndarray:
    """``f_n = tail(n-1) - tail(n)`` with ``tail(0) = 1``."""
    t = np.asarray(tail, dtype=float)
    if abs(t[0] - 1.0) > 1e-12:
        raise ValueError("tail(0) must be 1")
    return np.concatenate([[0.0], -np.diff(t)])


def pareto_f(beta: float, N: int) -> np.ndarray:
    """Exact tail ``P(phi > n) = n^{-beta}`` (so f_1 = 0)."""
    n = np.arange(1, N + 1, dtype=float)
    return f_from_tail(np.concatenate([[1.0], n ** (-beta)]))


def log_pareto_f(beta: float, N: int) -> np.ndarray:
    """Tail ``n^{-beta} log(n + e) / log(1 + e)``: slowly varying part ``~ log n``."""
    n = np.arange(1, N + 1, dtype=float)
    t = n ** (-beta) * np.log(n + math.e) / math.log(1.0 + math.e)
    t = np.minimum.accumulate(np.concatenate([[1.0], t]))
    return f_from_tail(t)


def log_pareto_ell(n):
    return np.log(np.asarray(n, dtype=float) + math.e) / math.log(1.0 + math.e)


def tail_model_f(tail_model, N: int) -> np.ndarray:
    """f from a fitted tail model, extended past its horizon by ``c n^{-beta}``."""
    return f_from_tail(tail_model.tail_at(np.arange(N + 1)))


def shadow_f(seq) -> np.ndarray:
    """``f_n = int_Y R_n 1 dmu`` of an operator sequence (index 0 is 0)."""
    return np.concatenate([[0.0], seq.return_masses()])


# ---------------------------------------------------------------------------
# regular variation


@dataclass
class KaramataCheck:
    p: float
    ns: np.ndarray
    ratio: np.ndarray
    verdict: bool

    @property
    def final(self) -> float:
        return float(self.ratio[-1])


def karamata_sum(ell_samples, p: float, ns: Optional[Sequence[int]] = None,
                 tol: Optional[float] = None) -> KaramataCheck:
    """``sum_{j<=n} ell(j) j^p / (ell(n) n^{p+1} / (p+1))`` at each n in ``ns``.

    ``ell_samples[j-1] = ell(j)``.  The verdict asks for ``|ratio - 1|`` to
    shrink along ``ns`` (and, if ``tol`` is given, to end below it); the
    approach is typically as slow as ``1 / log n``.  For ``p = -1`` the
    ratio is ``ell(n) / tilde_ell(n)`` with ``tilde_ell(n) = sum_{j<=n}
    ell(j)/j``, which tends to 0; the verdict then asks for a decreasing
    ratio.
    """
    ell = np.asarray(ell_samples, dtype=float)
    j = np.arange(1, len(ell) + 1, dtype=float)
    if p < -1:
        raise ValueError("p must be >= -1")
    ns = np.unique(np.geomspace(10, len(ell), 6).astype(int)) if ns is None else np.asarray(ns)
    cum = np.cumsum(ell * j ** p)
    if p == -1:
        ratio = ell[ns - 1] / cum[ns - 1]
        verdict = bool(np.all(np.diff(ratio) < 0))
    else:
        ratio = cum[ns - 1] / (ell[ns - 1] * ns ** (p + 1.0) / (p + 1.0))
        dev = np.abs(ratio - 1.0)
        verdict = bool(np.all(np.diff(dev) <= 0) and (tol is None or dev[-1] <= tol))
    return KaramataCheck(p, ns, ratio, verdict)


# ---------------------------------------------------------------------------
# beta <= 1/2


@dataclass
class ZeroDensityReport:
    beta: float
    target: float
    Ns: list
    eps: list
    density: dict = field(default_factory=dict)   # eps -> [|E_eps(N)| / N]
    liminf: list = field(default_factory=list)    # window minimum over [N/2, N]
    cesaro: list = field(default_factory=list)    # n^{-beta} sum_{j<=n} u_j at each N
    envelope: list = field(default_factory=list)  # max over n <= N of n^beta u_n / ell(n)

    def decreasing(self, eps: float) -> bool:
        d = self.density[eps]
        return bool(np.all(np.diff(d) < 0))

    @property
    def liminf_dev(self) -> float:
        return abs(self.liminf[-1] / self.target - 1.0)

    @property
    def cesaro_dev(self) -> float:
        return abs(self.cesaro[-1] / (self.target / self.beta) - 1.0)


def zero_density_demo(f, beta: float, Ns: Sequence[int], eps=(0.1, 0.05),
                      ell: Optional[Callable] = None, u=None,
                      method: str = "fft") -> ZeroDensityReport:
    """Exceptional-set density, running liminf and Cesaro limit of ``ell n^{1-beta} u_n``."""
    if not 0.0 < beta <= 0.5:
        raise ValueError("zero-density demo is for beta in (0, 1/2]")
    Nmax = max(Ns)
    u = renewal_sequence(f, Nmax, method) if u is None else np.asarray(u)[: Nmax + 1]
    n = np.arange(1, Nmax + 1, dtype=float)
    lv = np.ones_like(n) if ell is None else ell(n)
    w = lv * n ** (1.0 - beta) * u[1:]
    target = d_beta(beta)
    rep = ZeroDensityReport(beta, target, list(Ns), list(eps))
    for e in eps:
        bad = np.abs(w - target) > e
        rep.density[e] = [float(bad[:N].mean()) for N in Ns]
    cs = np.cumsum(u[1:])
    env = np.maximum.accumulate(n ** beta * u[1:] / lv)
    for N in Ns:
        rep.liminf.append(float(w[N // 2 - 1: N].min()))
        rep.cesaro.append(float(lv[N - 1] * N ** (-beta) * cs[N - 1]))
        rep.envelope.append(float(env[N - 1]))
    return rep


# ---------------------------------------------------------------------------
# export


def export_csv(path, u, beta: float, ell: Optional[Callable] = None,
               header: Optional[Sequence[str]] = None, stride: int = 1) -> None:
    """Columns ``n, u_n, ell(n) n^{1-beta} u_n``; header lines start with '#'."""
    u = np.asarray(u)
    with open(path, "w", newline="") as fh:
        for line in header or ():
            fh.write(f"# {line}\n")
        wr = csv.writer(fh)
        wr.writerow(["n", "u_n", "normalized"])
        for k in range(0, len(u), stride):
            lv = 1.0 if ell is None else float(ell(k)) if k else 1.0
            wr.writerow([k, repr(float(u[k])), repr(lv * k ** (1.0 - beta) * float(u[k]))])
