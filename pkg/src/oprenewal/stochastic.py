"""Monte Carlo for occupation times and last-visit times.

Orbits are advanced one excursion at a time: from a cell of Y the sampler
draws a piece of that cell, i.e. a return time n and the target cell of
``F``, with probability equal to the Lebesgue fraction of the cell that the
piece occupies (the exact cylinder overlaps of the induced map).  Pieces
beyond the horizon N draw n from the fitted tail ``P(phi > n | phi > N) =
(N / n)^beta``.  Cost per excursion is O(log) regardless of its length.
"""
from __future__ import annotations

import csv
import json
import math
from functools import lru_cache
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import mpmath
import numpy as np
from scipy import stats
from scipy.special import gamma as Gamma

from .errors import SeriesDivergence
from .induced import induced_overlaps
from .renewal_ops import OperatorSeq
from .spectral import d_beta

BLOCK = 4096


# ---------------------------------------------------------------------------
# samplers


@dataclass
class RenewalSampler:
    """Excursion sampler on the cells of Y.

    ``G`` is increasing: the pieces of cell j occupy ``(j, j + 1]`` in
    proportion to their Lebesgue fraction.  ``piece_n`` is the return time
    (0 for the tail piece) and ``piece_i`` the target cell.
    """

    beta: float
    N: int
    mu: np.ndarray
    G: np.ndarray
    piece_n: np.ndarray
    piece_i: np.ndarray
    y_lo: float = 0.5
    c: float = 1.0
    fmap: object = field(default=None, repr=False)
    _mu_cum: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self._mu_cum = np.cumsum(self.mu) / np.sum(self.mu)

    @property
    def m(self) -> int:
        return len(self.mu)

    @classmethod
    def from_operator(cls, seq: OperatorSeq) -> "RenewalSampler":
        rs = seq.rs
        ov = induced_overlaps(rs, seq.m, seq.N)
        j = np.concatenate([ov.j, ov.tail_j]).astype(np.int64)
        n = np.concatenate([ov.n, np.zeros(len(ov.tail_j), dtype=ov.n.dtype)]).astype(np.int64)
        i = np.concatenate([ov.i, ov.tail_i]).astype(np.int64)
        p = np.concatenate([ov.leb, ov.tail_leb])
        order = np.lexsort((n, j))
        j, n, i, p = j[order], n[order], i[order], p[order]
        rowsum = np.bincount(j, weights=p, minlength=seq.m)
        cum = np.cumsum(p / rowsum[j])
        start = np.concatenate([[0], np.cumsum(np.bincount(j, minlength=seq.m))[:-1]])
        offset = np.concatenate([[0.0], cum])[start]
        G = j + (cum - offset[j])
        # close each group exactly at j + 1
        last = np.cumsum(np.bincount(j, minlength=seq.m)) - 1
        G[last] = np.arange(seq.m) + 1.0
        return cls(seq.tail_beta, seq.N, seq.mu.copy(), G, n, i, seq.y_lo, seq.tail_c, rs.fmap)

    @classmethod
    def iid(cls, f, beta: float, c: float = 1.0) -> "RenewalSampler":
        """Independent return times with law ``f`` (one cell, Pareto tail past ``len(f) - 1``)."""
        f = np.asarray(f, dtype=float)
        N = len(f) - 1
        p = np.concatenate([f[1:], [max(1.0 - f[1:].sum(), 0.0)]])
        cum = np.cumsum(p / p.sum())
        cum[-1] = 1.0
        n = np.concatenate([np.arange(1, N + 1), [0]])
        return cls(beta, N, np.ones(1), cum, n, np.zeros(N + 1, dtype=np.int64), 0.0, c)

    def initial_cells(self, rng, size: int) -> np.ndarray:
        return np.minimum(np.searchsorted(self._mu_cum, rng.random(size), side="right"),
                          self.m - 1)

    def step(self, rng, cells: np.ndarray):
        """One excursion from each cell: (return times, next cells)."""
        u = rng.random(len(cells))
        k = np.searchsorted(self.G, cells + u, side="right")
        k = np.minimum(k, len(self.G) - 1)
        n = self.piece_n[k].astype(np.float64)
        tail = n == 0
        if np.any(tail):
            v = rng.random(int(tail.sum()))
            n[tail] = np.ceil(self.N * (1.0 - v) ** (-1.0 / self.beta))
        return n, self.piece_i[k]

    def sample_returns(self, rng, size: int) -> np.ndarray:
        """Return times of stationary starting points (for checks of the tail)."""
        n, _ = self.step(rng, self.initial_cells(rng, size))
        return n


def _rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[seed, block]))


def _threads(threads: Optional[int]) -> int:
    if threads is not None:
        return max(1, int(threads))
    return max(1, int(os.environ.get("THREADS", "1")))


def simulate_renewals(sampler: RenewalSampler, n: int, n_samples: int, seed: int = 0,
                      threads: Optional[int] = None):
    """Occupation ``S_n = #{1 <= j <= n : f^j y in Y}`` and last visit ``Z_n``.

    Samples are produced in blocks of 4096 with independent counter-based
    streams keyed by (seed, block), so results do not depend on threading.
    """
    nblocks = (n_samples + BLOCK - 1) // BLOCK

    def run(b: int):
        size = min(BLOCK, n_samples - b * BLOCK)
        rng = _rng(seed, b)
        cells = sampler.initial_cells(rng, size)
        t = np.zeros(size)
        S = np.zeros(size, dtype=np.int64)
        Z = np.zeros(size)
        act = np.arange(size)
        while len(act):
            dn, cells_new = sampler.step(rng, cells[act])
            tn = t[act] + dn
            hit = tn <= n
            ai = act[hit]
            S[ai] += 1
            Z[ai] = tn[hit]
            t[ai] = tn[hit]
            cells[ai] = cells_new[hit]
            act = ai
        return S, Z

    with ThreadPoolExecutor(_threads(threads)) as ex:
        parts = list(ex.map(run, range(nblocks)))
    return (np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts]))


def simulate_orbits(sampler: RenewalSampler, n: int, n_samples: int, seed: int = 0):
    """Direct iteration of f from mu-distributed points of Y: (S_n, Z_n)."""
    if sampler.fmap is None:
        raise ValueError("direct orbits need the map")
    rng = _rng(seed, 1 << 20)
    cells = sampler.initial_cells(rng, n_samples)
    w = (1.0 - sampler.y_lo) / sampler.m
    x = sampler.y_lo + w * (cells + rng.random(n_samples))
    S = np.zeros(n_samples, dtype=np.int64)
    Z = np.zeros(n_samples)
    for j in range(1, n + 1):
        x = _step_map(sampler.fmap, x)
        inY = x >= sampler.y_lo
        S += inY
        Z[inY] = j
    return S, Z


def _step_map(fmap, x):
    out = np.asarray(fmap(x), dtype=float)
    return np.clip(out, 1e-300, 1.0 - 1e-16)


# ---------------------------------------------------------------------------
# limit laws


@dataclass
class EmpiricalLaw:
    beta: float
    n: int
    samples: np.ndarray = field(repr=False)
    reference_id: str = ""
    ks: float = float("nan")
    moments: list = field(default_factory=list)
    seed: int = 0
    extra: dict = field(default_factory=dict)

    def ecdf(self, x):
        s = np.sort(self.samples)
        return np.searchsorted(s, np.asarray(x), side="right") / len(s)

    def report(self) -> dict:
        return {"beta": self.beta, "n": self.n, "n_samples": int(len(self.samples)),
                "ks": self.ks, "moments": self.moments, "reference_id": self.reference_id,
                **self.extra}

    def to_json(self, path=None) -> str:
        text = json.dumps(self.report(), indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    def to_csv(self, path, header=()) -> None:
        with open(path, "w", newline="") as fh:
            for line in header:
                fh.write(f"# {line}\n")
            wr = csv.writer(fh)
            wr.writerow(["seed", "n", "value"])
            for v in self.samples:
                wr.writerow([self.seed, self.n, repr(float(v))])


def _moments(x, p=4):
    return [float(np.mean(x ** k)) for k in range(1, p + 1)]


def ml_moment(beta: float, p: int) -> float:
    """``E M^p = p! Gamma(1+beta)^p / Gamma(1+p beta)`` (mean 1)."""
    return math.factorial(p) * Gamma(1.0 + beta) ** p / Gamma(1.0 + p * beta)


def occupation_scale(beta: float, n: int, m_n: float) -> float:
    """``E S_n ~ d_beta n^beta / (beta m(n))``; for beta = 1, ``n / m(n)``."""
    if beta == 1.0:
        return n / m_n
    return d_beta(beta) * n ** beta / (beta * m_n)


def _ml_terms(beta: float, z: float, digits: int, kmax: int):
    """Number of terms and log10 of the largest term magnitude, in floating point."""
    peak = -math.inf
    k = 1
    while True:
        lm = (math.lgamma(beta * k + 1.0) + k * math.log(z) - math.log(k)
              - math.lgamma(k + 1.0)) / math.log(10.0)
        peak = max(peak, lm)
        if k > 10 and lm < peak and lm < -digits:
            return k, peak
        k += 1
        if k > kmax:
            raise SeriesDivergence(f"series needs more than {kmax} terms at z={z:g}")


def mittag_leffler_cdf(beta: float, x, dps: int = 30, kmax: int = 20000):
    """CDF of the Mittag-Leffler law with mean 1 (moments ``ml_moment``).

    With ``M = Gamma(1+beta) X`` the series
    ``F_X(x) = (1/(pi beta)) sum_k (-1)^{k+1} Gamma(beta k + 1) sin(pi beta k) x^k / (k k!)``
    is summed with enough working precision to absorb the cancellation
    between its largest terms, leaving about ``dps`` correct digits.  Raises
    SeriesDivergence when more than ``kmax`` terms would be needed.
    """
    if not 0.0 < beta < 1.0:
        raise ValueError("beta must lie in (0, 1)")
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty(len(xs))
    g = Gamma(1.0 + beta)
    for q, xv in enumerate(xs):
        if xv <= 0.0:
            out[q] = 0.0
            continue
        kend, peak = _ml_terms(beta, xv / g, dps, kmax)
        with mpmath.workdps(dps + max(0, int(math.ceil(peak))) + 10):
            b = mpmath.mpf(beta)
            z = mpmath.mpf(xv) / mpmath.gamma(1 + b)
            s = mpmath.mpf(0)
            mag = z * mpmath.gamma(b + 1)   # k = 1, updated by ratios
            for k in range(1, kend + 1):
                if k > 1:
                    mag *= z * mpmath.gamma(b * k + 1) / mpmath.gamma(b * (k - 1) + 1) \
                        * (k - 1) / (k * k)
                # the sine factor vanishes at some k, so terms are not monotone
                s += (-1) ** (k + 1) * mpmath.sinpi(b * k) * mag
            val = s / (mpmath.pi * b)
        out[q] = min(max(float(val), 0.0), 1.0)
    return out if np.ndim(x) else out[0]


def half_normal_cdf(x):
    """Closed form at beta = 1/2: ``|N(0, pi/2)|``."""
    return stats.halfnorm(scale=math.sqrt(math.pi / 2.0)).cdf(x)


def arcsine_cdf(beta: float, t):
    """``P(zeta_beta <= t) = d_beta int_0^t u^{beta-1} (1-u)^{-beta} du``."""
    return stats.beta(beta, 1.0 - beta).cdf(t)


def _ks_against(samples, cdf: Callable) -> float:
    return float(stats.kstest(samples, cdf).statistic)


@lru_cache(maxsize=8)
def _ml_reference(beta: float) -> Callable:
    if beta == 0.5:
        return half_normal_cdf
    q = np.linspace(0.0, 1.0, 2001) ** 2
    xmax = 1.0
    while 1.0 - mittag_leffler_cdf(beta, xmax) > 1e-9:
        xmax *= 1.5
    grid = q * xmax
    F = mittag_leffler_cdf(beta, grid)
    return lambda x: np.interp(x, grid, F, right=1.0)


def sample_occupation(sampler: RenewalSampler, n: int, n_samples: int, seed: int = 0,
                      m_n: Optional[float] = None, threads: Optional[int] = None,
                      S=None) -> EmpiricalLaw:
    """Normalised occupation times ``S_n / (d_beta n^beta / (beta m(n)))``.

    The limit has mean 1; ``m(n)`` defaults to the fitted constant c
    (for beta = 1 pass the truncated mean).
    """
    beta = sampler.beta
    if S is None:
        S, _ = simulate_renewals(sampler, n, n_samples, seed, threads)
    m_n = sampler.c if m_n is None else m_n
    x = S / occupation_scale(beta, n, m_n)
    law = EmpiricalLaw(beta, n, x, seed=seed, moments=_moments(x))
    if beta < 1.0:
        law.reference_id = f"mittag-leffler(beta={beta:g})"
        law.ks = _ks_against(x, _ml_reference(beta))
        law.extra["reference_moments"] = [ml_moment(beta, p) for p in range(1, 5)]
    else:
        law.reference_id = "degenerate(1)"
        # distance to the point mass at 1
        law.ks = float(max(np.mean(x < 1.0), np.mean(x > 1.0)))
        law.extra["variance"] = float(np.var(x))
    return law


def sample_arcsine(sampler: RenewalSampler, n: int, n_samples: int, seed: int = 0,
                   threads: Optional[int] = None, Z=None) -> EmpiricalLaw:
    """Last visit ``Z_n / n`` against the Beta(beta, 1 - beta) law."""
    beta = sampler.beta
    if not 0.0 < beta < 1.0:
        raise ValueError("beta must lie in (0, 1)")
    if Z is None:
        _, Z = simulate_renewals(sampler, n, n_samples, seed, threads)
    x = Z / n
    law = EmpiricalLaw(beta, n, x, f"beta({beta:g},{1 - beta:g})", seed=seed,
                       moments=_moments(x))
    law.ks = _ks_against(x, lambda t: arcsine_cdf(beta, t))
    return law
