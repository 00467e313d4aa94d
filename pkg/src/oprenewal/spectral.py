"""R on the unit circle, its leading eigenvalue, limit constants and the
Fourier (resolvent quadrature) oracle for ``T_n``.

``R(theta) = sum_n R_n e^{i n theta}``.  Return times beyond the horizon N
enter through the stored tail block multiplied by the phase

    S(theta) / S(0),   S(theta) = sum_{n > N} (tail(n-1) - tail(n)) e^{i n theta},

with the model tail ``c n^{-beta}``; the sum is evaluated through the
polylogarithm expansion of ``sum_{n > N} n^{-beta} e^{i n theta}``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import mpmath
import numpy as np
import scipy.integrate as si
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.special import gamma as Gamma

from .errors import BetaOutOfRange, NoDominantEigenvalue, SingularResolvent
from .induced import TailModel
from .renewal_ops import OperatorSeq

# ---------------------------------------------------------------------------
# closed-form constants


def d_beta(beta: float) -> float:
    """``sin(beta pi) / pi`` for beta in (0, 1), and 1 at beta = 1."""
    if not 0.0 < beta <= 1.0:
        raise BetaOutOfRange(f"beta={beta} outside (0, 1]")
    if beta == 1.0:
        return 1.0
    return math.sin(beta * math.pi) / math.pi


def xi(p: float, sign: int = 1) -> complex:
    """``int_0^inf e^{±i s} s^{-p} ds = Gamma(1-p) e^{±i pi (1-p)/2}`` for p in (0, 1)."""
    if not 0.0 < p < 1.0:
        raise BetaOutOfRange(f"p={p} outside (0, 1)")
    return complex(Gamma(1.0 - p) * np.exp(sign * 1j * math.pi * (1.0 - p) / 2.0))


def xi_quadrature(p: float, sign: int = 1) -> complex:
    """The same integral by direct oscillatory quadrature.

    ``[0, 1]`` uses the algebraic endpoint weight; ``[1, inf)`` uses the
    Fourier-integral rule with series extrapolation.
    """
    if not 0.0 < p < 1.0:
        raise BetaOutOfRange(f"p={p} outside (0, 1)")
    opts = dict(epsabs=1e-13, epsrel=1e-12, limit=400)
    c0 = si.quad(np.cos, 0.0, 1.0, weight="alg", wvar=(-p, 0.0), **opts)[0]
    s0 = si.quad(np.sin, 0.0, 1.0, weight="alg", wvar=(-p, 0.0), **opts)[0]
    g = lambda s: s ** (-p)
    c1 = si.quad(g, 1.0, np.inf, weight="cos", wvar=1.0, limlst=200)[0]
    s1 = si.quad(g, 1.0, np.inf, weight="sin", wvar=1.0, limlst=200)[0]
    return complex(c0 + c1, sign * (s0 + s1))


def c_beta(beta: float) -> complex:
    """``c_beta = -i xi^+_beta = Gamma(1-beta) e^{-i pi beta / 2}``."""
    return -1j * xi(beta, +1)


def gamma_rate(beta: float) -> float:
    """Second-order rate exponent ``min(1 - beta, beta - 1/2)``."""
    return min(1.0 - beta, beta - 0.5)


def c_H_from_tail(tail: TailModel) -> float:
    """``int_0^inf H_1`` with ``H_1(x) = [x]^{-beta} - x^{-beta} + H([x])``
    (and ``1/c - x^{-beta}`` on [0, 1)).

    Integrating piece by piece gives ``1/c + zeta(beta) + sum_{n>=1} H(n)``;
    H beyond the tail horizon follows the fitted ``kappa n^{-2 beta}`` law.
    """
    beta, c = tail.beta, tail.c_fit
    n = np.arange(1, tail.n_max + 1, dtype=float)
    H = tail.tail[1:] / c - n ** (-beta)
    extra = tail.remainder_coef * float(mpmath.zeta(2 * beta, tail.n_max + 1))
    return float(1.0 / c + float(mpmath.zeta(beta)) + math.fsum(H) + extra)


@dataclass(frozen=True)
class ConstantSet:
    """Limit constants for tail exponent beta."""

    beta: float
    d_beta: float
    c_beta: complex
    c_H: float
    e_0: complex
    c: float = 1.0
    gamma: float = 0.0

    def xi_plus(self, p: float) -> complex:
        return xi(p, +1)

    def xi_minus(self, p: float) -> complex:
        return xi(p, -1)

    def d_prime(self, j: int) -> complex:
        """``e_0^j xi^-_{(j+1) beta - j} / c_beta``."""
        p = (j + 1) * self.beta - j
        if not 0.0 < p < 1.0:
            raise BetaOutOfRange(f"(j+1) beta - j = {p} outside (0, 1) for j={j}")
        return self.e_0 ** j * xi(p, -1) / self.c_beta

    def d_beta_j(self, j: int) -> float:
        """``Re d'_j / pi``; j = 0 gives d_beta."""
        return float((self.d_prime(j) / math.pi).real)

    def as_dict(self) -> dict:
        out = {"beta": self.beta, "d_beta": self.d_beta,
               "c_beta": [self.c_beta.real, self.c_beta.imag], "c_H": self.c_H,
               "e_0": [self.e_0.real, self.e_0.imag], "c": self.c, "gamma": self.gamma}
        js = [j for j in range(4) if 0 < (j + 1) * self.beta - j < 1]
        out["d_beta_j"] = {str(j): self.d_beta_j(j) for j in js}
        return out


def constants(beta: float, tail: Optional[TailModel] = None) -> ConstantSet:
    """All limit constants; without a tail model, the exact Pareto tail (c=1, H=0)."""
    if not 0.0 < beta < 1.0:
        raise BetaOutOfRange(f"beta={beta} outside (0, 1)")
    if tail is None:
        c, cH = 1.0, 1.0 + float(mpmath.zeta(beta))
    elif beta > 0.5:
        c, cH = tail.c_fit, c_H_from_tail(tail)
    else:
        # H(n) = O(n^{-2 beta}) is not summable: c_H is undefined
        c, cH = tail.c_fit, float("nan")
    cb = c_beta(beta)
    return ConstantSet(beta, d_beta(beta), cb, cH, 1j * cH / cb, c, gamma_rate(beta))


# ---------------------------------------------------------------------------
# R(theta)


@lru_cache(maxsize=32)
def _zeta_coefficients(beta: float, terms: int = 90) -> np.ndarray:
    """``zeta(beta - k) / k!`` for k < terms."""
    with mpmath.workdps(30):
        return np.array([float(mpmath.zeta(beta - k) / mpmath.factorial(k))
                         for k in range(terms)])


def polylog_unit(beta: float, theta: float) -> complex:
    """``Li_beta(e^{i theta})`` for 0 < theta <= pi."""
    if beta == 1.0:
        return complex(-np.log(-np.expm1(1j * theta)))
    a = _zeta_coefficients(float(beta))
    z = 1j * theta
    acc = 0j
    for ak in a[::-1]:
        acc = acc * z + ak
    sing = Gamma(1.0 - beta) * theta ** (beta - 1.0) * np.exp(-1j * math.pi * (beta - 1.0) / 2.0)
    return complex(sing + acc)


def tail_sum(beta: float, N: int, theta: float) -> complex:
    """``sum_{n > N} n^{-beta} e^{i n theta}`` for 0 < theta <= pi."""
    n = np.arange(1, N + 1, dtype=float)
    head = np.sum(n ** (-beta) * np.exp(1j * theta * n))
    return polylog_unit(beta, theta) - head


def tail_phase(beta: float, N: int, theta: float) -> complex:
    """``S(theta) / S(0)`` for masses ``(n-1)^{-beta} - n^{-beta}``, n > N."""
    if theta == 0.0:
        return 1.0 + 0j
    s = tail_sum(beta, N, abs(theta))
    val = N ** beta * (np.expm1(1j * abs(theta)) * s) + np.exp(1j * (N + 1) * abs(theta))
    return complex(val if theta > 0 else np.conj(val))


def _selector(seq: OperatorSeq):
    key = "_sel"
    sel = getattr(seq, key, None)
    if sel is None or sel.shape[1] != len(seq.col):
        sel = sp.csr_matrix((np.ones(len(seq.col)), (seq.col, np.arange(len(seq.col)))),
                            shape=(seq.m, len(seq.col)))
        setattr(seq, key, sel)
    return sel


def R_of_theta(seq: OperatorSeq, theta: float, tail: bool = True,
               n_cut: Optional[int] = None) -> np.ndarray:
    """Dense complex ``R(theta)``; ``n_cut`` truncates to return times <= n_cut."""
    K = len(seq.col) if n_cut is None else int(seq.ptr[n_cut])
    ph = np.exp(1j * theta * seq.jn[:K])
    sel = _selector(seq)[:, :K]
    A = np.asarray((sel @ (seq.Bt[:K] * ph[:, None]))).T.astype(complex)
    if tail and n_cut is None and len(seq.tail_cols):
        phase = tail_phase(seq.tail_beta, seq.N, theta)
        for c, b in zip(seq.tail_cols, seq.tail_B):
            A[:, c] += phase * b
    return A


# ---------------------------------------------------------------------------
# leading eigenvalue


@dataclass(frozen=True)
class SpectralSample:
    theta_grid: np.ndarray
    lam: np.ndarray
    gap: np.ndarray
    eigvec: np.ndarray = field(repr=False)


def _deflated_radius(A, lam, v, lu, steps: int = 120, tail: int = 40) -> float:
    """Spectral radius of ``A - lam v w^T`` (w the left eigenvector) by power iteration.

    The geometric mean growth over the last ``tail`` steps is robust to
    complex pairs among the subdominant eigenvalues.
    """
    m = A.shape[0]
    w = sla.lu_solve(lu, np.ones(m, dtype=complex), trans=2)
    w = w / np.dot(w, v)
    x = np.random.default_rng(12345).standard_normal(m).astype(complex)
    logs = []
    for _ in range(steps):
        x = A @ x - lam * v * np.dot(w, x)
        nrm = np.linalg.norm(x)
        if nrm == 0.0:
            return 0.0
        logs.append(math.log(nrm))
        x /= nrm
    return float(math.exp(np.mean(logs[-tail:])))


def leading_eigen(A: np.ndarray, mu: Optional[np.ndarray] = None, tol: float = 1e-13,
                  maxiter: int = 200, gap_max: float = 0.99):
    """Dominant eigenvalue, eigenvector (mu-weighted sum 1) and gap ratio.

    A few power steps give a shift; shift-and-invert iteration with the
    Rayleigh quotient then converges quickly.  The gap ratio
    ``|lambda_2| / |lambda_1|`` comes from ARPACK (or a dense solve for
    small matrices).
    """
    A = np.asarray(A)
    m = A.shape[0]
    mu = np.full(m, 1.0 / m) if mu is None else np.asarray(mu)
    if m <= 256:
        ev, V = np.linalg.eig(A)
        order = np.argsort(-np.abs(ev))
        lam = ev[order[0]]
        v = V[:, order[0]]
        gap = float(np.abs(ev[order[1]]) / np.abs(lam)) if m > 1 else 0.0
    else:
        v = np.ones(m, dtype=complex)
        for _ in range(20):
            v = A @ v
            v /= np.linalg.norm(v)
        lam = np.vdot(v, A @ v)
        lu = None
        for it in range(maxiter):
            shift = lam * (1.0 + 1e-9) if it % 4 == 0 else lam
            if it % 4 == 0:
                lu = sla.lu_factor(A - shift * np.eye(m))
            w = sla.lu_solve(lu, v)
            w /= np.linalg.norm(w)
            new = np.vdot(w, A @ w)
            done = abs(new - lam) <= tol * abs(new) and np.linalg.norm(A @ w - new * w) <= 1e-10
            v, lam = w, new
            if done:
                break
        gap = _deflated_radius(A, lam, v, lu) / abs(lam)
    if gap > gap_max:
        raise NoDominantEigenvalue(f"gap ratio {gap:.4f} exceeds {gap_max}")
    v = v / np.dot(mu, v)
    return complex(lam), v, gap


def spectral_sample(seq: OperatorSeq, thetas, tail: bool = True) -> SpectralSample:
    """Leading eigen-data of ``R(theta)`` on a grid; untrusted thetas get NaN."""
    thetas = np.asarray(thetas, dtype=float)
    lam = np.full(len(thetas), np.nan + 0j)
    gap = np.full(len(thetas), np.nan)
    vecs = np.full((len(thetas), seq.m), np.nan + 0j)
    for k, th in enumerate(thetas):
        try:
            lam[k], vecs[k], gap[k] = leading_eigen(R_of_theta(seq, th, tail), seq.mu)
        except NoDominantEigenvalue:
            continue
    return SpectralSample(thetas, lam, gap, vecs)


# ---------------------------------------------------------------------------
# resolvent quadrature


def _quad_nodes(n_freq: int, theta_min: float, nodes: int = 16):
    """Gauss-Legendre nodes on geometric panels near 0 and uniform panels beyond."""
    x, w = np.polynomial.legendre.leggauss(nodes)
    # uniform panels wide enough for >= 8 nodes per oscillation period
    period = 2.0 * math.pi / max(n_freq, 1)
    h = min(period * nodes / 8.0, math.pi / 4)
    start = min(h, math.pi)
    edges_u = np.linspace(start, math.pi, max(int(math.ceil((math.pi - start) / h)), 1) + 1)
    k = int(math.ceil(math.log2(start / theta_min)))
    edges_g = start * 2.0 ** (-np.arange(k, -1, -1, dtype=float))
    edges = np.concatenate([edges_g, edges_u[1:]])
    a, b = edges[:-1], edges[1:]
    th = (0.5 * (b + a))[:, None] + (0.5 * (b - a))[:, None] * x[None, :]
    wt = (0.5 * (b - a))[:, None] * w[None, :]
    return th.ravel(), wt.ravel(), edges[0]


def fourier_oracle_Tn(seq: OperatorSeq, n: int, theta_min: float = 1e-12,
                      beta: Optional[float] = None, ns=None) -> np.ndarray:
    """``T_n = (1/pi) Re int_0^pi (I - R(theta))^{-1} e^{-i n theta} d theta``.

    For beta = 1 the cosine form ``(2/pi) int_0^pi cos(n theta) Re T d theta``
    is used instead.  ``ns`` may list several n to share the resolvent
    evaluations; the result then has a leading axis over ``ns``.
    """
    beta = seq.tail_beta if beta is None else beta
    if seq.m > 64:
        raise ValueError("oracle uses dense solves; m must be <= 64")
    if beta <= 0.5:
        raise BetaOutOfRange("the oracle needs beta > 1/2")
    n_list = [n] if ns is None else list(ns)
    n_freq = seq.N + max(n_list)
    th, wt, t0 = _quad_nodes(n_freq, theta_min)
    m = seq.m
    eye = np.eye(m)
    out = np.zeros((len(n_list), m, m))
    for t, w in zip(th, wt):
        M = eye - R_of_theta(seq, t)
        try:
            Tt = np.linalg.solve(M, eye)
        except np.linalg.LinAlgError as exc:
            raise SingularResolvent(f"I - R(theta) singular at theta={t:.3e}") from exc
        if t > 1e-3 and not np.all(np.isfinite(Tt)):
            raise SingularResolvent(f"I - R(theta) singular at theta={t:.3e}")
        for q, nn in enumerate(n_list):
            if beta == 1.0:
                out[q] += w * 2.0 * math.cos(nn * t) * Tt.real
            else:
                out[q] += w * (Tt * np.exp(-1j * nn * t)).real
    # [0, t0]: the resolvent behaves like theta^{-beta} there
    if beta < 1.0:
        T0 = np.linalg.solve(eye - R_of_theta(seq, t0), eye)
        for q in range(len(n_list)):
            out[q] += (T0 * t0 / (1.0 - beta)).real
    out /= math.pi
    return out[0] if ns is None else out


@dataclass
class EigenFit:
    thetas: np.ndarray
    lam: np.ndarray
    gap: np.ndarray
    slope: float
    refined: Optional[np.ndarray] = None   # (lambda - 1 + c c_beta theta^beta) / theta
    target_refined: Optional[complex] = None
    refined_limit: Optional[complex] = None


def eigen_exponent_fit(seq: OperatorSeq, thetas=None,
                       consts: Optional[ConstantSet] = None) -> EigenFit:
    """Regression of ``log|1 - lambda(theta)|`` on ``log theta``.

    With constants, also the next term: ``(lambda - 1 + c c_beta theta^beta) / theta``
    tends to ``i c c_H``.  Its error is ``O(theta^{2 beta - 1})``, which is
    slow for beta near 1/2, so ``refined_limit`` fits ``a + b theta^{2 beta - 1}``
    over the grid and reports ``a``.
    """
    thetas = np.geomspace(1e-4, 1e-2, 9) if thetas is None else np.asarray(thetas, float)
    smp = spectral_sample(seq, thetas)
    ok = np.isfinite(smp.lam)
    slope = float(np.polyfit(np.log(thetas[ok]), np.log(np.abs(1.0 - smp.lam[ok])), 1)[0])
    fit = EigenFit(thetas, smp.lam, smp.gap, slope)
    if consts is not None:
        c = consts.c
        fit.refined = (smp.lam - 1.0 + c * consts.c_beta * thetas ** consts.beta) / thetas
        fit.target_refined = 1j * c * consts.c_H
        if np.count_nonzero(ok) >= 3 and consts.beta > 0.5:
            A = np.vstack([np.ones(ok.sum()), thetas[ok] ** (2 * consts.beta - 1)]).T
            coef = np.linalg.lstsq(A.astype(complex), fit.refined[ok], rcond=None)[0]
            fit.refined_limit = complex(coef[0])
    return fit
