"""Discretised operator renewal sequences on a grid of Y.

``R_n`` is the transfer operator (with respect to mu) of the induced map
restricted to the cylinder ``{phi = n}``, acting on piecewise-constant
functions on m equal cells of Y:

    (R_n v)_i = sum_j mu(cell_j ∩ {phi = n} ∩ F^{-1} cell_i) v_j / mu(cell_i).

This is the diagonal similarity ``D^{-1} M D`` (with ``D = diag(mu)``) of the
column-normalised matrix ``M[i, j] = mu(...)/mu(cell_j)``; both give the same
``T_n`` up to the same similarity, and the form used here maps the constant
function to a function (``R(1) 1 = 1``).

Because ``F`` maps each cylinder onto Y, ``R_n`` has dense columns supported
on the few cells meeting ``{phi = n}``.  The columns are stored stacked as
``Bt[k] = R_{jn[k]}[:, col[k]]``; the renewal recursion then costs one gather
and one matrix product per time step.
"""
from __future__ import annotations

import hashlib
import io
import json
import struct
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .density import DensityEstimate, tower_cell_masses
from .errors import HorizonTooLarge, SupportViolation
from .induced import ReturnStructure, TailModel, grid_preimages, induced_overlaps

CACHE_MAGIC = b"OPRNWL\x00\x01"
CACHE_VERSION = 1


@dataclass
class OperatorSeq:
    """Stacked columns of ``R_1..R_N`` plus the mass beyond the horizon."""

    m: int
    N: int
    y_lo: float
    mu: np.ndarray
    Bt: np.ndarray
    col: np.ndarray
    jn: np.ndarray
    tail_cols: np.ndarray
    tail_B: np.ndarray
    tail_c: float = 0.0
    tail_beta: float = 1.0
    alpha: Optional[float] = None
    rs: Optional[ReturnStructure] = field(default=None, repr=False)
    density: Optional[DensityEstimate] = field(default=None, repr=False)
    T_obs: Optional[np.ndarray] = field(default=None, repr=False)
    observables: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def width(self) -> float:
        return (1.0 - self.y_lo) / self.m

    @property
    def ptr(self) -> np.ndarray:
        """``ptr[n]`` = number of stacked columns with return time <= n."""
        return np.searchsorted(self.jn, np.arange(self.N + 1), side="right")

    def R(self, n: int) -> np.ndarray:
        """Dense ``R_n``."""
        if not 1 <= n <= self.N:
            raise ValueError(f"n must be in [1, {self.N}]")
        p = self.ptr
        out = np.zeros((self.m, self.m))
        for k in range(p[n - 1], p[n]):
            out[:, self.col[k]] += self.Bt[k]
        return out

    def R_dense_stack(self) -> np.ndarray:
        """All ``R_1..R_N`` as an ``(N + 1, m, m)`` array (index 0 is zero)."""
        out = np.zeros((self.N + 1, self.m, self.m))
        np.add.at(out, (self.jn, slice(None), self.col), self.Bt)
        return out

    def tail_matrix(self) -> np.ndarray:
        """Dense part of ``R(1)`` coming from return times beyond N."""
        out = np.zeros((self.m, self.m))
        for c, b in zip(self.tail_cols, self.tail_B):
            out[:, c] += b
        return out

    def apply_R(self, n: int, v) -> np.ndarray:
        """``R_n v`` for a vector or an (m, s) block."""
        v = np.asarray(v, dtype=float)
        p = self.ptr
        sl = slice(p[n - 1], p[n])
        return self.Bt[sl].T @ v[self.col[sl]]

    def integrate(self, v) -> np.ndarray:
        """``int_Y v dmu`` of per-cell values (the projection P up to the constant 1)."""
        return np.tensordot(self.mu, np.asarray(v), axes=(0, 0))

    def return_masses(self) -> np.ndarray:
        """``int_Y R_n 1 dmu`` for n = 1..N."""
        w = self.Bt @ self.mu
        return np.bincount(self.jn, weights=w, minlength=self.N + 1)[1:]

    def norm_proxy(self) -> np.ndarray:
        """Max mu-weighted column sum of each ``R_n`` (a discrete ``||R_n||`` surrogate)."""
        w = (self.Bt * self.mu[None, :]).sum(axis=1) / self.mu[self.col]
        out = np.zeros(self.N + 1)
        np.maximum.at(out, self.jn, w)
        return out[1:]

    @classmethod
    def from_scalar(cls, f) -> "OperatorSeq":
        """1x1 operator sequence with ``R_n = f_n`` (f[0] is ignored)."""
        f = np.asarray(f, dtype=float)
        N = len(f) - 1
        return cls(m=1, N=N, y_lo=0.0, mu=np.ones(1), Bt=f[1:, None].copy(),
                   col=np.zeros(N, dtype=np.int64), jn=np.arange(1, N + 1),
                   tail_cols=np.zeros(0, dtype=np.int64), tail_B=np.zeros((0, 1)))

    # -- binary cache ---------------------------------------------------

    def header(self) -> dict:
        chk = hashlib.sha256(np.ascontiguousarray(self.mu, dtype="<f8").tobytes()).hexdigest()
        return {"m": self.m, "N": self.N, "alpha": self.alpha,
                "grid": {"y_lo": self.y_lo, "cells": self.m, "spacing": "equal"},
                "density_checksum": chk, "K": int(len(self.jn)),
                "n_tail": int(len(self.tail_cols)),
                "tail_c": self.tail_c, "tail_beta": self.tail_beta}

    def save(self, path) -> None:
        """Versioned little-endian binary file: magic, version, JSON header, payload."""
        head = json.dumps(self.header(), sort_keys=True).encode()
        parts = [CACHE_MAGIC, struct.pack("<II", CACHE_VERSION, len(head)), head]
        for arr, dt in ((self.mu, "<f8"), (self.Bt, "<f8"), (self.col, "<i8"),
                        (self.jn, "<i8"), (self.tail_cols, "<i8"), (self.tail_B, "<f8")):
            parts.append(np.ascontiguousarray(arr, dtype=dt).tobytes())
        body = b"".join(parts)
        with open(path, "wb") as fh:
            fh.write(body)
            fh.write(hashlib.sha256(body).digest())

    @classmethod
    def load(cls, path) -> "OperatorSeq":
        """Inverse of :meth:`save`; raises ``ValueError`` on a damaged file."""
        with open(path, "rb") as fh:
            data = fh.read()
        if len(data) < 48 or data[:8] != CACHE_MAGIC:
            raise ValueError("not an operator cache file")
        version, hlen = struct.unpack("<II", data[8:16])
        if version != CACHE_VERSION:
            raise ValueError(f"unsupported cache version {version}")
        head_b = data[16:16 + hlen]
        head = json.loads(head_b)
        m, K, nt = head["m"], head["K"], head["n_tail"]
        if hashlib.sha256(data[:-32]).digest() != data[-32:]:
            raise ValueError("cache checksum mismatch")
        buf = io.BytesIO(data[16 + hlen:-32])

        def take(count, dt):
            raw = buf.read(count * 8)
            if len(raw) != count * 8:
                raise ValueError("truncated cache file")
            return np.frombuffer(raw, dtype=dt).astype(np.float64 if dt == "<f8" else np.int64)

        mu = take(m, "<f8")
        Bt = take(K * m, "<f8").reshape(K, m)
        col = take(K, "<i8")
        jn = take(K, "<i8")
        tail_cols = take(nt, "<i8")
        tail_B = take(nt * m, "<f8").reshape(nt, m)
        if buf.read():
            raise ValueError("trailing bytes in cache file")
        chk = hashlib.sha256(np.ascontiguousarray(mu, dtype="<f8").tobytes()).hexdigest()
        if chk != head["density_checksum"]:
            raise ValueError("density checksum mismatch")
        return cls(m=m, N=head["N"], y_lo=head["grid"]["y_lo"], mu=mu, Bt=Bt, col=col,
                   jn=jn, tail_cols=tail_cols, tail_B=tail_B, tail_c=head["tail_c"],
                   tail_beta=head["tail_beta"], alpha=head["alpha"])


def assemble_Rn(rs: ReturnStructure, density: DensityEstimate, m: Optional[int] = None,
                N: Optional[int] = None, tail: Optional[TailModel] = None) -> OperatorSeq:
    """Ulam matrices of the induced transfer operator split by return time."""
    m = density.m if m is None else m
    if m != density.m:
        raise ValueError("grid size must match the density estimate")
    N = rs.n_max if N is None else N
    if N > rs.n_max:
        raise HorizonTooLarge(f"horizon {N} exceeds the return structure", max_usable=rs.n_max)
    ov = induced_overlaps(rs, m, N)
    pi = density.cell_mass
    # row normalisation of the Lebesgue Ulam matrix (removes rounding of the tiling)
    rowsum = np.bincount(ov.j, weights=ov.leb, minlength=m) + \
        np.bincount(ov.tail_j, weights=ov.tail_leb, minlength=m)
    vals = pi[ov.j] * (ov.leb / rowsum[ov.j]) / pi[ov.i]
    key = ov.n.astype(np.int64) * m + ov.j
    uniq, inv = np.unique(key, return_inverse=True)
    Bt = np.zeros((len(uniq), m))
    np.add.at(Bt, (inv, ov.i), vals)
    jn = uniq // m
    col = uniq % m
    tvals = pi[ov.tail_j] * (ov.tail_leb / rowsum[ov.tail_j]) / pi[ov.tail_i]
    tcols, tinv = np.unique(ov.tail_j, return_inverse=True)
    tail_B = np.zeros((len(tcols), m))
    np.add.at(tail_B, (tinv, ov.tail_i), tvals)
    if tail is None:
        from .induced import tail_model
        tail = tail_model(rs, "invariant", density)
    return OperatorSeq(m=m, N=N, y_lo=rs.y_lo, mu=pi.copy(), Bt=Bt, col=col, jn=jn,
                       tail_cols=tcols.astype(np.int64), tail_B=tail_B,
                       tail_c=tail.c_fit, tail_beta=tail.beta, alpha=rs.fmap.alpha,
                       rs=rs, density=density)


# ---------------------------------------------------------------------------
# the renewal recursion


def renewal_recursion(seq: OperatorSeq, V=None, forcing=None, n_max: Optional[int] = None):
    """History ``t_0..t_n`` of ``t_n = w_n + sum_{j=1}^n R_j t_{n-j}``.

    With ``forcing=None`` the forcing is ``w_0 = V`` and zero afterwards, so
    ``t_n = T_n V``.  ``V`` or each forcing term is an ``(m, s)`` block.
    Returns an array of shape ``(n_max + 1, m, s)``.
    """
    n_max = seq.N if n_max is None else n_max
    if n_max > seq.N:
        raise HorizonTooLarge(f"n={n_max} exceeds horizon {seq.N}", max_usable=seq.N)
    m = seq.m
    if forcing is None:
        V = np.eye(m) if V is None else np.asarray(V, dtype=float)
        if V.ndim == 1:
            V = V[:, None]
        W = V[None]
    else:
        W = np.asarray(forcing, dtype=float)
        if W.ndim == 2:
            W = W[:, :, None]
    s = W.shape[2]
    H = np.zeros((n_max + 1, m, s))
    H[0] = W[0]
    Hf = H.reshape((n_max + 1) * m, s)
    ptr = seq.ptr
    jn, col, Bt = seq.jn, seq.col, seq.Bt
    for n in range(1, n_max + 1):
        K = ptr[n]
        idx = (n - jn[:K]) * m + col[:K]
        acc = Bt[:K].T @ Hf[idx]
        if n < len(W):
            acc += W[n]
        H[n] = acc
    return H


def _fft_conv_block(Rf_src, tblk, L):
    """Causal product of a matrix sequence with a vector sequence by FFT."""
    tf = np.fft.rfft(tblk, n=L, axis=0)
    return np.fft.irfft(np.einsum("fij,fjs->fis", Rf_src, tf), n=L, axis=0)


def renewal_recursion_fft(seq: OperatorSeq, V=None, n_max: Optional[int] = None,
                          base: int = 32, max_m: int = 64):
    """Same as :func:`renewal_recursion` (no forcing) via online FFT convolution.

    Divide and conquer over time: the left half of each block is finished
    first, its contribution to the right half is added by one FFT product,
    then the right half is solved.  Uses dense ``R_n``; only for m <= max_m.
    """
    n_max = seq.N if n_max is None else n_max
    m = seq.m
    if m > max_m:
        raise ValueError(f"FFT path needs dense R_n; m={m} exceeds {max_m}")
    V = np.eye(m) if V is None else np.asarray(V, dtype=float)
    if V.ndim == 1:
        V = V[:, None]
    s = V.shape[1]
    R = seq.R_dense_stack()[: n_max + 1]
    H = np.zeros((n_max + 1, m, s))
    H[0] = V
    acc = np.zeros_like(H)
    spec_cache = {}

    def spectrum(length, L):
        key = (length, L)
        if key not in spec_cache:
            spec_cache[key] = np.fft.rfft(R[:length], n=L, axis=0)
        return spec_cache[key]

    def solve(lo, hi):
        # H[lo:hi] final once acc holds all contributions from indices < lo
        if hi - lo <= base:
            for n in range(max(lo, 1), hi):
                tot = acc[n].copy()
                for j in range(1, n - lo + 1):
                    tot += R[j] @ H[n - j]
                H[n] = tot
            return
        mid = (lo + hi) // 2
        solve(lo, mid)
        # contributions of H[lo:mid] to n in [mid, hi): lags 1 .. hi - lo - 1
        span = hi - lo
        L = 1 << int(np.ceil(np.log2(2 * span)))
        conv = _fft_conv_block(spectrum(span, L), H[lo:mid], L)
        acc[mid:hi] += conv[mid - lo:hi - lo]
        solve(mid, hi)

    # the direct base case covers in-block lags, so acc must only carry lags
    # reaching across block boundaries; solve() guarantees that ordering
    solve(0, n_max + 1)
    return H


def convolve_T(seq: OperatorSeq, observables=None, method: str = "direct",
               n_max: Optional[int] = None) -> OperatorSeq:
    """Fill ``seq.T_obs[n] = T_n V`` (V = identity for matrix mode)."""
    V = np.eye(seq.m) if observables is None else np.asarray(observables, dtype=float)
    if V.ndim == 1:
        V = V[:, None]
    if method == "direct":
        H = renewal_recursion(seq, V, n_max=n_max)
    elif method == "fft":
        H = renewal_recursion_fft(seq, V, n_max=n_max)
    else:
        raise ValueError(f"unknown method {method!r}")
    seq.T_obs = H
    seq.observables = V
    return seq


# ---------------------------------------------------------------------------
# lift to X


@dataclass(frozen=True)
class ObservableOnX:
    """An observable on (0, 1] vanishing below ``support_lo``."""

    values: Callable
    support_lo: float

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= self.support_lo, self.values(x), 0.0)


_GL_X, _GL_W = np.polynomial.legendre.leggauss(4)


def _cell_average(v, a, b):
    """Gauss-Legendre average of v over each interval ``[a, b]``.

    Intervals cut by the support edge of an :class:`ObservableOnX` are
    integrated over their supported part only.
    """
    lo = a
    frac = 1.0
    s = getattr(v, "support_lo", None)
    if s is not None:
        lo = np.clip(np.maximum(a, s), a, b)
        frac = np.where(b > a, (b - lo) / np.where(b > a, b - a, 1.0), 0.0)
    mid = 0.5 * (lo + b)
    half = 0.5 * (b - lo)
    return frac * sum(wq * v(mid + half * xq) for xq, wq in zip(_GL_X, _GL_W)) * 0.5


def level_of(rs: ReturnStructure, x: float) -> int:
    """Tower level k with ``x in [x_k, x_{k-1})`` (0 on Y)."""
    if x >= rs.y_lo:
        return 0
    return int(np.searchsorted(-rs.x_seq, -x, side="left"))


def pushed_pieces(seq: OperatorSeq, v: ObservableOnX, K: Optional[int] = None) -> np.ndarray:
    """``L^k v_k`` on the grid of Y for k = 0..K (v_k = v restricted to level k).

    ``(L^k v_k)_i`` is the mu-average of v over ``Linv^k(cell_i)`` times
    ``mu(Linv^k cell_i) / mu(cell_i)``.
    """
    rs, dens = seq.rs, seq.density
    if rs is None or dens is None:
        raise ValueError("lifting needs the return structure and density")
    if not v.support_lo > 0.0:
        raise SupportViolation("observable support reaches the indifferent point 0")
    k_need = level_of(rs, v.support_lo)
    if k_need > seq.N - 1:
        raise SupportViolation(
            f"support_lo={v.support_lo} lies at level {k_need}, beyond horizon {seq.N}")
    K = k_need if K is None else min(K, k_need)
    M = tower_cell_masses(rs, dens, seq.N)
    z = grid_preimages(rs, seq.m, seq.N)
    out = np.empty((K + 1, seq.m))
    for k in range(K + 1):
        vbar = _cell_average(v, z[k, :-1], z[k, 1:])
        out[k] = vbar * M[k] / seq.mu
    return out


def integral_on_X(seq: OperatorSeq, v: ObservableOnX) -> float:
    """``int_X v dmu`` as the sum over tower levels of the pieces."""
    W = pushed_pieces(seq, v)
    return float(sum(seq.integrate(w) for w in W))


def lift_series(seq: OperatorSeq, v: ObservableOnX, n_max: Optional[int] = None,
                K: Optional[int] = None) -> np.ndarray:
    """``1_Y L^n v`` on the grid of Y for n = 0..n_max.

    Uses ``1_Y L^n v_k = T_{n-k} L^k v_k``; the sum over k is folded into the
    renewal recursion as a forcing term.
    """
    W = pushed_pieces(seq, v, K)
    H = renewal_recursion(seq, forcing=W[:, :, None], n_max=n_max)
    return H[:, :, 0]


def lift_Ln(seq: OperatorSeq, v: ObservableOnX, n: int, K: Optional[int] = None) -> np.ndarray:
    """``1_Y L^n v`` on the grid of Y."""
    return lift_series(seq, v, n, K)[n]


def build_operator(fmap, m: int = 1024, N: int = 4096, tail_horizon: int = 100_000,
                   y_lo: float = 0.5):
    """Return structure, density, fitted tail and assembled ``R_n`` for a map.

    The tail model is fitted on a deeper return structure (``tail_horizon``)
    than the operator horizon N, since the fitted constant and the remainder
    sum converge slowly.  Returns ``(seq, tail)``.
    """
    from .density import induced_density
    from .induced import build_return_structure, tail_model
    rs = build_return_structure(fmap, y_lo=y_lo, n_max=N)
    dens = induced_density(rs, m, N)
    tm = tail_model(rs, "invariant", dens, n_max=max(N, tail_horizon))
    return assemble_Rn(rs, dens, m, N, tail=tm), tm
