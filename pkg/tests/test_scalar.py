import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as hst
from hypothesis.extra.numpy import arrays

from oprenewal import scalar as sc
from oprenewal.spectral import d_beta


def test_period_one_and_two():
    assert sc.renewal_sequence([0, 1.0], 10) == pytest.approx(np.ones(11))
    u = sc.renewal_sequence([0, 0, 1.0], 9)
    assert u == pytest.approx([1, 0] * 5)


def test_geometric_first_return():
    # f_n = p (1-p)^{n-1} gives u_n = p for n >= 1
    p, N = 0.3, 200
    n = np.arange(N + 1)
    f = np.where(n >= 1, p * (1 - p) ** (n - 1.0), 0.0)
    for method in ("direct", "fft"):
        assert sc.renewal_sequence(f, method=method)[1:] == pytest.approx(p, rel=1e-10)


def test_finite_mean_limit():
    f = np.zeros(5)
    f[1:] = [0.1, 0.2, 0.3, 0.4]
    u = sc.renewal_sequence(f, 2000)
    assert u[-1] == pytest.approx(1.0 / np.dot(np.arange(5), f), rel=1e-10)


def test_invalid_f():
    with pytest.raises(ValueError):
        sc.renewal_sequence([0, 0.7, 0.5])
    with pytest.raises(ValueError):
        sc.renewal_sequence([0, -0.1, 0.5])
    with pytest.raises(ValueError):
        sc.renewal_sequence([0, 0.5], method="bogus")


def test_direct_vs_fft_pareto():
    f = sc.pareto_f(0.75, 100_000)
    assert np.abs(sc.renewal_sequence(f) - sc.renewal_sequence(f, method="fft")).max() < 1e-12


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, hst.integers(2, 900), elements=hst.floats(0, 1)),
       hst.integers(4, 64))
def test_direct_vs_fft_random(w, base):
    f = np.concatenate([[0.0], w])
    if f.sum() > 0:
        f = f / f.sum() * 0.999
    a = sc.renewal_sequence(f, method="direct")
    b = sc.renewal_sequence(f, method="fft", base=base)
    assert np.abs(a - b).max() < 1e-12


def test_check_residual():
    r = sc.renewal(sc.pareto_f(0.6, 500))
    assert r.check(499) < 1e-15
    assert r.normalized(0.6)[500] == pytest.approx(r.u[500] * 500 ** 0.4)


def test_first_order_moderate_n():
    u = sc.renewal_sequence(sc.pareto_f(0.75, 100_000), method="fft")
    assert u[-1] * 100_000 ** 0.25 == pytest.approx(d_beta(0.75), rel=0.03)


def test_cesaro_small_beta():
    rep = sc.zero_density_demo(sc.pareto_f(0.4, 100_000), 0.4, [1000, 10_000, 100_000])
    assert rep.cesaro_dev < 0.02
    assert rep.decreasing(0.05)


def test_zero_density_needs_small_beta():
    with pytest.raises(ValueError):
        sc.zero_density_demo(sc.pareto_f(0.6, 100), 0.6, [50, 100])


def test_karamata_constant_ell():
    k = sc.karamata_sum(np.ones(1000), 0.0, ns=[10, 100, 1000])
    assert k.ratio == pytest.approx(1.0)


def _log_sum_mpmath(n):
    # sum_{j<=n} log(j) j^{-1/2} = d/ds zeta(s, n+1) - zeta'(s) at s = 1/2
    s = mpmath.mpf(0.5)
    return float(mpmath.zeta(s, n + 1, 1) - mpmath.zeta(s, 1, 1))


def test_karamata_log_against_mpmath():
    N = 10 ** 6
    ns = [10 ** 4, 10 ** 5, N]
    k = sc.karamata_sum(np.log(np.arange(1, N + 1)), -0.5, ns=ns)
    ref = [_log_sum_mpmath(n) / (2 * math.log(n) * math.sqrt(n)) for n in ns]
    assert k.ratio == pytest.approx(ref, rel=1e-9)
    # the slowly varying correction is 1 - 2/log n, far from 1 at n = 10^6
    assert k.final == pytest.approx(0.8554, abs=1e-4)
    assert k.verdict


def test_karamata_p_minus_one():
    k = sc.karamata_sum(np.log(np.arange(2, 10 ** 5 + 2)), -1.0, ns=[100, 1000, 10 ** 5])
    assert k.verdict and k.final < 0.2


def test_export_csv(tmp_path):
    u = sc.renewal_sequence(sc.pareto_f(0.75, 100))
    path = tmp_path / "u.csv"
    sc.export_csv(path, u, 0.75, header=["beta=0.75"], stride=10)
    lines = path.read_text().splitlines()
    assert lines[0] == "# beta=0.75"
    assert lines[1] == "n,u_n,normalized"
    assert len(lines) == 2 + 11
    n, val, _ = lines[-1].split(",")
    assert int(n) == 100 and float(val) == u[100]
