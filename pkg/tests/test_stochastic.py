import math

import numpy as np
import pytest
from scipy import integrate, stats

from oprenewal import scalar as sc
from oprenewal import stochastic as st
from oprenewal.errors import SeriesDivergence


def test_ml_moments_closed_form():
    assert st.ml_moment(0.5, 1) == pytest.approx(1.0)
    assert st.ml_moment(0.5, 2) == pytest.approx(math.pi / 2)
    assert st.ml_moment(0.75, 1) == pytest.approx(1.0)


def test_ml_cdf_half_is_half_normal():
    x = np.array([0.1, 0.5, 1.0, 2.0, 3.5])
    assert st.mittag_leffler_cdf(0.5, x) == pytest.approx(st.half_normal_cdf(x), abs=1e-12)
    assert st.mittag_leffler_cdf(0.5, 1.0) == pytest.approx(0.5751, abs=1e-4)


def test_ml_cdf_recovers_moments():
    beta = 0.75
    F = lambda x: float(st.mittag_leffler_cdf(beta, x))
    m1 = integrate.quad(lambda x: 1.0 - F(x), 0, 6, limit=200)[0]
    m2 = integrate.quad(lambda x: 2 * x * (1.0 - F(x)), 0, 6, limit=200)[0]
    assert m1 == pytest.approx(1.0, abs=1e-6)
    assert m2 == pytest.approx(st.ml_moment(beta, 2), abs=1e-5)


def test_ml_cdf_gives_up_on_huge_series():
    with pytest.raises(SeriesDivergence):
        st.mittag_leffler_cdf(0.9, 60.0, dps=30)


def test_arcsine_half():
    t = np.linspace(0.01, 0.99, 7)
    assert st.arcsine_cdf(0.5, t) == pytest.approx(2 / np.pi * np.arcsin(np.sqrt(t)))


def test_iid_sampler_return_law():
    f = sc.pareto_f(0.75, 64)
    s = st.RenewalSampler.iid(f, 0.75)
    n = s.sample_returns(np.random.default_rng(5), 200_000)
    # exact tail n^{-beta}: f_1 = 0 and P(phi >= a) = (a - 1)^{-beta}
    assert not np.any(n == 1)
    edges = np.array([2, 3, 5, 9, 17, 33, 65, np.inf])
    obs = np.histogram(n, bins=edges)[0]
    p = -np.diff(np.where(np.isinf(edges), 0.0, (edges - 1.0) ** -0.75))
    assert stats.chisquare(obs, p / p.sum() * obs.sum()).pvalue > 1e-3


def test_operator_sampler_return_law(small_operator):
    seq, _ = small_operator
    s = st.RenewalSampler.from_operator(seq)
    n = s.sample_returns(np.random.default_rng(6), 100_000)
    masses = seq.return_masses()
    k = np.arange(1, 9)
    obs = np.concatenate([[np.sum(n == j) for j in k], [np.sum((n > 8) | (n == 0))]])
    p = np.concatenate([masses[:8], [1.0 - masses[:8].sum()]])
    assert stats.chisquare(obs, p * obs.sum()).pvalue > 1e-3


def test_simulation_is_thread_independent(small_operator):
    s = st.RenewalSampler.from_operator(small_operator[0])
    a = st.simulate_renewals(s, 500, 10_000, seed=3, threads=1)
    b = st.simulate_renewals(s, 500, 10_000, seed=3, threads=3)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
    c = st.simulate_renewals(s, 500, 10_000, seed=4, threads=1)
    assert not np.array_equal(a[0], c[0])


def test_occupation_iid_half():
    s = st.RenewalSampler.iid(sc.pareto_f(0.5, 1000), 0.5)
    law = st.sample_occupation(s, 100_000, 20_000, seed=1)
    assert law.moments[0] == pytest.approx(1.0, abs=0.03)
    assert law.ks < 0.02


def test_last_visit_iid_half(tmp_path):
    s = st.RenewalSampler.iid(sc.pareto_f(0.5, 1000), 0.5)
    law = st.sample_arcsine(s, 100_000, 20_000, seed=2)
    assert law.ks < 0.02
    law.to_csv(tmp_path / "z.csv")
    assert (tmp_path / "z.csv").read_text().splitlines()[0].endswith("seed,n,value")


def test_occupation_iid_three_quarters():
    # the correction to E S_n decays like n^{beta - 1}, so convergence is slow
    s = st.RenewalSampler.iid(sc.pareto_f(0.75, 1000), 0.75)
    laws = [st.sample_occupation(s, n, 20_000, seed=9) for n in (10 ** 4, 10 ** 5, 10 ** 6)]
    ks = [law.ks for law in laws]
    assert ks[0] > ks[1] > ks[2]
    assert ks[2] < 0.03
    assert laws[2].moments[0] == pytest.approx(1.0, abs=0.03)


def test_ml_cdf_limits():
    assert st.mittag_leffler_cdf(0.7, 0.0) == 0.0
    assert st.mittag_leffler_cdf(0.7, 6.0) == pytest.approx(1.0, abs=1e-12)
    assert st.arcsine_cdf(0.5, 0.5) == pytest.approx(0.5)


def test_ml_half_against_gaussian_samples():
    # |N(0, pi/2)| has mean 1; compare the series CDF at 1 with simulation
    g = np.abs(np.random.default_rng(11).normal(0.0, math.sqrt(math.pi / 2), 400_000))
    assert st.mittag_leffler_cdf(0.5, 1.0) == pytest.approx(np.mean(g <= 1.0), abs=5e-3)


def test_degenerate_law_beta_one():
    from oprenewal.limits import seq_tail
    from conftest import lsv_operator
    seq, _ = lsv_operator(1.0, 256, 4096)
    s = st.RenewalSampler.from_operator(seq)
    tail = seq_tail(seq)
    var = []
    for n in (10 ** 3, 10 ** 5):
        m_n = float(np.sum(tail(np.arange(1, n + 1))))
        law = st.sample_occupation(s, n, 4000, seed=3, m_n=m_n)
        assert law.reference_id == "degenerate(1)"
        var.append(law.extra["variance"])
    assert var[1] < var[0]
