import json

import numpy as np
import pytest

from oprenewal.errors import BetaOutOfRange, UnsupportedObservable
from oprenewal.induced import TailModel
from oprenewal.limits import NormalizerM, T_history, VerifierReport, loglog_slope, trend_of, \
    verify_first_order, verify_Ln_on_X, verify_mean_zero, verify_second_order, verify_small_beta
from oprenewal.renewal_ops import ObservableOnX
from oprenewal.spectral import constants, d_beta

from conftest import lsv_operator


def test_trend_and_slope():
    assert trend_of([0.3, 0.2, 0.1]) == "shrinking"
    assert trend_of([0.1, 0.2, 0.3]) == "growing"
    assert trend_of([0.1, 0.3, 0.2]) == "flat"
    n = np.array([10, 100, 1000])
    assert loglog_slope(n, 3.0 * n ** -0.25) == pytest.approx(-0.25)


def test_normalizer_beta_one_is_harmonic_sum():
    norm = NormalizerM(1.0, lambda n: np.ones_like(n, dtype=float))
    H = np.cumsum(1.0 / np.arange(1, 11))
    assert norm.m_of_n([1, 5, 10]) == pytest.approx(H[[0, 4, 9]])


def test_normalizer_from_pareto_tail():
    tm = TailModel.pareto(0.75, 1000)
    assert NormalizerM.from_tail(tm).m_of_n([10, 500]) == pytest.approx([1.0, 1.0])
    assert NormalizerM.from_tail(tm, "constant").m_of_n(7) == pytest.approx([1.0])
    with pytest.raises(ValueError):
        NormalizerM.from_tail(TailModel.pareto(1.0, 10), "constant")


def test_report_json_roundtrip(tmp_path):
    r = VerifierReport("first-order", 0.75, 4 / 3, 0.225, 0.1)
    r.append(512, np.float64(0.23), 0.02)
    r.passed = True
    d = json.loads(r.to_json(tmp_path / "r.json"))
    assert d["pass"] is True and d["n_checkpoints"] == [512]
    assert r.summary().startswith("PASS first-order")


def test_first_order_and_mean_zero(op75):
    seq, tail = op75
    H = T_history(seq)
    rep = verify_first_order(seq, constants(0.75, tail), history=H)
    assert rep.passed and rep.trend == "shrinking"
    left = (np.arange(seq.m) < seq.m // 2).astype(float)
    rep_l = verify_first_order(seq, constants(0.75, tail), v=left)
    assert rep_l.target == pytest.approx(d_beta(0.75) * seq.integrate(left))
    assert rep_l.passed
    mz = left - seq.integrate(left)
    rep_z = verify_mean_zero(seq, mz)
    assert rep_z.passed and rep_z.extra["slope"] < -0.6


def test_second_order_envelope(op75):
    seq, tail = op75
    rep = verify_second_order(seq, constants(0.75, tail), history=T_history(seq))
    assert rep.statement_id == "second-order-envelope"
    assert rep.passed


def test_first_order_rejects_small_beta():
    seq, _ = lsv_operator(2.5, 64, 256)
    with pytest.raises(BetaOutOfRange):
        verify_first_order(seq)


def test_small_beta_operator():
    seq, _ = lsv_operator(2.5)
    rep = verify_small_beta(seq)
    assert rep.passed
    assert rep.values[-1] == pytest.approx(d_beta(0.4), rel=0.05)


def test_on_x_lift(op75):
    seq, _ = op75
    v = ObservableOnX(lambda x: np.ones_like(x), 0.1)
    rep = verify_Ln_on_X(seq, v, True, (256, 512), cells=2048)
    assert rep.passed
    assert rep.extra["integral_grid"] == pytest.approx(rep.extra["integral_decomposition"],
                                                       rel=1e-4)


def test_on_x_rejects_support_at_zero(op75):
    seq, _ = op75
    with pytest.raises(UnsupportedObservable):
        verify_Ln_on_X(seq, ObservableOnX(np.ones_like, 0.0), False)


def test_dual_ergodicity_half():
    # beta = 1/2 with ell normalisation: limit 2 d_{1/2} = 2/pi
    from oprenewal.limits import verify_dual_ergodicity
    seq, tail = lsv_operator(2.0)
    rep = verify_dual_ergodicity(seq, None, norm=NormalizerM.from_tail(tail), tol=0.10)
    assert rep.target == pytest.approx(2 / np.pi)
    assert rep.passed


def test_verifier_is_linear(op75):
    from oprenewal.limits import verify_dual_ergodicity
    seq, _ = op75
    a = (np.arange(seq.m) < 300).astype(float)
    b = np.linspace(0, 1, seq.m)
    ra, rb = verify_dual_ergodicity(seq, v=a), verify_dual_ergodicity(seq, v=b)
    rab = verify_dual_ergodicity(seq, v=a + b)
    assert rab.values == pytest.approx(np.add(ra.values, rb.values), rel=1e-12)


def test_beta_one_first_order_trend():
    # (log-type normaliser) n^0 T_n 1 -> d_1 = 1, slowly
    seq, _ = lsv_operator(1.0)
    rep = verify_first_order(seq, None, (1024, 2048, 4096))
    assert rep.trend == "shrinking"
    assert abs(rep.values[-1] - 1.0) < 0.25
