import numpy as np
import pytest

from oprenewal.errors import CylinderBoundary
from oprenewal.induced import TailModel, build_return_structure, induced_apply, tail_model
from oprenewal.maps import make_lsv


@pytest.fixture(scope="module")
def rs1():
    return build_return_structure(make_lsv(1.0), n_max=512)


def test_first_cylinder(rs1):
    assert rs1.cylinder(1) == pytest.approx((0.75, 1.0))
    lo, hi = rs1.cylinder(2)
    assert hi == pytest.approx(0.75)
    # 2y - 1 = (sqrt 5 - 1)/4
    assert lo == pytest.approx(0.5 * (1.0 + (np.sqrt(5.0) - 1.0) / 4.0))


def test_induced_apply(rs1):
    y, n = induced_apply(rs1, 0.7)
    assert n == 2
    assert y == pytest.approx(0.72, abs=1e-14)


def test_induced_apply_rejects_cylinder_end(rs1):
    with pytest.raises(CylinderBoundary):
        induced_apply(rs1, 0.75)


def test_return_time_matches_iteration(rs1):
    ys = np.linspace(0.5005, 0.999, 37)
    phi = rs1.return_time(ys)
    for y, n in zip(ys, phi):
        assert induced_apply(rs1, y)[1] == n


def test_cylinder_widths_partition(rs1):
    w = rs1.cylinder_widths()
    tail = rs1.leb_tail()
    assert tail[0] == pytest.approx(0.5)
    assert w.sum() + tail[-1] == pytest.approx(0.5, abs=1e-14)
    assert -np.diff(tail) == pytest.approx(w, abs=1e-15)


def test_lebesgue_tail_exponent():
    rs = build_return_structure(make_lsv(4.0 / 3.0), n_max=4096)
    tm = tail_model(rs, "lebesgue")
    assert tm.beta == pytest.approx(0.75)
    ell = tm.tail[1024:4097] * np.arange(1024, 4097) ** 0.75
    assert np.ptp(ell) / ell.mean() < 0.01


def test_pareto_tail_model():
    tm = TailModel.pareto(0.6, 100)
    assert tm.c_fit == 1.0
    assert tm.remainder(np.arange(1, 50)) == pytest.approx(0.0, abs=1e-15)
    assert tm.tail_at(400) == pytest.approx(400 ** -0.6)
    assert tm.masses().sum() == pytest.approx(1.0 - 100 ** -0.6)


def test_one_step_return(rs1):
    y, n = induced_apply(rs1, 0.8)
    assert n == 1 and y == pytest.approx(0.6)


def test_lebesgue_tail_is_half_boundary(rs1):
    # Leb(phi > n) = x_{n-1} / 2 for the doubling right branch
    n = np.arange(1, 100)
    assert rs1.leb_tail()[n] == pytest.approx(0.5 * rs1.x_seq[n - 1], rel=1e-13)


def test_lebesgue_tail_constant_alpha_two():
    # Leb(phi > n) n^{1/2} -> (1/4) (1/2)^{1/2}
    rs = build_return_structure(make_lsv(2.0), n_max=10 ** 5)
    tm = tail_model(rs, "lebesgue")
    assert tm.tail[-1] * 10 ** 2.5 == pytest.approx(0.25 * 0.5 ** 0.5, rel=2e-3)


def test_invariant_tail_normalised():
    from oprenewal.density import induced_density
    rs = build_return_structure(make_lsv(1.5), n_max=1024)
    tm = tail_model(rs, "invariant", induced_density(rs, 128, 1024))
    assert tm.tail[0] == 1.0
    assert np.all(np.diff(tm.tail) <= 0)
