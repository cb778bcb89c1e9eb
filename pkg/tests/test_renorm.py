import math
from fractions import Fraction as F

import numpy as np
import pytest

from pam_lab.renorm import (
    gap_report,
    j_integral,
    j_integral_sampled,
    level_mollifiers,
    r_n_t,
    renorm_constant,
    squared_constant,
    trend_slope,
)
from pam_lab.spectral import HurstParams

BELOW = HurstParams(F(7, 10), (F(9, 20),))
BOUNDARY = HurstParams(F(3, 4), (F(1, 2),))


def test_j_quadrature_matches_importance_sampling():
    est, se = j_integral_sampled(BELOW, samples=2**20, seed=1)
    J = j_integral(BELOW)
    assert abs(est - J) < max(4 * se, 1e-3 * J)


def test_j_rejected_on_boundary():
    with pytest.raises(ValueError):
        j_integral(BOUNDARY)
    with pytest.raises(ValueError):
        r_n_t(1, 0.5, BOUNDARY)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_constant_minus_half_mean_equals_remainder(n):
    t = 0.5
    rep = gap_report(t, n, BELOW)["rows"][-1]
    assert rep.gap == pytest.approx(abs(rep.rN), rel=1e-6)


def test_geometric_scaling_strictly_below():
    h0, H, d = 0.7, 0.45, 1
    kappa = d + 1 - (2 * h0 + H)
    ratios = [math.log2(renorm_constant(n + 1, BELOW) / renorm_constant(n, BELOW)) for n in range(1, 5)]
    assert np.allclose(ratios, 2 * kappa, rtol=0, atol=1e-12)


def test_boundary_constant_grows_linearly_in_n():
    c = [renorm_constant(n, BOUNDARY) for n in range(1, 9)]
    assert all(b > a for a, b in zip(c, c[1:]))
    per_level = np.array(c) / np.arange(1, 9)
    assert per_level.max() / per_level.min() < 3.0


def test_remainder_vanishes_at_zero_time():
    assert r_n_t(3, 0.0, BELOW) == 0.0


def test_strictly_below_gap_bounded():
    rep = gap_report(0.5, 6, BELOW)
    assert rep["bounded"]
    assert all(np.isfinite(r.gap) for r in rep["rows"])


def test_remainder_bounded_with_shrinking_increments():
    r = [r_n_t(n, 0.5, BELOW) for n in range(1, 7)]
    inc = np.abs(np.diff(r))
    assert all(b < a for a, b in zip(inc, inc[1:]))
    # geometric tail bounds the limit
    assert max(r) + inc[-1] / (1 - inc[-1] / inc[-2]) < 1.0


def test_level_mollifiers_and_constant():
    assert level_mollifiers(2) == (2.0 ** -8, 2.0 ** -4)
    assert squared_constant(BELOW) > 0


def test_trend_slope_linear():
    assert trend_slope([1.0, 3.0, 5.0]) == pytest.approx(2.0)
