import math
from fractions import Fraction as F

import numpy as np
import pytest

from pam_lab import (
    HurstParams,
    MCConfig,
    blowup_scan,
    hypercontractivity_check,
    skorohod_moment,
    stratonovich_moment,
    subadditivity_check,
)
from pam_lab.moments import _elementary_symmetric, _ensemble_sums, _exp_stats
from pam_lab.renorm import level_mollifiers

SUB = HurstParams(F(4, 5), (F(3, 4),))
CRIT = HurstParams(F(4, 5), (F(1, 2), F(1, 2)))
STRAT = HurstParams(F(7, 10), (F(1, 2),))
WHITE_SPACE = HurstParams(1, (F(3, 4),))
SMALL = MCConfig(paths=400, spectral=128, steps=64)


def test_trivial_cases_are_exactly_one():
    assert skorohod_moment(1.0, 1, 0.25, SUB, SMALL).value == 1.0
    est = skorohod_moment(0.0, 3, 0.25, SUB, SMALL)
    assert est.value == 1.0 and est.stderr == 0.0


def test_argument_guards():
    with pytest.raises(ValueError):
        skorohod_moment(1.0, 0, 0.25, SUB, SMALL)
    with pytest.raises(ValueError):
        skorohod_moment(-1.0, 2, 0.25, SUB, SMALL)
    with pytest.raises(ValueError):
        skorohod_moment(1.0, 2, 0.0, CRIT, SMALL)
    with pytest.raises(ValueError):
        MCConfig(method="simpson")
    with pytest.raises(ValueError):
        MCConfig(paths=1)


def test_subcritical_moments_finite_stable_increasing():
    vals = []
    for t in (0.25, 0.5, 1.0):
        est = skorohod_moment(t, 2, 0.25, SUB, SMALL)
        assert math.isfinite(est.value) and est.stable
        assert est.value > 1.0
        vals.append(est.value)
    assert vals[0] < vals[1] < vals[2]


def test_jensen_lower_bound():
    # E exp(S) >= exp(E S) for the pair sum of each ensemble
    t, p = 1.0, 3
    S, _, _ = _ensemble_sums(t, p, [(0.25, 0.25)], SUB, SMALL)
    est = skorohod_moment(t, p, 0.25, SUB, SMALL)
    assert est.log_value >= float(S.mean())


def test_nondecreasing_in_p():
    vals = [skorohod_moment(0.5, p, 0.25, SUB, SMALL).value for p in (1, 2, 3, 4)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_spectral_and_kernel_routes_agree():
    four = skorohod_moment(1.0, 2, 0.25, SUB, SMALL)
    kern = skorohod_moment(1.0, 2, 0.25, SUB, MCConfig(paths=400, steps=64, method="kernel"))
    assert kern.half_spectral_value is None
    assert abs(four.value - kern.value) < 3.0 * four.stderr


def test_half_spectral_value_close():
    est = skorohod_moment(1.0, 2, 0.25, SUB, SMALL)
    assert abs(est.half_spectral_value - est.value) < 3.0 * est.stderr


def test_exp_stats_matches_direct_mean():
    rng = np.random.default_rng(3)
    S = rng.normal(size=1000)
    value, se, logv, share = _exp_stats(S, 0.7)
    assert value == pytest.approx(np.exp(S + 0.7).mean(), rel=1e-12)
    assert logv == pytest.approx(math.log(value), rel=1e-12)
    assert 0.01 <= share < 0.5


def test_exp_stats_survives_large_exponents():
    value, se, logv, share = _exp_stats(np.array([800.0, 0.0, 1.0]))
    assert math.isinf(value)
    assert logv == pytest.approx(800.0 - math.log(3.0))


def test_stratonovich_first_moment_jensen():
    # p = 1: exp(shift) E exp(Y/2) >= exp(shift) since Y is centred
    est = stratonovich_moment(0.5, 1, 2, STRAT, SMALL)
    shift = float(est.notes[0].split("=")[1])
    assert est.log_value >= shift - 3.0 * est.stderr / est.value


def test_bridge_centering_has_zero_mean():
    e = level_mollifiers(2)
    _, _, Y = _ensemble_sums(0.5, 2, [e], STRAT, SMALL, centre_beta=True)
    y = Y[:, 0]
    assert abs(y.mean()) < 4.0 * y.std(ddof=1) / math.sqrt(y.size)


@pytest.mark.slow
def test_stratonovich_levels_converge():
    ests = [stratonovich_moment(0.5, 2, n, STRAT) for n in (2, 3, 4)]
    a, b, c = (e.value for e in ests)
    assert abs(c - b) < 3.0 * math.hypot(ests[1].stderr, ests[2].stderr)
    assert abs(c - b) < abs(b - a)


def test_stratonovich_guards():
    with pytest.raises(ValueError):
        stratonovich_moment(0.5, 2, 2, WHITE_SPACE, SMALL)


def test_hypercontractivity_p2_is_equality():
    out = hypercontractivity_check(0.5, 2, 0.25, CRIT, SMALL)
    assert out["t_rescaled"] == 0.5
    assert out["lhs"] == out["rhs"]
    assert out["holds_within_CI"]


def test_hypercontractivity_at_zero_time():
    out = hypercontractivity_check(0.0, 4, 0.25, CRIT, SMALL)
    assert out["lhs"] == 1.0 and out["rhs"] == 1.0


def test_subadditivity_trivial_theta_and_symmetry():
    out = subadditivity_check(0.5, 0.5, 0.0, 4, WHITE_SPACE, 0.1, SMALL)
    assert out["lhs_series"] == 1.0 and out["rhs_product"] == 1.0
    a = subadditivity_check(0.3, 0.6, 0.2, 4, WHITE_SPACE, 0.1, SMALL)
    assert a["lhs_series"] > 1.0 and a["rhs_product"] > 1.0
    with pytest.raises(ValueError):
        subadditivity_check(0.5, 0.5, 0.2, 4, CRIT, 0.1, SMALL)
    with pytest.raises(ValueError):
        subadditivity_check(0.5, 0.5, 0.2, 9, WHITE_SPACE, 0.1, SMALL)


def test_elementary_symmetric_polynomials():
    x = np.array([1.0, 2.0, 3.0, 4.0])
    e = _elementary_symmetric(x, 4)
    assert e.tolist() == [1.0, 10.0, 35.0, 50.0, 24.0]


def test_blowup_scan_trivial_power_and_guards():
    out = blowup_scan(1, [1.0], [1.0, 0.5, 0.25], CRIT, SMALL)
    assert out["rows"][0]["slope"] == 0.0
    assert out["rows"][0]["verdict"] == "stable"
    with pytest.raises(ValueError):
        blowup_scan(2, [1.0], [1.0, 0.5], CRIT, SMALL)
    with pytest.raises(ValueError):
        blowup_scan(2, [1.0], [1.0, 0.5, 0.25], SUB, SMALL)


def test_results_independent_of_worker_count():
    a = skorohod_moment(0.5, 3, 0.25, SUB, MCConfig(paths=120, spectral=64, steps=32, block=16, workers=1))
    b = skorohod_moment(0.5, 3, 0.25, SUB, MCConfig(paths=120, spectral=64, steps=32, block=16, workers=4))
    assert a == b
