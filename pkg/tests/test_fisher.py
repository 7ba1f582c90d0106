import math

import numpy as np
import pytest

from rcbounds.bounds import rosenthal_bound
from rcbounds.errors import DomainError, PreconditionError
from rcbounds.fisher import fisher_bphi, fisher_gls, fisher_in_norm, fisher_p, sample_fisher_agg
from rcbounds.norms import NormSpec
from rcbounds.transforms import natural_phi, natural_psi, phi_2, phi_power, psi_constant, psi_m


def test_fisher_p_examples():
    assert fisher_p("gaussian-shift", 0.0, 2).value == pytest.approx(1.0, abs=1e-10)
    for theta in (-3.0, 0.0, 7.5):
        assert fisher_p("gaussian-shift", theta, 4).value == pytest.approx(3 ** 0.25, abs=1e-9)
    assert fisher_p("exponential-scale", 2.0, 2).value == pytest.approx(0.5, abs=1e-10)


def test_fisher_p_below_two_is_allowed():
    assert fisher_p("gaussian-shift", 0.0, 1.5).value == pytest.approx(
        (2 ** 0.75 * math.gamma(1.25) / math.sqrt(math.pi)) ** (1 / 1.5), rel=1e-9)


def test_fisher_p_divergence_flag():
    rep = fisher_p("weibull-tail(2)", 0.0, 2)
    assert rep.diverged and math.isinf(rep.value)


@pytest.mark.parametrize("name,theta", [("gaussian-shift", 0.3), ("laplace-shift", -1.0),
                                        ("exponential-scale", 1.5), ("weibull-tail(9)", 0.0)])
@pytest.mark.parametrize("p", [2.0, 3.0, 4.0])
def test_quadrature_matches_monte_carlo(name, theta, p):
    quad = fisher_p(name, theta, p)
    mc = fisher_p(name, theta, p, method="montecarlo", reps=200_000, seed=17)
    assert mc.error_estimate >= 0
    assert abs(quad.value - mc.value) <= 3 * mc.error_estimate + 1e-12


@pytest.mark.parametrize("name,theta", [("gaussian-shift", 0.0), ("laplace-shift", 0.0),
                                        ("exponential-scale", 1.0), ("weibull-tail(6)", 0.0)])
def test_fisher_p_nondecreasing_in_p(name, theta):
    vals = [fisher_p(name, theta, p).value for p in np.linspace(1.0, 5.5, 10)]
    assert all(b >= a - 1e-10 for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize("p", [2.0, 3.0, 5.0])
def test_scale_family_theta_factorization(p):
    base = fisher_p("exponential-scale", 1.0, p).value
    for theta in (0.25, 0.5, 2.0, 10.0):
        assert theta * fisher_p("exponential-scale", theta, p).value == pytest.approx(base, rel=1e-9)


def test_fisher_gls_examples():
    assert fisher_gls("gaussian-shift", 0.0, psi_m(2)).value == pytest.approx(1 / math.sqrt(2), abs=1e-8)
    assert fisher_gls("laplace-shift", 0.0, psi_constant(1.0, B=16.0)).value == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("name", ["gaussian-shift", "laplace-shift"])
def test_fisher_gls_natural_is_one(name):
    assert fisher_gls(name, 1.0, natural_psi(name)).value == pytest.approx(1.0, abs=1e-8)


def test_fisher_gls_natural_weibull_on_its_range():
    psi = natural_psi("weibull-tail(5)")
    grid = np.linspace(2, 4.5, 11)
    assert fisher_gls("weibull-tail(5)", 0.0, psi, p_grid=grid).value == pytest.approx(1.0, abs=1e-8)


def test_fisher_bphi_examples():
    assert fisher_bphi("gaussian-shift", 0.0, phi_2()).value == pytest.approx(1.0, abs=1e-6)
    assert fisher_bphi("laplace-shift", 0.0, phi_2()).value == pytest.approx(1.0, abs=1e-6)
    assert fisher_bphi("gaussian-shift", 0.0, natural_phi("gaussian-shift")).value == pytest.approx(1.0, abs=1e-6)
    assert fisher_bphi("gaussian-shift", 0.0, phi_power(2)).value == pytest.approx(1 / math.sqrt(2), abs=1e-6)


def test_fisher_bphi_cramer_failure_reports_lambda():
    with pytest.raises(PreconditionError) as exc:
        fisher_bphi("exponential-scale", 1.0, phi_2())
    assert 1.0 <= abs(exc.value.failing_lambda) <= 1.5


def test_fisher_in_norm_dispatch():
    assert fisher_in_norm("gaussian-shift", 0.0, NormSpec.lp(4)).value == pytest.approx(3 ** 0.25)
    assert fisher_in_norm("gaussian-shift", 0.0, NormSpec.gls(psi_m(2))).value == pytest.approx(2 ** -0.5)
    assert fisher_in_norm("gaussian-shift", 0.0, NormSpec.bphi(phi_2())).value == pytest.approx(1.0, abs=1e-6)


def test_fisher_report_serializes():
    d = fisher_p("gaussian-shift", 0.0, 2).to_dict()
    assert d["value"] == pytest.approx(1.0) and d["method"]


def test_sample_aggregation():
    agg, naive = sample_fisher_agg([1.0] * 100, rosenthal_bound(4))
    assert agg == pytest.approx(18.856, abs=1e-3) and naive == 100
    assert sample_fisher_agg([2.5], 1.0) == (2.5, 2.5)
    assert sample_fisher_agg([3.0, 4.0], 1.0) == (5.0, 7.0)
    with pytest.raises(DomainError):
        sample_fisher_agg([1.0], 0.5)
