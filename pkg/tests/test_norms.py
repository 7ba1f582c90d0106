import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rcbounds import distributions as dist
from rcbounds.errors import DomainError, PreconditionError
from rcbounds.norms import (NOT_STRONG_NORMAL, STRONG_NORMAL, MomentCurve, NormSpec,
                            associate_pairing_lb, bphi_norm, default_lambda_grid, default_p_grid,
                            gls_norm, gls_tail_bound, lorentz_quasinorm, lorentz_snri_classify,
                            lp_norm, lp_norm_jackknife, lp_norm_se, moment_curve)
from rcbounds.transforms import phi_2, phi_power, psi_m


def test_lp_normal():
    assert abs(lp_norm(dist.normal(), 2).value - 1.0) < 1e-10
    assert abs(lp_norm(dist.normal(), 4).value - 3 ** 0.25) < 1e-10


def test_lp_weibull_tail_two():
    assert abs(lp_norm(dist.weibull_tail(2), 2).value - 1.0) < 1e-12


def test_lp_stable_diverges_above_alpha():
    assert lp_norm(dist.symmetric_stable(1.5), 2).infinite
    assert lp_norm(dist.symmetric_stable(1.5), 1).finite


def test_lp_rejects_p_below_one():
    with pytest.raises(DomainError):
        lp_norm(dist.normal(), 0.5)


def test_lp_standard_errors_agree():
    x = np.random.default_rng(1).standard_normal(20_000)
    est, jk = lp_norm_jackknife(x, 4.0)
    assert est == pytest.approx(lp_norm(x, 4.0).value, rel=1e-12)
    assert jk == pytest.approx(lp_norm_se(x, 4.0), rel=0.05)


def test_gls_normal_psi2():
    grid = default_p_grid()
    assert grid[0] == 2.0 and grid.size == 64
    v = gls_norm(moment_curve(dist.normal(), grid), psi_m(2))
    assert abs(v.value - 1 / math.sqrt(2)) < 1e-8
    assert v.arg == 2.0


def test_gls_curve_equal_to_psi_gives_one():
    grid = np.linspace(2, 10, 9)
    psi = psi_m(3)
    curve = MomentCurve(grid, np.array([psi(p) for p in grid]), "analytic")
    assert gls_norm(curve, psi).value == pytest.approx(1.0, abs=1e-15)


def test_gls_stable_sample_flags_infinite():
    x = dist.symmetric_stable(1.75).sample(np.random.default_rng(5), 1_000_000)
    v = gls_norm(moment_curve(x, default_p_grid()), psi_m(2))
    assert v.infinite


def test_gls_grid_outside_support():
    from rcbounds.transforms import psi_constant

    with pytest.raises(DomainError):
        gls_norm(moment_curve(dist.normal(), [2.0, 8.0]), psi_constant(1.0, B=4.0))


def test_bphi_normal_and_rademacher():
    assert bphi_norm(dist.normal(), phi_2()).value == pytest.approx(1.0, abs=1e-6)
    assert bphi_norm(dist.rademacher(), phi_2()).value == pytest.approx(1.0, abs=1e-6)


def test_bphi_zero_variable():
    assert bphi_norm(dist.point_mass(0.0), phi_power(4)).value == 0.0
    assert bphi_norm(np.zeros(100), phi_2()).value == 0.0


def test_bphi_rejects_uncentered():
    with pytest.raises(PreconditionError):
        bphi_norm(dist.point_mass(1.0), phi_2())
    x = np.random.default_rng(0).standard_normal(10_000) + 1.0
    with pytest.raises(PreconditionError):
        bphi_norm(x, phi_2())


def test_bphi_bounded_centered_is_finite():
    x = np.random.default_rng(2).uniform(-1, 1, 50_000)
    assert bphi_norm(x, phi_2()).finite


def test_bphi_empirical_reports_truncation():
    x = np.random.default_rng(3).standard_normal(10_000)
    v = bphi_norm(x, phi_2())
    assert v.diagnostics.get("truncated_lambdas")
    assert v.value == pytest.approx(1.0, abs=0.1)


def test_lorentz_examples():
    assert lorentz_quasinorm(dist.uniform(0, 1), 1, math.inf).value == pytest.approx(0.25, abs=1e-8)
    assert lorentz_quasinorm(dist.point_mass(3.0), 2, math.inf).value == pytest.approx(3.0)


@pytest.mark.parametrize("p", [1.0, 2.0, 3.0, 4.0])
def test_lorentz_pp_equals_lp_analytic(p):
    for x in (dist.normal(), dist.uniform(-1, 2), dist.centered_exponential()):
        assert lorentz_quasinorm(x, p, p).value == pytest.approx(lp_norm(x, p).value, abs=1e-8)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), p=st.sampled_from([1.0, 2.0, 3.0]), n=st.integers(1, 200))
def test_lorentz_pp_equals_lp_empirical_exactly(seed, p, n):
    x = np.random.default_rng(seed).standard_normal(n)
    assert float(lorentz_quasinorm(x, p, p)) == float(lp_norm(x, p))


@pytest.mark.parametrize("p,q,want", [(3, 4, STRONG_NORMAL), (5, 2, STRONG_NORMAL), (2, 2, STRONG_NORMAL),
                                      (2, 3, NOT_STRONG_NORMAL), (4, 1.5, NOT_STRONG_NORMAL)])
def test_snri_classification(p, q, want):
    assert lorentz_snri_classify(p, q) == want


def test_pairing_l2_self_dual():
    z = np.random.default_rng(4).standard_normal(200_000)
    res = associate_pairing_lb(z, {"self": z}, NormSpec.lp(2))
    assert res.value == pytest.approx(lp_norm(z, 2).value, rel=1e-12)
    assert res.best == "self"


def test_pairing_constant_dictionary_gives_zero():
    z = np.random.default_rng(4).standard_normal(10_000)
    z = z - z.mean()
    assert associate_pairing_lb(z, {"one": np.ones_like(z)}, NormSpec.lp(2)).value == pytest.approx(0, abs=1e-12)


def test_pairing_errors():
    z = np.ones(10)
    with pytest.raises(DomainError):
        associate_pairing_lb(z, {}, NormSpec.lp(2))
    with pytest.raises(PreconditionError):
        associate_pairing_lb(z, {"short": np.ones(5)}, NormSpec.lp(2))


@pytest.mark.parametrize("p", [3.0, 4.0, 6.0])
def test_pairing_never_exceeds_dual_norm(p):
    rng = np.random.default_rng(int(p))
    tau = rng.standard_normal(200_000)
    dictionary = {"lin": tau, "cube": tau ** 3, "sign": np.sign(tau) * np.abs(tau) ** (1 / (p - 1))}
    q = p / (p - 1)
    res = associate_pairing_lb(tau, dictionary, NormSpec.lp(p))
    assert res.value <= lp_norm(dist.normal(), q).value * 1.01


def test_tail_envelope_weibull():
    x = dist.weibull_tail(4).sample(np.random.default_rng(6), 1_000_000)
    env = gls_tail_bound(gls_norm(moment_curve(dist.weibull_tail(4), default_p_grid()), psi_m(4)), 4)
    for t in (1.5, 2.0, env.threshold):
        assert np.mean(np.abs(x) > t) <= env(t)


def test_tail_envelope_normal():
    x = np.random.default_rng(7).standard_normal(1_000_000)
    env = gls_tail_bound(gls_norm(moment_curve(dist.normal(), default_p_grid()), psi_m(2)), 2)
    for t in np.linspace(1, 5, 17):
        assert np.mean(np.abs(x) > t) <= env(t)
        assert 2 * (1 - 0.5 * math.erfc(-t / math.sqrt(2))) <= env(t) + 1e-15


def test_tail_envelope_zero_and_errors():
    env = gls_tail_bound(0.0, 2)
    assert env(1.0) == 0.0 and env(0.0) == 1.0
    with pytest.raises(DomainError):
        gls_tail_bound(math.inf, 2)


@pytest.mark.parametrize("c", [-2.0, 0.5, 3.0])
def test_homogeneity_analytic(c):
    x = dist.normal()
    y = x.scaled(c)
    a = abs(c)
    assert lp_norm(y, 3).value == pytest.approx(a * lp_norm(x, 3).value, abs=1e-8)
    assert lorentz_quasinorm(y, 2, 4).value == pytest.approx(a * lorentz_quasinorm(x, 2, 4).value, abs=1e-8)
    grid = default_p_grid()
    assert gls_norm(moment_curve(y, grid), psi_m(2)).value == pytest.approx(
        a * gls_norm(moment_curve(x, grid), psi_m(2)).value, abs=1e-8)
    assert bphi_norm(y, phi_2()).value == pytest.approx(a * bphi_norm(x, phi_2()).value, abs=1e-8)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_lyapunov_monotone_empirical(seed):
    x = np.random.default_rng(seed).standard_t(5, 500)
    assert moment_curve(x, np.linspace(1, 8, 15)).is_monotone()


def test_lyapunov_monotone_analytic():
    for x in (dist.normal(), dist.centered_exponential(), dist.weibull_tail(3)):
        assert moment_curve(x, default_p_grid()).is_monotone()


def test_lambda_grid_symmetric():
    g = default_lambda_grid()
    assert g.size == 64 and np.allclose(g, -g[::-1])


def test_normspec_validation():
    with pytest.raises(DomainError):
        NormSpec("Bogus")
    with pytest.raises(DomainError):
        NormSpec.lp(0.5)
    with pytest.raises(DomainError):
        NormSpec("GLS")


def test_gls_empirical_gaussian_sample_is_finite():
    x = np.random.default_rng(8).standard_normal(200_000)
    v = gls_norm(moment_curve(x, default_p_grid()), psi_m(2))
    assert v.finite and v.arg == 2.0
    assert v.value == pytest.approx(1 / math.sqrt(2), abs=0.01)


def test_gls_empirical_unresolved_sup_is_infinite():
    # exponential tails have an infinite psi_2 norm; the sample ratio keeps rising until extremes dominate
    x = dist.weibull_tail(1).sample(np.random.default_rng(9), 1_000_000)
    assert gls_norm(moment_curve(x, default_p_grid()), psi_m(2)).infinite
