import json
import math

import numpy as np
import pytest

from rcbounds.bounds import rosenthal_bound
from rcbounds.errors import DomainError, EstimationError, PreconditionError, UnsupportedScoreError
from rcbounds.montecarlo import (DIVERGENCE_DETECTED, HOLDS, INCONCLUSIVE, MLE, SAMPLE_MEAN, UPPER, VIOLATED,
                                 WITHIN_NOISE, WNRI_CONSISTENT, Scenario, _drop_failures, classify,
                                 clt_norm_estimate, deviation_norm, fit_growth, hermite_dictionary, mle_estimate,
                                 mle_rows, rosenthal_empirical_check, verify_bound, wnri_probe)
from rcbounds.norms import NormSpec
from rcbounds.transforms import psi_m

GAUSS_43 = (3 / 4) * math.log(2 ** (2 / 3) * math.gamma(7 / 6) / math.sqrt(math.pi))
GAUSS_43 = math.exp(GAUSS_43)  # (E|Z|^(4/3))^(3/4)


def test_gaussian_fractional_moment_oracle():
    assert GAUSS_43 == pytest.approx(0.8703, abs=1e-4)


def test_mle_examples():
    assert mle_estimate("gaussian-shift", [0, 1, 2]) == 1.0
    assert mle_estimate("exponential-scale", [1, 3]) == 2.0
    assert mle_estimate("laplace-shift", [0, 0, 5]) == pytest.approx(0.0, abs=1e-12)
    assert mle_estimate("laplace-shift", [-1.0, 0.2, 7.0]) == pytest.approx(0.2, abs=1e-12)


def test_mle_weibull_tail_solves_score_equation():
    from rcbounds.families import get_family

    fam = get_family("weibull-tail(4)")
    X = fam.sample(0.7, 50, np.random.default_rng(3))
    th = mle_estimate(fam, X)
    grid = np.linspace(th - 0.05, th + 0.05, 201)
    loglik = [np.sum(fam.log_density(X, t)) for t in grid]
    assert abs(grid[int(np.argmax(loglik))] - th) <= 1e-3


def test_mle_rows_vectorised_matches_single():
    X = np.random.default_rng(0).laplace(size=(50, 9))
    rows = mle_rows("laplace-shift", X)
    assert np.allclose(rows, np.median(X, axis=1), atol=1e-12)


def test_mle_failures():
    with pytest.raises(EstimationError):
        mle_estimate("laplace-shift", [np.nan, 1.0])
    with pytest.raises(UnsupportedScoreError):
        mle_estimate("symmetric-stable(1.5)", [0.0, 1.0])


def test_failure_rate_abort():
    vals = np.zeros(10_000)
    vals[:5] = np.nan
    kept, failures = _drop_failures(vals, 10_000)
    assert failures == 5 and kept.size == 9_995
    vals[:20] = np.nan
    with pytest.raises(EstimationError):
        _drop_failures(vals, 10_000)


@pytest.mark.parametrize("n", [1, 7, 50])
def test_deviation_norm_gaussian_l2(n):
    dev = deviation_norm("gaussian-shift", 0.0, SAMPLE_MEAN, n, NormSpec.lp(2), 50_000, seed=n)
    assert abs(dev.value - 1.0) <= 3 * dev.se


def test_deviation_norm_gaussian_l43():
    dev = deviation_norm("gaussian-shift", 0.0, SAMPLE_MEAN, 100, NormSpec.lp(4 / 3), 100_000, seed=5)
    assert abs(dev.value - GAUSS_43) <= 3 * dev.se


def test_deviation_norm_exponential_l2():
    dev = deviation_norm("exponential-scale", 1.0, SAMPLE_MEAN, 400, NormSpec.lp(2), 100_000, seed=6)
    assert abs(dev.value - 1.0) <= 3 * dev.se


def test_fit_growth_recovers_power_law():
    n = np.array([2 ** k for k in range(10)])
    fit = fit_growth(n, n ** 0.2, 0.001 * n ** 0.2)
    assert fit.slope == pytest.approx(0.2, abs=1e-10) and fit.diverges
    flat = fit_growth(n, np.ones(n.size), np.full(n.size, 0.01))
    assert flat.slope == pytest.approx(0.0, abs=1e-12) and not flat.diverges


def test_fit_growth_tiny_slope_is_not_divergence():
    n = np.array([2 ** k for k in range(10)])
    assert not fit_growth(n, n ** 0.01, 1e-6 * n ** 0.01).diverges


def test_clt_normal_l4_is_flat():
    est = clt_norm_estimate("normal", NormSpec.lp(4), [1, 4, 16, 64], 50_000, seed=1)
    target = 3 ** 0.25
    assert all(abs(v - target) <= 3 * s for v, s in zip(est.values, est.ses))
    assert not est.divergence
    assert est.running_sup == sorted(est.running_sup)
    assert est.sup == max(est.values)


def test_clt_rademacher_l4():
    grid = [1, 2, 4, 8, 16, 32, 64, 128, 256]
    est = clt_norm_estimate("rademacher", NormSpec.lp(4), grid, 50_000, seed=2)
    for n, v, s in zip(grid, est.values, est.ses):
        assert abs(v - (3 - 2 / n) ** 0.25) <= 3 * s + 1e-12
    assert est.sup == pytest.approx(3 ** 0.25, abs=0.02)
    assert not est.divergence


def test_clt_rejects_uncentered_and_bad_grids():
    with pytest.raises(PreconditionError):
        clt_norm_estimate("uniform", NormSpec.lp(2), [1, 2], 1000)
    with pytest.raises(DomainError):
        clt_norm_estimate("normal", NormSpec.lp(2), [4, 2], 1000)


def test_probe_normal_l2_consistent():
    assert wnri_probe("normal", NormSpec.lp(2), [1, 4, 16, 64, 256], 50_000, seed=3).verdict == WNRI_CONSISTENT


def test_probe_weibull_tail_gls_divergence_trend():
    res = wnri_probe("weibull-tail(4)", NormSpec.gls(psi_m(4)), [1, 4, 16, 64, 256], 20_000, seed=1)
    assert res.verdict == DIVERGENCE_DETECTED
    assert res.estimate.values[1] > res.estimate.values[0]


def test_probe_stable_175_in_l15():
    res = wnri_probe("symmetric-stable(1.75)", NormSpec.lp(1.5), [2 ** k for k in range(13)], 100_000, seed=1)
    assert res.verdict == DIVERGENCE_DETECTED
    assert abs(res.estimate.growth.slope - (1 / 1.75 - 0.5)) <= 0.05


def test_rosenthal_rademacher_and_normal():
    grid = [1, 4, 16, 64, 256, 1024]
    rad = rosenthal_empirical_check("rademacher", 4, grid, 50_000, seed=4)
    exact_max = (3 - 2 / 1024) ** 0.25 / rosenthal_bound(4)
    assert exact_max == pytest.approx(0.698, abs=1e-3)
    assert rad.max_ratio[4.0] == pytest.approx(exact_max, abs=3 * max(rad.ses[4.0]))
    nrm = rosenthal_empirical_check("normal", [2, 4], grid, 50_000, seed=5)
    assert nrm.holds
    for r, s in zip(nrm.ratios[4.0], nrm.ses[4.0]):
        assert abs(r - 1 / rosenthal_bound(4)) <= 3 * s
    for r, s in zip(nrm.ratios[2.0], nrm.ses[2.0]):
        assert abs(r - 1.0) <= 3 * s


def test_rosenthal_needs_finite_moment():
    with pytest.raises(PreconditionError):
        rosenthal_empirical_check("symmetric-stable(1.5)", 2, [1, 2], 1000)


def test_classify():
    assert classify(1.0, 0.9, 0.01) == HOLDS
    assert classify(0.98, 1.0, 0.01) == WITHIN_NOISE
    assert classify(0.9, 1.0, 0.01) == VIOLATED
    assert classify(0.9, 1.0, None) == VIOLATED


def test_hermite_dictionary_centered():
    s = np.random.default_rng(0).standard_normal(1000)
    d = hermite_dictionary(s)
    assert set(d) == {"score_sum", "He2", "He3"}
    assert abs(d["He2"].mean()) < 1e-12 and abs(d["He3"].mean()) < 1e-12


def small_scenario(**kw):
    base = dict(family="gaussian-shift", theta0=0.0, estimator=SAMPLE_MEAN, norm={"tag": "Lp", "q": 2.0},
                n_grid=(5, 20), reps=4000, seed=11)
    base.update(kw)
    return Scenario(**base)


def test_scenario_validation():
    with pytest.raises(DomainError):
        small_scenario(n_grid=(20, 5))
    with pytest.raises(DomainError):
        small_scenario(reps=999)
    with pytest.raises(DomainError):
        small_scenario(estimator="median")
    with pytest.raises(DomainError):
        small_scenario(norm={"tag": "Lp"})
    with pytest.raises(DomainError):
        small_scenario(mode=UPPER, norm={"tag": "Lp", "p": 4.0})
    with pytest.raises(DomainError):
        Scenario.from_dict({**small_scenario().to_dict(), "colour": "red"})


def test_scenario_roundtrip_and_key():
    sc = small_scenario()
    again = Scenario.from_dict(json.loads(json.dumps(sc.to_dict())))
    assert again == sc and again.key == sc.key
    assert small_scenario(seed=12).key != sc.key


def test_verify_equality_case():
    rep = verify_bound(small_scenario(reps=20_000))
    assert rep.verdict in (HOLDS, WITHIN_NOISE)
    assert rep.rhs_bound == pytest.approx(1.0)
    for l, s in zip(rep.lhs, rep.se):
        assert abs(l - 1.0) <= 3 * s


def test_verify_is_worker_invariant():
    sc = small_scenario()
    assert verify_bound(sc, workers=1).to_json() == verify_bound(sc, workers=3).to_json()


def test_clt_is_worker_invariant():
    a = clt_norm_estimate("centered-exponential", NormSpec.lp(3), [1, 8], 20_000, seed=9, workers=1)
    b = clt_norm_estimate("centered-exponential", NormSpec.lp(3), [1, 8], 20_000, seed=9, workers=4)
    assert a.to_dict() == b.to_dict()


@pytest.mark.parametrize("norm", [{"tag": "GLS", "psi": "psi_m(2)"}, {"tag": "Bphi", "phi": "phi_2"}])
@pytest.mark.parametrize("family", ["gaussian-shift", "laplace-shift"])
def test_verify_pairings_never_violate(norm, family):
    rep = verify_bound(small_scenario(family=family, norm=norm, reps=20_000))
    assert rep.verdict in (HOLDS, INCONCLUSIVE)
    assert all(v in (HOLDS, INCONCLUSIVE) for v in rep.verdicts)
    assert rep.diagnostics["pairing"][0]["best"] is not None


def test_verify_upper_mode_flat():
    sc = Scenario("gaussian-shift", 0.0, MLE, {"tag": "Lp", "p": 4.0}, (16, 64, 256), 10_000, 3, mode=UPPER)
    rep = verify_bound(sc)
    assert rep.verdict == HOLDS
    assert abs(rep.diagnostics["growth"]["slope"]) <= 0.02
    for l, s in zip(rep.lhs, rep.se):
        assert abs(l - 3 ** 0.25) <= 3 * s


def test_verify_upper_mode_laplace_mle():
    sc = Scenario("laplace-shift", 0.0, MLE, {"tag": "Lp", "p": 2.0}, (11, 41, 161), 4000, 3, mode=UPPER)
    rep = verify_bound(sc)
    assert rep.verdict == HOLDS


def test_report_serialization():
    rep = verify_bound(small_scenario())
    d = json.loads(rep.to_json())
    assert d["scenario"] == small_scenario().to_dict()
    rows = rep.csv_rows()
    assert [r["n"] for r in rows] == [5, 20]
    assert rep.to_csv().splitlines()[0].startswith("n,")
