"""The acceptance battery, shared by the test suite and ``regress-suite``.

Each check returns a :class:`CriterionResult` with the measured quantities,
so failures are diagnosable from the JSON-lines output alone.
"""

from __future__ import annotations

import json
import math
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional

import numpy as np

from . import distributions as dist
from .fisher import fisher_p
from .montecarlo import (DIVERGENCE_DETECTED, HOLDS, UPPER, WITHIN_NOISE, Scenario, clt_norm_estimate,
                         rosenthal_empirical_check, verify_bound, wnri_probe)
from .norms import NormSpec, default_p_grid, lorentz_quasinorm, lp_norm
from .transforms import (natural_psi, natural_psi_direct, phi_2, phi_bar, phi_power,
                         scale_reduced_integral, young_fenchel)

SEED = 20240601


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    details: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] criterion {self.number:2d}: {self.name} ({self.seconds:.1f}s)"

    def to_dict(self) -> dict:
        return {"criterion": self.number, "name": self.name, "passed": self.passed,
                "seconds": self.seconds, "details": self.details}


def gauss_q2_scenario(seed: int = SEED) -> Scenario:
    return Scenario("gaussian-shift", 0.0, "sample-mean", {"tag": "Lp", "q": 2.0}, (10, 100, 1000),
                    100_000, seed)


def c1_rao_cramer_equality(workers=None) -> CriterionResult:
    t0 = time.perf_counter()
    rep = verify_bound(gauss_q2_scenario(), workers=workers)
    secs = time.perf_counter() - t0
    ratios = [l / rep.rhs_bound for l in rep.lhs]
    ok = all(0.99 <= r <= 1.01 for r in ratios) and rep.verdict in (HOLDS, WITHIN_NOISE) and secs < 60
    return CriterionResult(1, "Rao-Cramer equality, gaussian-shift q=2", ok,
                           {"ratios": ratios, "verdict": rep.verdict, "runtime": secs})


def c2_strict_inequality(workers=None) -> CriterionResult:
    sc = Scenario("gaussian-shift", 0.0, "sample-mean", {"tag": "Lp", "q": 4.0 / 3.0}, (100,), 100_000, SEED)
    rep = verify_bound(sc, workers=workers)
    lhs, rhs = rep.lhs[0], rep.rhs_bound
    ok = abs(lhs - 0.8703) <= 0.01 and abs(rhs - 0.4030) <= 1e-4 and rep.verdict == HOLDS
    return CriterionResult(2, "strict inequality, gaussian-shift q=4/3", ok,
                           {"lhs": lhs, "rhs": rhs, "verdict": rep.verdict})


def c3_fisher_quadrature(workers=None) -> CriterionResult:
    errs = {}
    for p in (2.0, 2.5, 3.0, 4.0, 6.0):
        got = fisher_p("gaussian-shift", 0.0, p).value
        want = dist.gaussian_abs_moment(p) ** (1.0 / p)
        errs[p] = abs(got - want) / want
    return CriterionResult(3, "p-Fisher quadrature vs Gaussian moments", max(errs.values()) <= 1e-6,
                           {"relative_errors": errs})


def c4_natural_functions(workers=None) -> CriterionResult:
    grid = default_p_grid()
    lap = natural_psi("laplace-shift")
    lap_err = max(abs(lap(p) - 1.0) for p in grid)
    thetas = [0.5, 1.0, 1.5, 2.0, 3.0]
    psi = natural_psi("exponential-scale", thetas)
    worst = 0.0
    for p in grid:
        reduced = scale_reduced_integral("exponential-scale", p).value ** (1.0 / p)
        direct = [natural_psi_direct("exponential-scale", t, p) for t in thetas]
        for t, d in zip(thetas, direct):
            worst = max(worst, abs(reduced / t - d) / d)
        worst = max(worst, abs(psi(p) - max(direct)) / max(direct))
    ok = lap_err <= 1e-8 and worst <= 1e-8
    return CriterionResult(4, "natural-function identities", ok,
                           {"laplace_max_abs_error": lap_err, "scale_max_rel_error": worst})


def c5_young_fenchel(workers=None) -> CriterionResult:
    u = np.linspace(-5, 5, 101)
    e1 = float(np.max(np.abs(young_fenchel(phi_2(), u).values - u * u / 2)))
    u4 = np.linspace(0.1, 10, 100)
    e2 = float(np.max(np.abs(young_fenchel(phi_power(4), u4).values - 3 * (u4 / 4) ** (4.0 / 3.0))))
    lam = np.linspace(-2, 2, 41)[1:-1]
    e3 = 0.0
    for phi in (phi_2(), phi_power(4)):
        conj = young_fenchel(phi, [0.0]).function
        back = young_fenchel(conj, lam).values
        e3 = max(e3, float(np.max(np.abs(back - phi(lam)))))
    ok = e1 <= 1e-8 and e2 <= 1e-6 and e3 <= 1e-6
    return CriterionResult(5, "Young-Fenchel battery", ok,
                           {"self_conjugacy": e1, "quartic": e2, "double_conjugate": e3})


def c6_phi_bar_fixed_point(workers=None) -> CriterionResult:
    from .norms import default_lambda_grid

    lam = default_lambda_grid()
    bar = phi_bar(phi_2())(lam)
    exact = bool(np.all(bar == phi_2()(lam)))
    return CriterionResult(6, "phi_bar(phi_2) = phi_2", exact,
                           {"max_abs_difference": float(np.max(np.abs(bar - phi_2()(lam))))})


def c7_rosenthal(workers=None) -> CriterionResult:
    details, ok = {}, True
    for name in ("rademacher", "normal", "centered-exponential"):
        rep = rosenthal_empirical_check(name, [2, 3, 4, 8], [1, 4, 16, 64, 256, 1024], 100_000, SEED,
                                        workers=workers)
        p2 = all(abs(r - 1.0) <= 3 * s + 1e-12 for r, s in zip(rep.ratios[2.0], rep.ses[2.0]))
        ok &= rep.holds and p2
        details[name] = {"max_ratio": rep.max_ratio, "p2_within_3se": p2}
    return CriterionResult(7, "Rosenthal inequality, empirical", ok, details)


def c8_stable_divergence(workers=None) -> CriterionResult:
    t0 = time.perf_counter()
    res = wnri_probe("symmetric-stable(1.5)", NormSpec.lp(1.0), [2 ** k for k in range(13)], 100_000, SEED,
                     workers=workers)
    secs = time.perf_counter() - t0
    slope = res.estimate.growth.slope
    ok = res.verdict == DIVERGENCE_DETECTED and abs(slope - 1.0 / 6.0) <= 0.05 and secs < 300
    return CriterionResult(8, "stable(1.5) L1 divergence", ok,
                           {"verdict": res.verdict, "growth_exponent": slope,
                            "growth_se": res.estimate.growth.se, "runtime": secs})


def c9_clt_gaussian(workers=None) -> CriterionResult:
    est = clt_norm_estimate("normal", NormSpec.lp(4.0), [1, 4, 16, 64, 256, 1024], 100_000, SEED,
                            workers=workers)
    target = 3.0 ** 0.25
    z = [(v - target) / s for v, s in zip(est.values, est.ses)]
    return CriterionResult(9, "CLT norm Gaussian fixed point", all(abs(v) <= 3 for v in z),
                           {"values": est.values, "z_scores": z})


def c10_mle_trend(workers=None) -> CriterionResult:
    sc = Scenario("gaussian-shift", 0.0, "mle", {"tag": "Lp", "p": 4.0}, (16, 32, 64, 128, 256, 512, 1024),
                  10_000, SEED, mode=UPPER)
    rep = verify_bound(sc, workers=workers)
    slope = rep.diagnostics["growth"]["slope"]
    return CriterionResult(10, "MLE upper-bound trend", abs(slope) <= 0.02,
                           {"slope": slope, "values": rep.lhs, "verdict": rep.verdict})


def c11_lorentz(workers=None) -> CriterionResult:
    rng = np.random.default_rng(SEED)
    x = rng.standard_normal(10_000)
    exact = all(float(lorentz_quasinorm(x, p, p)) == float(lp_norm(x, p)) for p in (1.0, 2.0, 3.0))
    weak = float(lorentz_quasinorm(dist.uniform(0.0, 1.0), 1.0, math.inf))
    ok = exact and abs(weak - 0.25) <= 1e-8
    return CriterionResult(11, "Lorentz consistency", ok, {"lpp_equals_lp": exact, "uniform_weak": weak})


def c12_determinism(workers=None) -> CriterionResult:
    from .cli import main

    outputs = []
    with tempfile.TemporaryDirectory() as tmp:
        scen = Path(tmp) / "gauss_q2.json"
        scen.write_text(json.dumps(gauss_q2_scenario().to_dict()))
        for w in (1, 4, 16):
            report = Path(tmp) / f"report_{w}.json"
            code = main(["verify", "--scenario", str(scen), "--seed", str(SEED), "--workers", str(w),
                         "--report", str(report)], stdout=open("/dev/null", "w"))
            outputs.append((code, report.read_bytes() if report.exists() else b""))
    same = all(o == outputs[0] for o in outputs) and outputs[0][0] == 0 and outputs[0][1] != b""
    return CriterionResult(12, "verify bit-identical across workers 1/4/16", same,
                           {"exit_codes": [o[0] for o in outputs]})


CRITERIA: dict[int, Callable[..., CriterionResult]] = {
    1: c1_rao_cramer_equality,
    2: c2_strict_inequality,
    3: c3_fisher_quadrature,
    4: c4_natural_functions,
    5: c5_young_fenchel,
    6: c6_phi_bar_fixed_point,
    7: c7_rosenthal,
    8: c8_stable_divergence,
    9: c9_clt_gaussian,
    10: c10_mle_trend,
    11: c11_lorentz,
    12: c12_determinism,
}


def run(number: int, workers=None) -> CriterionResult:
    t0 = time.perf_counter()
    res = CRITERIA[number](workers=workers)
    res.seconds = time.perf_counter() - t0
    return res


def run_all(numbers: Optional[Iterable[int]] = None, workers=None):
    for k in (sorted(CRITERIA) if numbers is None else numbers):
        yield run(int(k), workers=workers)
