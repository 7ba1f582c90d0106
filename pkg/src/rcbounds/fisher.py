"""Generalised Fisher information: the norm of the score l(X, theta).

``i_p(theta) = [int |g'_theta|^p g^(1-p) dmu]^(1/p)`` is the L_p norm of the
score under g(., theta); the Grand Lebesgue and exponential Orlicz versions
replace L_p by G(psi) and B(phi).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError, PreconditionError
from .families import get_family
from .norms import NormSpec, NormValue, bphi_norm, gls_norm, lp_norm, lp_norm_se, moment_curve
from .rng import Stream
from .transforms import score_power_integral

QUADRATURE, MONTECARLO = "quadrature", "montecarlo"


@dataclass
class FisherReport:
    family: str
    theta: float
    norm: dict
    value: float
    method: str
    error_estimate: float
    reps: Optional[int] = None
    diverged: bool = False
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "theta": self.theta,
            "norm": self.norm,
            "value": self.value if math.isfinite(self.value) else "inf",
            "method": self.method,
            "error_estimate": self.error_estimate,
            "reps": self.reps,
            "diverged": self.diverged,
            "diagnostics": self.diagnostics,
        }


def fisher_p(family, theta: float, p: float, method: str = QUADRATURE, reps: int = 100_000,
             seed: int = 0) -> FisherReport:
    """p-Fisher information at ``theta``.

    ``method="quadrature"`` integrates |l|^p g directly; ``"montecarlo"``
    takes the empirical L_p norm of ``reps`` score draws and reports its
    delta-method standard error.  Any p >= 1 is accepted here; bound
    evaluation separately insists on p >= 2.
    """
    fam = get_family(family)
    theta = fam.check_theta(theta)
    if not p >= 1:
        raise DomainError("fisher_p needs p >= 1")
    norm = {"norm": "Lp", "p": p}
    if method == QUADRATURE:
        r = score_power_integral(fam, theta, p)
        if not r.finite:
            return FisherReport(fam.name, theta, norm, math.inf, method, math.inf, diverged=True,
                                diagnostics={"subdivisions": r.subdivisions})
        value = r.value ** (1.0 / p)
        # d(I^(1/p)) = I^(1/p - 1) dI / p
        err = value * r.error_estimate / (p * r.value) if r.value > 0 else r.error_estimate
        return FisherReport(fam.name, theta, norm, value, method, err,
                            diagnostics={"subdivisions": r.subdivisions})
    if method == MONTECARLO:
        stream = Stream(seed, ["fisher_p", fam.name, theta, p])
        x = fam.sample(theta, reps, stream)
        scores = fam.score(x, theta)
        value = float(lp_norm(scores, p))
        return FisherReport(fam.name, theta, norm, value, method, lp_norm_se(scores, p), reps=reps)
    raise DomainError(f"unknown method {method!r}")


def fisher_gls(family, theta: float, psi, p_grid: Optional[Sequence[float]] = None,
               ceiling: float = 1e3) -> FisherReport:
    """G(psi) norm of the score, sup_p |l|_p / psi(p) on the p grid."""
    fam = get_family(family)
    theta = fam.check_theta(theta)
    spec = NormSpec.gls(psi, p_grid=p_grid, ceiling=ceiling)
    grid = spec.resolved_p_grid()
    curve = moment_curve(fam.score_variable(theta), grid)
    nv = gls_norm(curve, psi, ceiling=ceiling)
    return _from_norm(fam.name, theta, spec, nv)


def fisher_bphi(family, theta: float, phi, lam_grid: Optional[Sequence[float]] = None,
                ceiling: float = 1e6) -> FisherReport:
    """B(phi) norm of the score.

    Raises PreconditionError naming the first lambda at which the score's
    moment generating function diverges.
    """
    fam = get_family(family)
    theta = fam.check_theta(theta)
    spec = NormSpec.bphi(phi, lam_grid=lam_grid, ceiling=ceiling)
    nv = bphi_norm(fam.score_variable(theta), phi, spec.resolved_lam_grid(), ceiling=ceiling)
    if not nv.finite and nv.arg is not None:
        err = PreconditionError(f"Cramer condition fails for {fam.name} at lambda={nv.arg}")
        err.failing_lambda = nv.arg
        raise err
    return _from_norm(fam.name, theta, spec, nv)


def _from_norm(name: str, theta: float, spec: NormSpec, nv: NormValue) -> FisherReport:
    value = float(nv)
    return FisherReport(name, theta, spec.describe(), value, QUADRATURE, 0.0,
                        diverged=not nv.finite, diagnostics={"arg": nv.arg, **nv.diagnostics})


def fisher_in_norm(family, theta: float, spec: NormSpec) -> FisherReport:
    """Dispatch on a norm specification (L_p, G(psi) or B(phi))."""
    if spec.tag == "Lp":
        return fisher_p(family, theta, spec.p)
    if spec.tag == "GLS":
        return fisher_gls(family, theta, spec.psi, p_grid=spec.p_grid, ceiling=spec.ceiling)
    if spec.tag == "Bphi":
        return fisher_bphi(family, theta, spec.phi, lam_grid=spec.lam_grid, ceiling=spec.ceiling)
    raise DomainError(f"no Fisher information for norm {spec.tag}")


def sample_fisher_agg(informations: Sequence[float], K: float) -> tuple[float, float]:
    """(K sqrt(sum i_k^2), sum i_k): aggregated and naive triangle bounds."""
    if K < 1:
        raise DomainError("aggregation constant K must be >= 1")
    arr = np.asarray(informations, dtype=float)
    if arr.ndim != 1 or arr.size == 0 or np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise DomainError("informations must be a nonempty vector of finite nonnegative values")
    return K * math.sqrt(math.fsum(arr * arr)), math.fsum(arr)
