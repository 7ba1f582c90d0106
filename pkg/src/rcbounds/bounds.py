"""Right-hand sides of the lower bounds and the constants feeding them.

Every bound has the form ``sqrt(n) ||theta_hat_n - theta_0||_{Y'} >= 1 / K i``
where ``i`` is the Fisher information of the score in the paired space and
``K`` is a Rosenthal-type aggregation constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

from .errors import DomainError, NoBoundError
from .families import get_family
from .fisher import FisherReport, fisher_bphi, fisher_gls, fisher_p
from .transforms import phi_bar

# Rosenthal constant for sums of independent centered variables in L_p.
ROSENTHAL_C = 1.77638
# The same constant as quoted where K(B) is defined; kept as written there.
KB_C = 1.7768

LP_PAIR, GLS_PAIR, BPHI_PAIR = "Lp", "GLS", "Bphi"


def rosenthal_bound(p: float) -> float:
    """R(p) = 1.77638 p / (e ln p) for p > 2, and exactly 1 at p = 2."""
    if not p >= 2:
        raise DomainError(f"rosenthal_bound needs p >= 2, got {p}")
    if p == 2:
        return 1.0
    return ROSENTHAL_C * p / (math.e * math.log(p))


def kb_constant(B: float) -> float:
    """K(B) = 1.7768 B / (e ln B) for 2 < B < inf."""
    if not (2 < B < math.inf):
        raise DomainError(f"kb_constant needs 2 < B < inf, got {B}")
    return KB_C * B / (math.e * math.log(B))


def conjugate_exponent(q: float) -> float:
    if not 1 < q <= 2:
        raise DomainError(f"q must lie in (1, 2], got {q}")
    return q / (q - 1.0)


@dataclass
class BoundResult:
    family: str
    theta0: float
    pairing: dict
    bound: float
    statement_norm: str
    constant: dict
    information: FisherReport
    variant: Optional[dict] = None  # finite-support K(B) form for G(psi)
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {
            "family": self.family,
            "theta0": self.theta0,
            "pairing": self.pairing,
            "bound": self.bound,
            "statement_norm": self.statement_norm,
            "constant": self.constant,
            "information": self.information.to_dict(),
        }
        if self.variant is not None:
            d["variant"] = self.variant
        return d


def _require_finite(info: FisherReport) -> float:
    if info.diverged or not math.isfinite(info.value):
        raise NoBoundError(f"information of {info.family} at theta={info.theta} is infinite")
    if info.value <= 0:
        raise NoBoundError(f"information of {info.family} at theta={info.theta} is zero")
    return info.value


def lower_bound_lp(family, theta0: float, q: float) -> BoundResult:
    """1 / (R(p) i_p(theta0)) with p = q / (q - 1), for the L_q deviation."""
    p = conjugate_exponent(q)
    fam = get_family(family)
    info = fisher_p(fam, theta0, p)
    i = _require_finite(info)
    R = rosenthal_bound(p)
    return BoundResult(fam.name, float(theta0), {"pair": LP_PAIR, "q": q, "p": p}, 1.0 / (R * i),
                       f"L_{q:g}", {"R(p)": R}, info)


def lower_bound_gls(family, theta0: float, psi, p_grid: Optional[Sequence[float]] = None) -> BoundResult:
    """1 / i_(psi)(theta0), stated in the associate space of G(psi_R).

    When psi has finite support B > 2 the variant ``1 / (K(B) i_(psi))``
    stated in the associate space of G(psi) is attached as ``variant``.
    """
    fam = get_family(family)
    info = fisher_gls(fam, theta0, psi, p_grid=p_grid)
    i = _require_finite(info)
    label = getattr(psi, "label", "psi")
    res = BoundResult(fam.name, float(theta0), {"pair": GLS_PAIR, "psi": label}, 1.0 / i,
                      f"G'(psi_R[{label}])", {"K(Y)": 1}, info)
    B = getattr(psi, "support_B", math.inf)
    if math.isfinite(B) and B > 2:
        K = kb_constant(B)
        res.variant = {"bound": 1.0 / (K * i), "statement_norm": f"G'({label})", "K(B)": K, "B": B}
    return res


def lower_bound_bphi(family, theta0: float, phi, lam_grid: Optional[Sequence[float]] = None) -> BoundResult:
    """1 / i_(phi)(theta0), stated in the associate space of B(phi_bar)."""
    fam = get_family(family)
    info = fisher_bphi(fam, theta0, phi, lam_grid=lam_grid)
    i = _require_finite(info)
    label = getattr(phi, "label", "phi")
    return BoundResult(fam.name, float(theta0), {"pair": BPHI_PAIR, "phi": label}, 1.0 / i,
                       f"B'(bar({label}))", {"K(Y)": 1}, info, extras={"phi_bar": phi_bar(phi)})


def general_lower_bound(clt_norm_of_score: float) -> float:
    """1 / ||l||_CLT(Y), defined for 0 < ||l|| < inf."""
    v = float(clt_norm_of_score)
    if not (0 < v < math.inf):
        raise NoBoundError(f"CLT norm of the score must be positive and finite, got {v}")
    return 1.0 / v


@dataclass(frozen=True)
class BoundSpec:
    """Family, true parameter and norm pairing of one lower bound."""

    family: Any
    theta0: float
    pair: str
    q: Optional[float] = None
    psi: Any = None
    phi: Any = None
    p_grid: Optional[tuple] = None
    lam_grid: Optional[tuple] = None

    def __post_init__(self):
        if self.pair == LP_PAIR:
            if self.q is None:
                raise DomainError("Lp pairing needs q")
            conjugate_exponent(self.q)
        elif self.pair == GLS_PAIR:
            if self.psi is None:
                raise DomainError("GLS pairing needs psi")
        elif self.pair == BPHI_PAIR:
            if self.phi is None:
                raise DomainError("Bphi pairing needs phi")
        else:
            raise DomainError(f"unknown pairing {self.pair!r}")

    @property
    def constant_kind(self) -> str:
        if self.pair == LP_PAIR:
            return "R(p)"
        if self.pair == GLS_PAIR and math.isfinite(getattr(self.psi, "support_B", math.inf)):
            return "K(B)"
        return "K(Y)=1"

    def evaluate(self) -> BoundResult:
        if self.pair == LP_PAIR:
            return lower_bound_lp(self.family, self.theta0, self.q)
        if self.pair == GLS_PAIR:
            return lower_bound_gls(self.family, self.theta0, self.psi, p_grid=self.p_grid)
        return lower_bound_bphi(self.family, self.theta0, self.phi, lam_grid=self.lam_grid)
