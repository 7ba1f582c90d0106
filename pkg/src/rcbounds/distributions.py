"""Analytic random variables and empirical samples.

An analytic variable is described by a base density ``pdf`` on an interval
and an optional measurable map ``transform``; it represents
``scale * transform(X)`` with ``X ~ pdf``.  Expectations are computed by
quadrature over ``X``.  Closed forms (absolute moments, log-mgf, tail of
``|X|``) can be attached and are then preferred unless quadrature is forced.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Optional

import numpy as np
from scipy import special

from .errors import DomainError
from .quadrature import FullLine, HalfLine, Interval, QuadratureResult, quad


def domain_for(support: tuple[float, float]):
    lo, hi = support
    if math.isinf(lo) and math.isinf(hi):
        return FullLine()
    if math.isinf(hi):
        return HalfLine(lo, 1)
    if math.isinf(lo):
        return HalfLine(hi, -1)
    return Interval(lo, hi)


class RandomVariable:
    """Interface shared by analytic variables."""

    name: str

    def expect(self, h: Callable[[np.ndarray], np.ndarray]) -> QuadratureResult:
        raise NotImplementedError

    def abs_moment(self, p: float, method: str = "auto") -> QuadratureResult:
        """E|X|^p.  A non-finite or non-converged result signals divergence."""
        return self.expect(lambda v: np.abs(v) ** p)

    def mean(self) -> float:
        return self.expect(lambda v: v).value

    def log_mgf(self, lam: float) -> float:
        """log E exp(lam X), returning +inf when the mgf diverges.

        Computed as log1p(E[expm1(lam X) - lam X]) for centered variables so
        small ``lam`` keeps full relative precision.
        """
        if lam == 0:
            return 0.0
        r = self.expect(lambda v: np.expm1(lam * v) - lam * v)
        if not r.converged or not math.isfinite(r.value):
            return math.inf
        return math.log1p(r.value + lam * self.mean())

    def tail_abs(self, x: float) -> float:
        """P(|X| >= x)."""
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        raise NotImplementedError

    def scaled(self, c: float) -> "RandomVariable":
        raise NotImplementedError


@dataclass(frozen=True)
class ContinuousRV(RandomVariable):
    name: str
    pdf: Callable[[np.ndarray], np.ndarray]
    support: tuple[float, float] = (-math.inf, math.inf)
    transform: Optional[Callable[[np.ndarray], np.ndarray]] = None
    scale: float = 1.0
    breakpoints: tuple[float, ...] = ()
    sampler: Optional[Callable[[np.random.Generator, object], np.ndarray]] = None
    # closed forms for the *unscaled* variable
    abs_moment_fn: Optional[Callable[[float], float]] = None
    log_mgf_fn: Optional[Callable[[float], float]] = None
    tail_fn: Optional[Callable[[float], float]] = None
    quad_kwargs: dict = field(default_factory=dict)

    def _values(self, x):
        v = x if self.transform is None else self.transform(x)
        return self.scale * v

    def expect(self, h):
        pdf = self.pdf

        def integrand(x):
            with np.errstate(all="ignore"):
                dens = pdf(x)
                out = h(self._values(x)) * dens
            return np.where(dens == 0.0, 0.0, out)

        return quad(integrand, domain_for(self.support), breakpoints=self.breakpoints, **self.quad_kwargs)

    def abs_moment(self, p, method="auto"):
        if method == "auto" and self.abs_moment_fn is not None:
            base = self.abs_moment_fn(p)
            val = abs(self.scale) ** p * base if self.scale != 0 else 0.0
            return QuadratureResult(val, 0.0, math.isfinite(val), 0)
        return super().abs_moment(p)

    def mean(self):
        if self.scale == 0:
            return 0.0
        return super().mean()

    def log_mgf(self, lam):
        if self.scale == 0:
            return 0.0
        if self.log_mgf_fn is not None:
            return self.log_mgf_fn(self.scale * lam)
        if self._mgf_tail_grows(lam):
            return math.inf
        return super().log_mgf(lam)

    def _mgf_tail_grows(self, lam) -> bool:
        """Probe x exp(lam X(x)) pdf(x) at x = 8..512 along each infinite end.

        Adaptive quadrature can settle on a finite value for an exponentially
        growing integrand, so growth of the probed tail is treated as
        divergence.  Underflow-times-overflow probes are discarded.
        """
        lo, hi = self.support
        steps = 2.0 ** np.arange(3, 10)
        for inf_end, sign in ((hi, 1.0), (lo, -1.0)):
            if math.isfinite(inf_end):
                continue
            base = 0.0 if not math.isfinite(lo if sign > 0 else hi) else (lo if sign > 0 else hi)
            xs = base + sign * steps
            with np.errstate(all="ignore"):
                f = np.abs(xs) * self.pdf(xs) * np.exp(lam * self._values(xs))
            f = f[~np.isnan(f) & (f > 0)]
            if f.size >= 2 and (not np.isfinite(f[-1]) or f[-1] >= f[-2]):
                return True
        return False

    def tail_abs(self, x):
        if x <= 0:
            return 1.0
        if self.scale == 0:
            return 0.0
        y = x / abs(self.scale)
        if self.tail_fn is not None:
            return float(self.tail_fn(y))
        if self.transform is not None:
            raise NotImplementedError("tail of a transformed variable needs a closed form")
        lo, hi = self.support
        total = 0.0
        if hi > y:
            total += quad(self.pdf, domain_for((max(lo, y), hi)), breakpoints=self.breakpoints).value
        if lo < -y:
            total += quad(self.pdf, domain_for((lo, min(hi, -y))), breakpoints=self.breakpoints).value
        return min(1.0, total)

    def sample(self, rng, size):
        if self.sampler is None:
            raise NotImplementedError(f"{self.name} has no sampler")
        return self.scale * np.asarray(self.sampler(rng, size), dtype=float)

    def scaled(self, c):
        return replace(self, name=f"{c}*{self.name}", scale=self.scale * c)


@dataclass(frozen=True)
class DiscreteRV(RandomVariable):
    name: str
    atoms: tuple[float, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        if len(self.atoms) != len(self.probs) or not self.atoms:
            raise ValueError("atoms and probs must be nonempty and of equal length")
        if abs(math.fsum(self.probs) - 1.0) > 1e-12:
            raise ValueError("probabilities must sum to 1")

    def expect(self, h):
        vals = np.asarray(h(np.asarray(self.atoms, dtype=float)), dtype=float)
        total = math.fsum(float(p * v) for p, v in zip(self.probs, vals) if p > 0)
        return QuadratureResult(total, 0.0, math.isfinite(total), 0)

    def log_mgf(self, lam):
        if lam == 0:
            return 0.0
        a = np.asarray(self.atoms, dtype=float) * lam
        if float(np.abs(a).max()) <= 1.0:
            return math.log1p(math.fsum(p * math.expm1(v) for p, v in zip(self.probs, a)))
        m = float(a.max())
        return m + math.log(math.fsum(p * math.exp(v - m) for p, v in zip(self.probs, a)))

    def tail_abs(self, x):
        return math.fsum(p for a, p in zip(self.atoms, self.probs) if abs(a) >= x)

    def sample(self, rng, size):
        idx = rng.choice(len(self.atoms), size=size, p=np.asarray(self.probs))
        return np.asarray(self.atoms, dtype=float)[idx]

    def scaled(self, c):
        return DiscreteRV(f"{c}*{self.name}", tuple(c * a for a in self.atoms), self.probs)


# -- closed forms ---------------------------------------------------------------

def gaussian_abs_moment(p: float) -> float:
    """E|Z|^p for standard normal Z."""
    return 2.0 ** (p / 2) * math.gamma((p + 1) / 2) / math.sqrt(math.pi)


def centered_exponential_abs_moment(p: float, terms: int = 60) -> float:
    """E|E - 1|^p for E ~ Exp(1).

    Splits at 1: the right piece is e^-1 Gamma(p+1), the left piece
    e^-1 int_0^1 u^p e^u du expanded as a series in 1/(k! (p+k+1)).
    """
    series = math.fsum(1.0 / (math.gamma(k + 1) * (p + k + 1)) for k in range(terms))
    return math.exp(-1.0) * (math.gamma(p + 1) + series)


def stable_abs_moment(p: float, alpha: float) -> float:
    """E|X|^p for symmetric stable X with characteristic function exp(-|t|^alpha)."""
    if p >= alpha:
        return math.inf
    return (2.0 ** p * math.gamma((1 + p) / 2) * math.gamma(1 - p / alpha)
            / (math.sqrt(math.pi) * math.gamma(1 - p / 2)))


def _std_normal_pdf(x):
    return np.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)


# -- constructors ---------------------------------------------------------------

def normal(sigma: float = 1.0) -> ContinuousRV:
    rv = ContinuousRV(
        name="normal",
        pdf=_std_normal_pdf,
        sampler=lambda rng, size: rng.standard_normal(size),
        abs_moment_fn=gaussian_abs_moment,
        log_mgf_fn=lambda lam: 0.5 * lam * lam,
        tail_fn=lambda x: float(special.erfc(x / math.sqrt(2))),
    )
    return rv if sigma == 1.0 else rv.scaled(sigma)


def rademacher() -> DiscreteRV:
    return DiscreteRV("rademacher", (-1.0, 1.0), (0.5, 0.5))


def point_mass(c: float) -> DiscreteRV:
    return DiscreteRV(f"point_mass({c})", (float(c),), (1.0,))


def centered_exponential() -> ContinuousRV:
    """E - 1 with E ~ Exp(1)."""
    return ContinuousRV(
        name="centered_exponential",
        pdf=lambda x: np.where(x >= -1.0, np.exp(-(x + 1.0)), 0.0),
        support=(-1.0, math.inf),
        breakpoints=(0.0, 1.0),
        sampler=lambda rng, size: rng.standard_exponential(size) - 1.0,
        abs_moment_fn=centered_exponential_abs_moment,
        log_mgf_fn=lambda lam: (-lam - math.log1p(-lam)) if lam < 1 else math.inf,
    )


def uniform(a: float = 0.0, b: float = 1.0) -> ContinuousRV:
    if not a < b:
        raise DomainError("uniform requires a < b")
    w = b - a
    return ContinuousRV(
        name=f"uniform({a},{b})",
        pdf=lambda x: np.where((x >= a) & (x <= b), 1.0 / w, 0.0),
        support=(a, b),
        breakpoints=(0.0,) if a < 0 < b else (),
        sampler=lambda rng, size: rng.uniform(a, b, size),
    )


def weibull_tail(m: float) -> ContinuousRV:
    """Symmetric variable with P(|X| > x) = exp(-x^m)."""
    if m <= 0:
        raise DomainError("weibull_tail requires m > 0")

    def pdf(x):
        ax = np.abs(x)
        return 0.5 * m * ax ** (m - 1) * np.exp(-(ax ** m))

    def sampler(rng, size):
        mag = rng.standard_exponential(size) ** (1.0 / m)
        sign = np.where(rng.random(size) < 0.5, -1.0, 1.0)
        return sign * mag

    return ContinuousRV(
        name=f"weibull_tail({m})",
        pdf=pdf,
        breakpoints=(0.0,),
        sampler=sampler,
        abs_moment_fn=lambda p: math.gamma(p / m + 1.0),
        tail_fn=lambda x: math.exp(-(x ** m)),
    )


def sample_symmetric_stable(rng: np.random.Generator, alpha: float, size) -> np.ndarray:
    """Chambers-Mallows-Stuck draws with characteristic function exp(-|t|^alpha)."""
    v = rng.uniform(-0.5 * math.pi, 0.5 * math.pi, size)
    w = rng.standard_exponential(size)
    if alpha == 1.0:
        return np.tan(v)
    return (np.sin(alpha * v) / np.cos(v) ** (1.0 / alpha)
            * (np.cos((1.0 - alpha) * v) / w) ** ((1.0 - alpha) / alpha))


def stable_tail_abs(x: float, alpha: float) -> float:
    """P(|X| > x) for standard symmetric stable X by Fourier inversion.

    P(|X| <= x) = (2/pi) * int_0^T sin(t x)/t * exp(-t^alpha) dt + R,
    with T = 40^(1/alpha) chosen so |R| <= exp(-T^alpha) / (alpha T^alpha)
    < 1e-19.  The oscillatory integrand is split at every half period pi/x.
    """
    if x <= 0:
        return 1.0
    upper = 40.0 ** (1.0 / alpha)
    step = math.pi / x
    edges = np.arange(0.0, upper, step).tolist() + [upper]

    def integrand(t):
        return np.where(t == 0.0, x, np.sin(t * x) / np.where(t == 0.0, 1.0, t)) * np.exp(-(t ** alpha))

    pieces = [quad(integrand, Interval(a, b), abs_tol=1e-15, rel_tol=1e-13).value
              for a, b in zip(edges[:-1], edges[1:]) if b > a]
    return 1.0 - 2.0 / math.pi * math.fsum(pieces)


@dataclass(frozen=True)
class StableRV(RandomVariable):
    """Symmetric alpha-stable variable; no closed density, sampler only."""

    alpha: float
    scale: float = 1.0

    def __post_init__(self):
        if not 0 < self.alpha < 2:
            raise DomainError("stability index must lie in (0, 2)")

    @property
    def name(self):
        return f"symmetric_stable({self.alpha})"

    def expect(self, h):
        raise NotImplementedError("symmetric stable law has no closed density")

    def abs_moment(self, p, method="auto"):
        val = abs(self.scale) ** p * stable_abs_moment(p, self.alpha) if self.scale else 0.0
        return QuadratureResult(val, 0.0, math.isfinite(val), 0)

    def mean(self):
        if self.alpha <= 1:
            raise DomainError("mean undefined for alpha <= 1")
        return 0.0

    def log_mgf(self, lam):
        return 0.0 if lam == 0 or self.scale == 0 else math.inf

    def tail_abs(self, x):
        if self.scale == 0:
            return 0.0 if x > 0 else 1.0
        return stable_tail_abs(x / abs(self.scale), self.alpha)

    def sample(self, rng, size):
        return self.scale * sample_symmetric_stable(rng, self.alpha, size)

    def scaled(self, c):
        return replace(self, scale=self.scale * c)


def symmetric_stable(alpha: float) -> StableRV:
    return StableRV(alpha)


BUILTIN_DISTRIBUTIONS = {
    "normal": normal,
    "rademacher": rademacher,
    "centered-exponential": centered_exponential,
    "uniform": uniform,
    "point-mass": point_mass,
    "weibull-tail": weibull_tail,
    "symmetric-stable": symmetric_stable,
}


def make_distribution(name: str, *args) -> RandomVariable:
    try:
        ctor = BUILTIN_DISTRIBUTIONS[name]
    except KeyError:
        raise DomainError(f"unknown distribution {name!r}") from None
    return ctor(*args)


def parse_distribution(spec: str) -> RandomVariable:
    """Parse ``name`` or ``name(arg, ...)`` into a distribution."""
    spec = spec.strip()
    if "(" in spec:
        name, rest = spec.split("(", 1)
        args = [float(a) for a in rest.rstrip(")").split(",") if a.strip()]
        return make_distribution(name.strip(), *args)
    return make_distribution(spec)


@dataclass
class EmpiricalSample:
    """Seeded Monte Carlo draw with enough provenance to regenerate it."""

    values: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1 or self.values.size == 0:
            raise ValueError("empirical sample must be a nonempty vector")

    def __len__(self):
        return self.values.size

    @cached_property
    def sorted_abs(self) -> np.ndarray:
        return np.sort(np.abs(self.values))

    def scaled(self, c: float) -> "EmpiricalSample":
        return EmpiricalSample(c * self.values, {**self.provenance, "scale": c})
