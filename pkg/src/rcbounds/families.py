"""One-parameter families: density, score, sampler and regularity checks.

Built-in identifiers::

    gaussian-shift        g0 = standard normal density
    laplace-shift         g0(u) = exp(-|u|) / 2
    exponential-scale     h(y) = exp(-y) on y > 0
    weibull-tail(m)       g0(u) = (m/2) |u|^(m-1) exp(-|u|^m), shift kind
    symmetric-stable(a)   shift kind, sampler only (no density, no score)

Custom shift families can be built from a tabulated log-density, see
:func:`tabulated_shift_family`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import distributions as dist
from .errors import DomainError, UnsupportedScoreError
from .quadrature import HalfLine, quad
from .rng import Stream, run_blocks

SHIFT, SCALE, GENERAL = "shift", "scale", "general"


def _as_generator(stream) -> np.random.Generator:
    if isinstance(stream, np.random.Generator):
        return stream
    if isinstance(stream, Stream):
        return stream.generator(0)
    return Stream(int(stream)).generator(0)


class ParametricFamily:
    """Base class; subclasses provide the kind-specific density and score."""

    name: str
    kind: str
    param_domain: tuple[float, float] = (-math.inf, math.inf)
    support: tuple[float, float] = (-math.inf, math.inf)
    # "mean" when the maximum likelihood estimate is the sample mean
    mle_closed_form: Optional[str] = None

    def check_theta(self, theta: float) -> float:
        lo, hi = self.param_domain
        theta = float(theta)
        if not lo < theta < hi:
            raise DomainError(f"theta={theta} outside parameter domain ({lo}, {hi}) of {self.name}")
        return theta

    def check_x(self, x):
        x = np.asarray(x, dtype=float)
        lo, hi = self.support
        if np.any((x < lo) | (x > hi)) or np.any(np.isnan(x)):
            raise DomainError(f"x outside support ({lo}, {hi}) of {self.name}")
        return x

    def density(self, x, theta):
        raise NotImplementedError

    def score(self, x, theta):
        raise NotImplementedError

    def log_density(self, x, theta):
        return np.log(self.density(x, theta))

    def sample(self, theta: float, n: int, stream) -> np.ndarray:
        if n < 1:
            raise DomainError("sample size must be at least 1")
        theta = self.check_theta(theta)
        return self._draw(theta, _as_generator(stream), n)

    def _draw(self, theta, rng, size):
        raise NotImplementedError

    def breakpoints(self, theta: float) -> tuple[float, ...]:
        return ()

    def score_abs_moment(self, p: float, theta: float) -> Optional[float]:
        """Closed-form E|l(X, theta)|^p when the family carries one."""
        return None

    def score_moment_finite(self, p: float) -> bool:
        """False when E|l(X, theta)|^p is known to diverge."""
        return True

    @property
    def has_score(self) -> bool:
        return True

    def score_variable(self, theta: float) -> dist.ContinuousRV:
        """The law of l(X, theta) with X ~ g(., theta), as an analytic variable."""
        if not self.has_score:
            raise UnsupportedScoreError(f"{self.name} has no score function")
        theta = self.check_theta(theta)
        moment = (lambda p: self.score_abs_moment(p, theta))
        has_moment = self.score_abs_moment(2.0, theta) is not None
        return dist.ContinuousRV(
            name=f"score[{self.name}, theta={theta}]",
            pdf=lambda x: self._density_unchecked(x, theta),
            support=self.support,
            transform=lambda x: self._score_unchecked(x, theta),
            breakpoints=self.breakpoints(theta),
            sampler=lambda rng, size: self._score_unchecked(self._draw(theta, rng, size), theta),
            abs_moment_fn=moment if has_moment else None,
        )

    def _density_unchecked(self, x, theta):
        raise NotImplementedError

    def _score_unchecked(self, x, theta):
        raise NotImplementedError

    def __repr__(self):
        return f"<{type(self).__name__} {self.name}>"


class ShiftFamily(ParametricFamily):
    """g(x, theta) = g0(x - theta) on the whole line."""

    kind = SHIFT

    def __init__(self, name, g0, dlog_g0, sampler0, kinks=(), score_moment=None, mle_closed_form=None,
                 max_score_moment=math.inf):
        self.name = name
        self._max_score_moment = max_score_moment
        self._g0 = g0
        self._dlog = dlog_g0
        self._sampler0 = sampler0
        self._kinks = tuple(kinks)
        self._score_moment = score_moment
        self.mle_closed_form = mle_closed_form

    def base_density(self, u):
        return self._g0(np.asarray(u, dtype=float))

    def base_dlog(self, u):
        return self._dlog(np.asarray(u, dtype=float))

    def _density_unchecked(self, x, theta):
        return self._g0(np.asarray(x, dtype=float) - theta)

    def _score_unchecked(self, x, theta):
        return -self._dlog(np.asarray(x, dtype=float) - theta)

    def density(self, x, theta):
        theta = self.check_theta(theta)
        return self._density_unchecked(self.check_x(x), theta)

    def score(self, x, theta):
        theta = self.check_theta(theta)
        return self._score_unchecked(self.check_x(x), theta)

    def _draw(self, theta, rng, size):
        return theta + self._sampler0(rng, size)

    def breakpoints(self, theta):
        return tuple(theta + k for k in self._kinks)

    def score_abs_moment(self, p, theta):
        return None if self._score_moment is None else self._score_moment(p)

    def score_moment_finite(self, p):
        return p < self._max_score_moment


class ScaleFamily(ParametricFamily):
    """g(x, theta) = h(x / theta) / theta with theta > 0."""

    kind = SCALE
    param_domain = (0.0, math.inf)

    def __init__(self, name, h, dh, sampler0, support=(0.0, math.inf), kinks=(),
                 score_moment=None, mle_closed_form=None):
        self.name = name
        self._h = h
        self._dh = dh
        self._sampler0 = sampler0
        self.support = support
        self._kinks = tuple(kinks)
        self._score_moment = score_moment
        self.mle_closed_form = mle_closed_form

    def base_density(self, y):
        return self._h(np.asarray(y, dtype=float))

    def base_density_deriv(self, y):
        return self._dh(np.asarray(y, dtype=float))

    def _density_unchecked(self, x, theta):
        return self._h(np.asarray(x, dtype=float) / theta) / theta

    def _score_unchecked(self, x, theta):
        # d/dtheta log(h(x/theta)/theta) = -(1/theta) (1 + y h'(y)/h(y)), y = x/theta
        y = np.asarray(x, dtype=float) / theta
        with np.errstate(all="ignore"):
            ratio = self._dh(y) / self._h(y)
        return -(1.0 + y * ratio) / theta

    def density(self, x, theta):
        theta = self.check_theta(theta)
        return self._density_unchecked(self.check_x(x), theta)

    def score(self, x, theta):
        theta = self.check_theta(theta)
        return self._score_unchecked(self.check_x(x), theta)

    def _draw(self, theta, rng, size):
        return theta * self._sampler0(rng, size)

    def breakpoints(self, theta):
        return tuple(theta * k for k in self._kinks)

    def score_abs_moment(self, p, theta):
        return None if self._score_moment is None else self._score_moment(p) / theta ** p


class StableFamily(ParametricFamily):
    """Symmetric stable location family; a sampler only, used as a counterexample."""

    kind = SHIFT

    def __init__(self, alpha: float):
        if not 0 < alpha < 2:
            raise DomainError("stability index must lie in (0, 2)")
        self.alpha = float(alpha)
        self.name = f"symmetric-stable({alpha:g})"

    @property
    def has_score(self):
        return False

    def density(self, x, theta):
        raise UnsupportedScoreError(f"{self.name} has no closed-form density")

    def score(self, x, theta):
        raise UnsupportedScoreError(f"{self.name} has no score function")

    def _draw(self, theta, rng, size):
        return theta + dist.sample_symmetric_stable(rng, self.alpha, size)


# -- built-ins ------------------------------------------------------------------

_SQRT2PI = math.sqrt(2.0 * math.pi)


def gaussian_shift() -> ShiftFamily:
    return ShiftFamily(
        "gaussian-shift",
        g0=lambda u: np.exp(-0.5 * u * u) / _SQRT2PI,
        dlog_g0=lambda u: -u,
        sampler0=lambda rng, size: rng.standard_normal(size),
        score_moment=dist.gaussian_abs_moment,
        mle_closed_form="mean",
    )


def laplace_shift() -> ShiftFamily:
    return ShiftFamily(
        "laplace-shift",
        g0=lambda u: 0.5 * np.exp(-np.abs(u)),
        dlog_g0=lambda u: -np.sign(u),
        sampler0=lambda rng, size: rng.laplace(0.0, 1.0, size),
        kinks=(0.0,),
        score_moment=lambda p: 1.0,
    )


def exponential_scale() -> ScaleFamily:
    return ScaleFamily(
        "exponential-scale",
        h=lambda y: np.where(y >= 0, np.exp(-np.abs(y)), 0.0),
        dh=lambda y: np.where(y >= 0, -np.exp(-np.abs(y)), 0.0),
        sampler0=lambda rng, size: rng.standard_exponential(size),
        kinks=(1.0,),
        score_moment=dist.centered_exponential_abs_moment,
        mle_closed_form="mean",
    )


def weibull_tail(m: float) -> ShiftFamily:
    """Symmetric shift family with P(|X - theta| > x) = exp(-x^m).

    The density vanishes at u = 0 for m > 1, so the score has a
    -(m-1)/u pole there.  It is set to 0 at u = 0, and for 1 < m < 2 on
    |u| < 1e-12 by convention.  The pole makes E|l|^p infinite for p >= m.
    """
    if m < 1:
        raise DomainError("weibull-tail requires m >= 1")
    base = dist.weibull_tail(m)
    cutoff = 1e-12 if 1 < m < 2 else 0.0

    def dlog(u):
        au = np.abs(u)
        with np.errstate(all="ignore"):
            val = (m - 1.0) / u - m * au ** (m - 1.0) * np.sign(u)
        return np.where(au <= cutoff, 0.0, val)

    def score_moment(p):
        # with V = |u|^m ~ Exp(1): |l| = V^(-1/m) |m V - (m - 1)|
        if m == 1:
            return 1.0
        if p >= m:
            return math.inf
        # v = w^(1/a), a = 1 - p/m, absorbs the v^(-p/m) singularity into dv
        a = 1.0 - p / m

        def integrand(w):
            with np.errstate(all="ignore"):
                v = w ** (1.0 / a)
                out = np.abs(m * v - (m - 1.0)) ** p * np.exp(-v) / a
            return np.where(v > 800.0, 0.0, out)

        r = quad(integrand, HalfLine(0.0), breakpoints=(((m - 1.0) / m) ** a,))
        return r.value if r.converged else math.inf

    return ShiftFamily(
        f"weibull-tail({m:g})",
        g0=base.pdf,
        dlog_g0=dlog,
        sampler0=base.sampler,
        kinks=(0.0,),
        score_moment=score_moment,
        # |l|^p g ~ |u|^(m - 1 - p) near u = 0
        max_score_moment=math.inf if m == 1 else m,
    )


def symmetric_stable(alpha: float) -> StableFamily:
    return StableFamily(alpha)


def tabulated_shift_family(name: str, x, log_density) -> ShiftFamily:
    """Shift family from a piecewise-linear log-density table.

    ``x`` is a strictly increasing grid and ``log_density`` the (possibly
    unnormalised) log of g0 at those points.  Between nodes log g0 is linear;
    outside the grid it continues with the end slopes, which must point
    downwards (positive on the left, negative on the right) so g0 is
    integrable.  The table is normalised exactly, and sampling inverts the
    piecewise-exponential CDF in closed form.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(log_density, dtype=float)
    if x.ndim != 1 or x.size < 2 or x.shape != y.shape or np.any(np.diff(x) <= 0):
        raise DomainError("tabulated density needs >= 2 strictly increasing grid points")
    slopes = np.diff(y) / np.diff(x)
    left, right = slopes[0], slopes[-1]
    if not (left > 0 and right < 0):
        raise DomainError("end slopes of the log-density must make the tails integrable")

    # Segment masses: left tail, interior pieces, right tail.
    def seg_mass(a, b, ya, s):
        if abs(s) < 1e-300:
            return math.exp(ya) * (b - a)
        return math.exp(ya) * math.expm1(s * (b - a)) / s

    inner = [seg_mass(x[i], x[i + 1], y[i], slopes[i]) for i in range(x.size - 1)]
    masses = np.array([math.exp(y[0]) / left, *inner, -math.exp(y[-1]) / right])
    log_z = math.log(math.fsum(masses))
    cum = np.concatenate([[0.0], np.cumsum(masses)]) / math.exp(log_z)

    def logg(u):
        u = np.asarray(u, dtype=float)
        inner_val = np.interp(u, x, y)
        out = np.where(u < x[0], y[0] + left * (u - x[0]),
                       np.where(u > x[-1], y[-1] + right * (u - x[-1]), inner_val))
        return out - log_z

    def dlog(u):
        u = np.asarray(u, dtype=float)
        idx = np.clip(np.searchsorted(x, u, side="right") - 1, 0, slopes.size - 1)
        s = slopes[idx]
        return np.where(u < x[0], left, np.where(u >= x[-1], right, s))

    def sampler0(rng, size):
        uu = rng.random(size)
        seg = np.clip(np.searchsorted(cum, uu, side="right") - 1, 0, masses.size - 1)
        frac = (uu - cum[seg]) * math.exp(log_z)  # unnormalised mass into the segment
        out = np.empty(np.shape(uu))
        # left tail: mass from -inf to t is exp(y0 + left (t - x0)) / left
        m = seg == 0
        out[m] = x[0] + np.log(frac[m] * left / math.exp(y[0])) / left
        # right tail
        m = seg == masses.size - 1
        out[m] = x[-1] + np.log1p(frac[m] * right / math.exp(y[-1])) / right
        # interior segments
        m = (seg > 0) & (seg < masses.size - 1)
        i = seg[m] - 1
        s = slopes[i]
        flat = np.abs(s) < 1e-300
        with np.errstate(all="ignore"):
            step = np.where(flat, frac[m] / np.exp(y[i]),
                            np.log1p(frac[m] * s / np.exp(y[i])) / np.where(flat, 1.0, s))
        out[m] = x[i] + step
        return out

    return ShiftFamily(
        name,
        g0=lambda u: np.exp(logg(u)),
        dlog_g0=dlog,
        sampler0=sampler0,
        kinks=tuple(x.tolist()),
    )


_BUILTINS: dict[str, Callable[..., ParametricFamily]] = {
    "gaussian-shift": gaussian_shift,
    "laplace-shift": laplace_shift,
    "exponential-scale": exponential_scale,
    "weibull-tail": weibull_tail,
    "symmetric-stable": symmetric_stable,
}


def get_family(identifier) -> ParametricFamily:
    """Resolve ``gaussian-shift``, ``weibull-tail(4)``, a mapping, or a family."""
    if isinstance(identifier, ParametricFamily):
        return identifier
    if isinstance(identifier, dict):
        spec = dict(identifier)
        if "tabulated" in spec:
            tab = spec["tabulated"]
            return tabulated_shift_family(spec.get("name", "custom"), tab["x"], tab["log_density"])
        return get_family(spec["name"])
    text = str(identifier).strip()
    args: list[float] = []
    if "(" in text:
        text, rest = text.split("(", 1)
        args = [float(a) for a in rest.rstrip(")").split(",") if a.strip()]
    try:
        ctor = _BUILTINS[text.strip()]
    except KeyError:
        raise DomainError(f"unknown family {identifier!r}") from None
    return ctor(*args)


# -- regularity identities ----------------------------------------------------------

ESTIMATORS = {
    "sample-mean": lambda samples: samples.mean(axis=1),
}


@dataclass(frozen=True)
class RegularityReport:
    family: str
    theta: float
    n: int
    reps: int
    score_mean: float
    score_mean_se: float
    cross_moment: float
    cross_moment_se: float

    @property
    def score_mean_ok(self) -> bool:
        return abs(self.score_mean) <= 3 * self.score_mean_se

    @property
    def cross_moment_ok(self) -> bool:
        return abs(self.cross_moment - 1.0) <= 3 * self.cross_moment_se


def check_regularity(family, theta: float, estimator="sample-mean", n: int = 1,
                     reps: int = 100_000, stream=None, workers=None) -> RegularityReport:
    """Monte Carlo check of E l = 0 and E[(theta_hat - theta) sum l] = 1.

    ``estimator`` maps an ``(reps, n)`` array of samples to ``reps``
    estimates; built-in names are in :data:`ESTIMATORS`.
    """
    fam = get_family(family)
    if not fam.has_score:
        raise UnsupportedScoreError(f"{fam.name} has no score function")
    theta = fam.check_theta(theta)
    est = ESTIMATORS[estimator] if isinstance(estimator, str) else estimator
    stream = stream if isinstance(stream, Stream) else Stream(0 if stream is None else int(stream))
    stream = stream.child("regularity", fam.name, theta, n)

    def block(rng, count):
        xs = fam._draw(theta, rng, (count, n))
        scores = fam._score_unchecked(xs, theta)
        total = scores.sum(axis=1)
        return np.column_stack([scores.mean(axis=1), (est(xs) - theta) * total])

    rows = run_blocks(block, reps, stream, block=max(1, min(4096, (1 << 21) // n)), workers=workers)
    score_means, cross = rows[:, 0], rows[:, 1]
    return RegularityReport(
        family=fam.name, theta=theta, n=n, reps=reps,
        score_mean=math.fsum(score_means) / reps,
        score_mean_se=float(score_means.std(ddof=1) / math.sqrt(reps)),
        cross_moment=math.fsum(cross) / reps,
        cross_moment_se=float(cross.std(ddof=1) / math.sqrt(reps)),
    )
