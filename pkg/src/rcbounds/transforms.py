"""Generating functions psi (Grand Lebesgue) and phi (exponential Orlicz).

Also the function-level constructions built on them: the Young-Fenchel
conjugate, the CLT majorant ``phi_bar(lam) = sup_n n phi(lam / sqrt(n))``,
``psi_R = R(p) psi(p)``, the natural functions of a parametric family and
the Orlicz-to-Grand-Lebesgue map ``psi_phi(p) = p / phi^{-1}(p)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np

from .distributions import domain_for
from .errors import DomainError, NonConvergenceError, UnsupportedError, UnsupportedScoreError
from .families import SCALE, SHIFT, get_family
from .quadrature import QuadratureResult, quad

ANALYTIC, GRID, NATURAL = "analytic", "grid", "natural"


# -- psi ------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PsiFunction:
    """Positive continuous generating function on [support_A, support_B)."""

    func: Callable[[float], float]
    support_B: float = math.inf
    support_A: float = 1.0
    form: str = ANALYTIC
    label: str = "psi"

    def __post_init__(self):
        if not (1.0 <= self.support_A < self.support_B):
            raise DomainError("psi support must satisfy 1 <= A < B")

    def __call__(self, p):
        if np.ndim(p):
            return np.array([self(float(v)) for v in np.ravel(p)]).reshape(np.shape(p))
        p = float(p)
        if p < self.support_A or p > self.support_B:
            raise DomainError(f"p={p} outside support [{self.support_A}, {self.support_B}] of {self.label}")
        return float(self.func(p))

    def validate(self, grid: Sequence[float]) -> None:
        """Positivity and a positive infimum on ``grid``."""
        vals = self(np.asarray(grid, dtype=float))
        if not np.all(np.isfinite(vals)) or np.min(vals) <= 0:
            raise DomainError(f"{self.label} is not positive and finite on the grid")

    def __repr__(self):
        return f"PsiFunction({self.label}, support=[{self.support_A}, {self.support_B}))"


def psi_m(m: float) -> PsiFunction:
    """p -> p^(1/m) on [1, inf)."""
    if not m > 0:
        raise DomainError("psi_m needs m > 0")
    return PsiFunction(lambda p: p ** (1.0 / m), label=f"psi_m({m:g})")


def psi_constant(c: float = 1.0, B: float = math.inf, A: float = 1.0) -> PsiFunction:
    if not c > 0:
        raise DomainError("constant psi must be positive")
    return PsiFunction(lambda p: c, support_B=B, support_A=A, label=f"const({c:g})")


def psi_from_grid(p_points, values, label: str = "grid") -> PsiFunction:
    """Tabulated psi, interpolated linearly in (log p, log psi)."""
    p = np.asarray(p_points, dtype=float)
    v = np.asarray(values, dtype=float)
    if p.ndim != 1 or p.size < 2 or p.shape != v.shape or np.any(np.diff(p) <= 0) or np.any(v <= 0):
        raise DomainError("psi grid needs >= 2 increasing p values with positive psi values")
    lp, lv = np.log(p), np.log(v)
    return PsiFunction(lambda x: float(np.exp(np.interp(math.log(x), lp, lv))),
                       support_B=float(p[-1]), support_A=float(max(1.0, p[0])), form=GRID, label=label)


def psi_R(psi: PsiFunction) -> PsiFunction:
    """p -> R(p) psi(p), the Rosenthal-inflated generating function."""
    from .bounds import rosenthal_bound

    return PsiFunction(lambda p: rosenthal_bound(p) * psi(p), support_B=psi.support_B,
                       support_A=max(2.0, psi.support_A), form=psi.form, label=f"R*{psi.label}")


# -- phi ------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PhiFunction:
    """Generating function on (-lambda0, lambda0); +inf outside.

    ``second_deriv_at_0`` is phi''(0); membership of the class used for
    B(phi) spaces additionally needs it to be strictly positive, see
    :attr:`in_class_phi`.
    """

    func: Callable[[np.ndarray], np.ndarray]
    lambda0: float = math.inf
    second_deriv_at_0: float = 1.0
    form: str = ANALYTIC
    label: str = "phi"
    info: dict = field(default_factory=dict)

    def __call__(self, lam):
        arr = np.asarray(lam, dtype=float)
        with np.errstate(all="ignore"):
            out = np.asarray(self.func(arr), dtype=float)
        if math.isfinite(self.lambda0):
            out = np.where(np.abs(arr) < self.lambda0, out, math.inf)
        return float(out) if np.ndim(out) == 0 else out

    @property
    def in_class_phi(self) -> bool:
        return 0 < self.second_deriv_at_0 < math.inf

    def __repr__(self):
        return f"PhiFunction({self.label}, lambda0={self.lambda0})"


def _second_derivative_at_zero(func, h: float) -> float:
    return float((func(np.float64(h)) + func(np.float64(-h)) - 2.0 * func(np.float64(0.0))) / (h * h))


def check_phi(func, lambda0: float = math.inf, probe: Optional[Sequence[float]] = None) -> float:
    """Validate evenness, phi(0) = 0, discrete convexity and finite phi''(0).

    Returns the finite-difference estimate of phi''(0).
    """
    top = 10.0 if math.isinf(lambda0) else 0.9 * lambda0
    grid = np.linspace(-top, top, 401) if probe is None else np.asarray(probe, dtype=float)
    vals = np.asarray(func(grid), dtype=float)
    if abs(float(func(np.float64(0.0)))) > 1e-14:
        raise DomainError("phi(0) must be 0")
    if not np.allclose(vals, np.asarray(func(-grid), dtype=float), rtol=1e-12, atol=1e-14):
        raise DomainError("phi must be even")
    mid = 0.5 * (vals[:-2] + vals[2:]) - vals[1:-1]
    if np.any(mid < -1e-10 * np.maximum(1.0, np.abs(vals[1:-1]))):
        raise DomainError("phi must be convex")
    coarse = _second_derivative_at_zero(func, 1e-3)
    fine = _second_derivative_at_zero(func, 1e-5)
    if not math.isfinite(fine) or (fine > 1.0 and fine > 3.0 * max(coarse, 1e-300)):
        raise DomainError("phi''(0) must be finite")
    return fine


def phi_2() -> PhiFunction:
    """lam -> lam^2 / 2, the subgaussian generating function."""
    return PhiFunction(lambda l: 0.5 * l * l, second_deriv_at_0=1.0, label="phi_2")


def phi_power(Q: float) -> PhiFunction:
    """lam -> |lam|^Q for Q >= 2.

    Q < 2 is rejected because phi''(0) is infinite.  Q > 2 is accepted with
    phi''(0) = 0, which falls outside the strict class (``in_class_phi`` is
    False) but is needed for conjugation and CLT-majorant computations.
    """
    if Q < 2:
        raise DomainError(f"power({Q}) has infinite phi''(0)")
    d2 = 2.0 if Q == 2 else 0.0
    return PhiFunction(lambda l: np.abs(l) ** Q, second_deriv_at_0=d2, label=f"power({Q:g})")


def phi_analytic(func, label: str = "phi", lambda0: float = math.inf) -> PhiFunction:
    d2 = check_phi(func, lambda0)
    return PhiFunction(func, lambda0=lambda0, second_deriv_at_0=d2, label=label)


def phi_from_grid(lam_points, values, label: str = "grid") -> PhiFunction:
    """Tabulated phi on lam >= 0, extended evenly, with no class checks.

    Between nodes the table is interpolated linearly; between 0 and the first
    node the local power law of the first two nodes is continued, so a table
    of |lam|^Q keeps its behaviour near the origin.  Beyond the last node the
    last slope is continued.
    """
    x = np.asarray(lam_points, dtype=float)
    y = np.asarray(values, dtype=float)
    if x.ndim != 1 or x.size < 2 or x.shape != y.shape or np.any(np.diff(x) <= 0) or x[0] <= 0:
        raise DomainError("phi grid needs >= 2 increasing positive lambda values")
    expo = math.log(y[1] / y[0]) / math.log(x[1] / x[0]) if y[0] > 0 and y[1] > 0 else 1.0
    slope_end = (y[-1] - y[-2]) / (x[-1] - x[-2])

    def func(lam):
        a = np.abs(np.asarray(lam, dtype=float))
        inner = np.interp(a, x, y)
        low = y[0] * (a / x[0]) ** expo
        high = y[-1] + slope_end * (a - x[-1])
        return np.where(a < x[0], low, np.where(a > x[-1], high, inner))

    d2 = _second_derivative_at_zero(func, 1e-5)
    return PhiFunction(func, second_deriv_at_0=d2, form=GRID, label=label)


# -- Young-Fenchel ----------------------------------------------------------------

@dataclass
class ConjugateResult:
    u: np.ndarray
    values: np.ndarray
    argmax: np.ndarray
    boundary: np.ndarray  # True where the sup sits at the search boundary
    function: PhiFunction

    def is_convex(self, tol: float = 1e-9) -> bool:
        u, v = self.u, self.values
        if u.size < 3:
            return True
        # second divided differences on a possibly non-uniform grid
        d1 = np.diff(v) / np.diff(u)
        return bool(np.all(np.diff(d1) >= -tol * np.maximum(1.0, np.abs(v[1:-1]))))


_SEARCH_MAX = 1e8


def _sup_linear_minus(phi, u: np.ndarray, lambda0: float, tol: float = 1e-15):
    """Vectorised ternary search for sup_lam (lam u - phi(lam)).

    For even convex phi the maximiser has the sign of u, so the search runs on
    [0, L] scaled by sign(u).  L is doubled until the objective decreases, or
    capped at lambda0 / the search limit (then flagged as boundary).
    """
    u = np.asarray(u, dtype=float)
    s = np.where(u < 0, -1.0, 1.0)
    au = np.abs(u)
    cap = min(lambda0 * (1 - 1e-12), _SEARCH_MAX) if math.isfinite(lambda0) else _SEARCH_MAX

    def obj(lam):
        return lam * au - np.asarray(phi(s * lam), dtype=float)

    L = np.minimum(np.ones_like(au), cap)
    hit_cap = np.zeros(au.shape, dtype=bool)
    for _ in range(200):
        grow = (obj(np.minimum(2 * L, cap)) >= obj(L)) & ~hit_cap
        if not grow.any():
            break
        newL = np.minimum(2 * L, cap)
        hit_cap |= grow & (newL >= cap)
        L = np.where(grow, newL, L)
    lo = np.zeros_like(au)
    hi = np.where(hit_cap, L, np.minimum(2 * L, cap))
    for _ in range(400):
        if np.all(hi - lo <= tol * np.maximum(1.0, hi)):
            break
        m1 = lo + (hi - lo) / 3
        m2 = hi - (hi - lo) / 3
        left = obj(m1) < obj(m2)
        lo = np.where(left, m1, lo)
        hi = np.where(left, hi, m2)
    lam = 0.5 * (lo + hi)
    val = obj(lam)
    boundary = hit_cap & (cap - lam <= 1e-6 * max(1.0, cap))
    return val, s * lam, boundary


def young_fenchel(phi, u_grid) -> ConjugateResult:
    """Convex conjugate phi*(u) = sup_lam (lam u - phi(lam)) on ``u_grid``."""
    lambda0 = getattr(phi, "lambda0", math.inf)
    u = np.asarray(u_grid, dtype=float)
    vals, arg, boundary = _sup_linear_minus(phi, u, lambda0)

    def conj(x):
        return _sup_linear_minus(phi, np.atleast_1d(np.asarray(x, dtype=float)), lambda0)[0].reshape(np.shape(x))

    d2 = getattr(phi, "second_deriv_at_0", 1.0)
    label = getattr(phi, "label", "phi")
    fn = PhiFunction(conj, second_deriv_at_0=(1.0 / d2) if d2 else math.inf, label=f"conj({label})")
    return ConjugateResult(u, vals, arg, boundary, fn)


# -- CLT majorant -------------------------------------------------------------------

@dataclass(frozen=True)
class PhiBarPoint:
    value: float
    argmax_n: int
    diverged: bool


def phi_bar_point(phi, lam: float, n_max: int = 2 ** 20, rel_tol: float = 1e-12,
                  stable_doublings: int = 8) -> PhiBarPoint:
    """max over integers n of n phi(lam / sqrt(n)).

    n runs through 1..16 and then doubles.  A candidate only replaces the
    running max when it exceeds it by more than ``rel_tol`` (relative), so
    values equal up to rounding do not count as growth.  The search stops
    once the max has been stable for ``stable_doublings`` doublings, or at
    ``n_max``; reaching ``n_max`` while still growing flags divergence.
    """
    best = float(phi(lam))
    arg = 1
    if lam == 0:
        return PhiBarPoint(best, 1, False)
    stable = 0
    grew_last = False
    n = 1
    while n < n_max:
        n = n + 1 if n < 16 else min(2 * n, n_max)
        cand = n * float(phi(lam / math.sqrt(n)))
        grew_last = cand > best + rel_tol * abs(best)
        if grew_last:
            best, arg = cand, n
            stable = 0
        elif n >= 16:
            stable += 1
            if stable >= stable_doublings:
                break
    return PhiBarPoint(best, arg, grew_last and n >= n_max)


def phi_bar(phi, n_max: int = 2 ** 20) -> PhiFunction:
    """The CLT majorant of ``phi`` as a generating function.

    Points where the sequence n phi(lam / sqrt n) is still growing at
    ``n_max`` evaluate to +inf.
    """
    def func(lam):
        arr = np.asarray(lam, dtype=float)
        out = np.empty(arr.shape)
        for idx, l in np.ndenumerate(arr):
            pt = phi_bar_point(phi, float(l), n_max)
            out[idx] = math.inf if pt.diverged else pt.value
        return out if arr.ndim else float(out)

    return PhiFunction(func, lambda0=getattr(phi, "lambda0", math.inf),
                       second_deriv_at_0=getattr(phi, "second_deriv_at_0", 1.0),
                       form=getattr(phi, "form", ANALYTIC), label=f"bar({getattr(phi, 'label', 'phi')})")


def phi_bar_table(phi, lam_grid, n_max: int = 2 ** 20) -> list[PhiBarPoint]:
    return [phi_bar_point(phi, float(l), n_max) for l in np.asarray(lam_grid, dtype=float)]


# -- psi from phi ------------------------------------------------------------------

def inverse_phi(phi, y: float) -> float:
    """Solve phi(lam) = y for lam >= 0 by bisection."""
    if y < 0:
        raise DomainError("phi^{-1} needs a nonnegative argument")
    if y == 0:
        return 0.0
    lo, hi = 0.0, 1.0
    while float(phi(hi)) < y:
        lo, hi = hi, 2 * hi
        if hi > 1e300:
            raise NonConvergenceError("phi does not reach the requested level")
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if float(phi(mid)) < y:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def psi_from_phi(phi: PhiFunction) -> PsiFunction:
    """p -> p / phi^{-1}(p), the Grand Lebesgue function equivalent to B(phi)."""
    if math.isfinite(phi.lambda0):
        raise UnsupportedError("psi_phi needs lambda0 = inf")
    grid = np.linspace(0.0, 50.0, 201)
    if np.any(np.diff(np.asarray(phi(grid), dtype=float)) <= 0):
        raise DomainError("phi must be strictly increasing on [0, inf)")
    return PsiFunction(lambda p: p / inverse_phi(phi, p), label=f"psi[{phi.label}]")


# -- natural functions --------------------------------------------------------------

def score_power_integral(family, theta: float, p: float, reduce_shift: bool = True, **quad_kwargs):
    """int |g'_theta|^p g^(1-p) dx, evaluated as int |l|^p g dx.

    For shift families the integral is theta-free and, with ``reduce_shift``,
    is taken in u = x - theta, where a kink or score pole sits exactly at
    u = 0 instead of at a rounded abscissa.
    """
    fam = get_family(family)
    theta = fam.check_theta(theta)
    if not fam.score_moment_finite(p):
        return QuadratureResult(math.inf, math.inf, False, 0)
    if reduce_shift and fam.kind == SHIFT:
        def integrand(u):
            dens = fam.base_density(u)
            with np.errstate(all="ignore"):
                out = np.abs(fam.base_dlog(u)) ** p * dens
            return np.where(dens == 0.0, 0.0, out)

        return quad(integrand, domain_for(fam.support), breakpoints=fam.breakpoints(0.0), **quad_kwargs)

    def integrand(x):
        dens = fam._density_unchecked(x, theta)
        with np.errstate(all="ignore"):
            out = np.abs(fam._score_unchecked(x, theta)) ** p * dens
        return np.where(dens == 0.0, 0.0, out)

    return quad(integrand, domain_for(fam.support), breakpoints=fam.breakpoints(theta), **quad_kwargs)


def scale_reduced_integral(family, p: float, **quad_kwargs):
    """int |h(y) + y h'(y)|^p h(y)^(1-p) dy for a scale family, as |1 + y h'/h|^p h."""
    fam = get_family(family)
    if fam.kind != SCALE:
        raise DomainError("reduced scale integral needs a scale family")

    def integrand(y):
        h = fam.base_density(y)
        with np.errstate(all="ignore"):
            out = np.abs(1.0 + y * fam.base_density_deriv(y) / h) ** p * h
        return np.where(h == 0.0, 0.0, out)

    return quad(integrand, domain_for(fam.support), breakpoints=fam.breakpoints(1.0), **quad_kwargs)


def _root(r, p):
    if not r.converged or not math.isfinite(r.value):
        return math.inf
    return r.value ** (1.0 / p)


def natural_psi_direct(family, theta: float, p: float) -> float:
    """[int |g'_theta|^p g^(1-p) dx]^(1/p) at one theta, always in x; +inf when divergent."""
    return _root(score_power_integral(family, theta, p, reduce_shift=False), p)


def natural_psi(family, theta_grid: Optional[Sequence[float]] = None) -> PsiFunction:
    """Natural generating function of the score family {l(X, theta)}.

    Shift families: the integral does not depend on theta, one evaluation.
    Scale families: theta^-1 [int |h + y h'|^p h^(1-p) dy]^(1/p), so the sup
    over the grid sits at its left end.  Other kinds: sup over the grid.
    """
    fam = get_family(family)
    if not fam.has_score:
        raise UnsupportedScoreError(f"{fam.name} has no score function")
    if fam.kind == SHIFT:
        thetas = [float(theta_grid[0])] if theta_grid is not None and len(theta_grid) else [0.0]
    else:
        if theta_grid is None or not len(theta_grid):
            raise DomainError(f"natural_psi for a {fam.kind} family needs a theta grid")
        thetas = sorted(float(t) for t in theta_grid)
    for t in thetas:
        fam.check_theta(t)

    @lru_cache(maxsize=None)
    def value(p: float) -> float:
        if fam.kind == SHIFT:
            return _root(score_power_integral(fam, thetas[0], p), p)
        if fam.kind == SCALE:
            return _root(scale_reduced_integral(fam, p), p) / thetas[0]
        return max(natural_psi_direct(fam, t, p) for t in thetas)

    def func(p):
        v = value(float(p))
        if not math.isfinite(v):
            raise DomainError(f"natural function of {fam.name} is infinite at p={p}")
        return v

    # natural function must be finite somewhere above 2
    probe = [2.0, 2.5, 3.0, 4.0]
    if all(not math.isfinite(value(p)) for p in probe):
        raise DomainError(f"natural function of {fam.name} is undefined (all moments diverge)")
    psi = PsiFunction(func, form=NATURAL, label=f"natural_psi({fam.name})")
    object.__setattr__(psi, "thetas", tuple(thetas))
    return psi


def natural_phi(family, theta_grid: Optional[Sequence[float]] = None,
                lambda_grid: Optional[Sequence[float]] = None) -> PhiFunction:
    """phi_0(lam) = sup_theta log E exp(lam l(X, theta)).

    The largest |lam| on ``lambda_grid`` below the first divergent mgf value
    (on either side) fixes the reported truncation ``lambda0``.
    """
    fam = get_family(family)
    if not fam.has_score:
        raise UnsupportedScoreError(f"{fam.name} has no score function")
    if fam.kind == SHIFT:
        thetas = [float(theta_grid[0])] if theta_grid is not None and len(theta_grid) else [0.0]
    else:
        if theta_grid is None or not len(theta_grid):
            raise DomainError(f"natural_phi for a {fam.kind} family needs a theta grid")
        thetas = sorted(float(t) for t in theta_grid)
        if fam.kind == SCALE:
            thetas = thetas[:1]
    variables = [fam.score_variable(t) for t in thetas]

    @lru_cache(maxsize=None)
    def value(lam: float) -> float:
        return max(v.log_mgf(lam) for v in variables)

    from .norms import default_lambda_grid

    grid = np.asarray(default_lambda_grid() if lambda_grid is None else lambda_grid, dtype=float)
    lambda0 = math.inf
    for sign in (1.0, -1.0):
        for a in np.sort(np.abs(grid[sign * grid > 0])):
            if not math.isfinite(value(float(sign * a))):
                lambda0 = min(lambda0, float(a))
                break
    table = {float(l): value(float(l)) for l in grid if abs(l) < lambda0}

    def func(lam):
        arr = np.asarray(lam, dtype=float)
        out = np.array([value(float(l)) for l in arr.ravel()]).reshape(arr.shape)
        return out if arr.ndim else float(out)

    d2 = 2.0 * value(1e-4) / 1e-8 if math.isfinite(value(1e-4)) else math.inf
    return PhiFunction(func, lambda0=lambda0, second_deriv_at_0=d2, form=NATURAL,
                       label=f"natural_phi({fam.name})",
                       info={"thetas": thetas, "table": table, "truncated_lambda0": lambda0})


# -- named forms ----------------------------------------------------------------------

def parse_psi(spec) -> PsiFunction:
    """``psi_m(2)``, ``const(1)``, ``const(1,8)`` (B=8), ``natural(<family>)``,
    or a mapping ``{"p": [...], "values": [...]}``."""
    if isinstance(spec, PsiFunction):
        return spec
    if isinstance(spec, dict):
        return psi_from_grid(spec["p"], spec["values"], label=spec.get("label", "grid"))
    text = str(spec).strip()
    name, _, rest = text.partition("(")
    inner = rest[:-1] if rest.endswith(")") else rest
    if name == "natural":
        return natural_psi(inner)
    args = [float(a) for a in inner.split(",") if a.strip()]
    if name == "psi_m" and len(args) == 1:
        return psi_m(args[0])
    if name == "const" and 1 <= len(args) <= 2:
        return psi_constant(args[0], B=args[1] if len(args) == 2 else math.inf)
    raise DomainError(f"cannot parse psi specification {spec!r}")


def parse_phi(spec) -> PhiFunction:
    """``phi_2``, ``power(Q)``, ``natural(<family>)`` or ``{"lambda": [...], "values": [...]}``."""
    if isinstance(spec, PhiFunction):
        return spec
    if isinstance(spec, dict):
        return phi_from_grid(spec["lambda"], spec["values"], label=spec.get("label", "grid"))
    text = str(spec).strip()
    if text == "phi_2":
        return phi_2()
    name, _, rest = text.partition("(")
    inner = rest[:-1] if rest.endswith(")") else rest
    if name == "power":
        return phi_power(float(inner))
    if name == "natural":
        return natural_phi(inner)
    raise DomainError(f"cannot parse phi specification {spec!r}")
