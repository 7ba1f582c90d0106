"""Rearrangement-invariant norms of random variables.

Every evaluator accepts either an analytic :class:`RandomVariable` (moments by
quadrature or closed form) or an empirical sample (plain array or
:class:`EmpiricalSample`).  Infinite norms are reported through
``NormValue.infinite``; the ``value`` field is then ``None``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

import numpy as np
from scipy import optimize

from .distributions import (
    ContinuousRV,
    DiscreteRV,
    EmpiricalSample,
    RandomVariable,
    StableRV,
)
from .errors import DomainError, PreconditionError

LP, GLS, BPHI, LORENTZ = "Lp", "GLS", "Bphi", "Lorentz"

# Empirical mgf is only trusted while |lambda| * max|value| stays below this.
MGF_EXPONENT_CAP = 40.0


def default_p_grid(B: float = math.inf, start: float = 2.0, points: int = 64) -> np.ndarray:
    """Geometric grid of ``points`` values on [start, min(B, 64)].

    The cap keeps moments such as Gamma(p + 1) inside double range.
    """
    stop = min(B, 64.0)
    if stop <= start:
        raise DomainError(f"empty p-grid: start={start} >= end={stop}")
    return np.geomspace(start, stop, points)


def default_lambda_grid(lo: float = 1e-3, hi: float = 10.0, points: int = 64) -> np.ndarray:
    """Symmetric geometric grid, ``points // 2`` values on each side of zero."""
    half = np.geomspace(lo, hi, points // 2)
    return np.concatenate([-half[::-1], half])


@dataclass(frozen=True)
class NormValue:
    value: Optional[float]
    infinite: bool = False
    arg: Optional[float] = None  # maximising p, binding lambda, or maximising x
    diagnostics: dict = field(default_factory=dict)

    @property
    def finite(self) -> bool:
        return not self.infinite

    def __float__(self):
        return math.inf if self.infinite else float(self.value)

    def to_dict(self) -> dict:
        return {"value": self.value, "infinite": self.infinite, "arg": self.arg, **self.diagnostics}


def _inf(**diag) -> NormValue:
    return NormValue(None, True, diag.pop("arg", None), diag)


def _values(x) -> np.ndarray:
    if isinstance(x, EmpiricalSample):
        return x.values
    return np.asarray(x, dtype=float)


def is_analytic(x) -> bool:
    return isinstance(x, RandomVariable)


# -- L_p ------------------------------------------------------------------------

def empirical_abs_power_mean(values: np.ndarray, p: float) -> float:
    return math.fsum(np.abs(values) ** p) / values.size


def lp_norm(x, p: float, method: str = "auto") -> NormValue:
    """(E|X|^p)^(1/p); empirical input uses the plug-in mean of |values|^p."""
    if not p >= 1:
        raise DomainError(f"L_p norm needs p >= 1, got {p}")
    if is_analytic(x):
        r = x.abs_moment(p, method=method)
        if not r.converged or not math.isfinite(r.value):
            return _inf(arg=p, reason="moment integral diverges")
        return NormValue(r.value ** (1.0 / p), arg=p, diagnostics={"error_estimate": r.error_estimate})
    v = _values(x)
    return NormValue(empirical_abs_power_mean(v, p) ** (1.0 / p), arg=p)


def lp_norm_se(values, p: float) -> float:
    """Delta-method standard error of the empirical L_p norm."""
    v = np.abs(_values(values)) ** p
    m = v.mean()
    if m == 0:
        return 0.0
    return float((m ** (1.0 / p)) / p * v.std(ddof=1) / (m * math.sqrt(v.size)))


def lp_norm_jackknife(values, p: float) -> tuple[float, float]:
    """Empirical L_p norm with its leave-one-out jackknife standard error."""
    a = np.abs(_values(values)) ** p
    n = a.size
    total = math.fsum(a)
    est = (total / n) ** (1.0 / p)
    loo = ((total - a) / (n - 1)) ** (1.0 / p)
    se = math.sqrt((n - 1) / n * float(np.sum((loo - loo.mean()) ** 2)))
    return est, se


# -- moment curves and Grand Lebesgue norms --------------------------------------

@dataclass(frozen=True)
class MomentCurve:
    p_grid: np.ndarray
    moment_norms: np.ndarray  # +inf marks a divergent moment
    source: str  # "analytic" or "empirical(N)"
    # effective sample size of |x|^p per grid point; None for analytic curves
    ess: Optional[np.ndarray] = None

    def is_monotone(self, tol: float = 1e-10) -> bool:
        m = self.moment_norms
        finite = m[np.isfinite(m)]
        return bool(np.all(np.diff(finite) >= -tol * np.maximum(1.0, finite[1:])))


def moment_curve(x, p_grid: Sequence[float], method: str = "auto") -> MomentCurve:
    grid = np.asarray(p_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or np.any(np.diff(grid) <= 0):
        raise DomainError("p-grid must be a nonempty increasing sequence")
    norms = np.array([float(lp_norm(x, p, method=method)) for p in grid])
    if is_analytic(x):
        return MomentCurve(grid, norms, "analytic")
    v = _values(x)
    return MomentCurve(grid, norms, f"empirical({v.size})", np.array([effective_sample_size(v, p) for p in grid]))


def effective_sample_size(values, p: float) -> float:
    """(sum w)^2 / sum w^2 for w = |x|^p, computed in log space.

    Small values mean a handful of extremes carry the empirical p-th moment.
    """
    a = np.abs(_values(values))
    a = a[a > 0]
    if a.size == 0:
        return float(np.asarray(values).size)
    lw = p * np.log(a)
    lw -= lw.max()
    w = np.exp(lw)
    return float(w.sum() ** 2 / np.sum(w * w))


def min_resolved_ess(n: int) -> float:
    return min(100.0, 0.1 * n)


def _check_grid_in_support(grid: np.ndarray, psi) -> None:
    lo = getattr(psi, "support_A", 1.0)
    hi = getattr(psi, "support_B", math.inf)
    if grid[0] < lo or grid[-1] > hi:
        raise DomainError(f"p-grid [{grid[0]}, {grid[-1]}] leaves the support [{lo}, {hi}] of psi")


def gls_norm(curve: MomentCurve, psi, ceiling: float = 1e3) -> NormValue:
    """sup over the grid of |X|_p / psi(p).

    With an unbounded psi support, an empirical curve whose ratio is still
    rising at the last grid point and already exceeds ``ceiling`` is reported
    as infinite: the sample is exhibiting moments that do not exist.
    """
    grid = curve.p_grid
    _check_grid_in_support(grid, psi)
    psi_vals = np.asarray([psi(p) for p in grid], dtype=float)
    if np.any(psi_vals <= 0) or not np.all(np.isfinite(psi_vals)):
        raise DomainError("psi must be positive and finite on the grid")
    ratio = curve.moment_norms / psi_vals
    if not np.all(np.isfinite(ratio)):
        bad = float(grid[~np.isfinite(ratio)][0])
        return _inf(arg=bad, reason="moment diverges on the grid")
    k = int(np.argmax(ratio))
    diag = {"ratio_at_end": float(ratio[-1])}
    if curve.ess is not None:
        n = int(curve.source[len("empirical("):-1])
        resolved = curve.ess >= min_resolved_ess(n)
        diag["resolved_p_max"] = float(grid[resolved][-1]) if resolved.any() else None
        if not resolved[k]:
            # the sup sits where a few extremes carry the moment estimate
            return _inf(arg=float(grid[k]), reason="ratio maximal beyond the resolved part of the grid", **diag)
    rising = ratio.size > 1 and ratio[-1] > ratio[-2]
    if math.isinf(getattr(psi, "support_B", math.inf)) and rising and ratio[-1] > ceiling:
        return _inf(arg=float(grid[-1]), reason="ratio still increasing above ceiling", **diag)
    return NormValue(float(ratio[k]), arg=float(grid[k]), diagnostics=diag)


# -- exponential Orlicz B(phi) ------------------------------------------------------

def _log_mgf_table(x, lam_grid: np.ndarray, center_tol: Optional[float]):
    """Return (lambdas, log mgf values, truncated lambdas)."""
    if is_analytic(x):
        if isinstance(x, StableRV):
            raise PreconditionError("stable variables have no moment generating function")
        mean = x.mean()
        second = x.abs_moment(2.0).value
        spread = math.sqrt(second) if math.isfinite(second) else 1.0
        tol = 1e-8 * spread if center_tol is None else center_tol
        if abs(mean) > tol:
            raise PreconditionError(f"B(phi) norm needs a centered variable (mean={mean})")
        vals = np.array([x.log_mgf(float(l)) for l in lam_grid])
        return lam_grid, vals, np.array([])
    v = _values(x)
    n = v.size
    mean = math.fsum(v) / n
    sd = float(v.std(ddof=1)) if n > 1 else 0.0
    tol = 5.0 * sd / math.sqrt(n) if center_tol is None else center_tol
    if abs(mean) > tol and sd > 0:
        raise PreconditionError(f"B(phi) norm needs a centered sample (mean={mean}, tol={tol})")
    # the plug-in law must itself be centered, otherwise lam * mean dominates
    # the log mgf for small lam
    v = v - mean
    vmax = float(np.abs(v).max())
    keep = np.abs(lam_grid) * vmax <= MGF_EXPONENT_CAP
    lams = lam_grid[keep]
    vals = np.array([math.log1p(math.fsum(np.expm1(l * v)) / n) for l in lams])
    return lams, vals, lam_grid[~keep]


def bphi_norm(x, phi, lam_grid: Optional[Sequence[float]] = None, ceiling: float = 1e6,
              center_tol: Optional[float] = None, rel_tol: float = 1e-13) -> NormValue:
    """inf{tau > 0 : log E exp(lam X) <= phi(lam tau) for every lam on the grid}.

    Solved by bisection on tau; the condition is monotone in tau because phi
    is even and nondecreasing on [0, inf).
    """
    grid = default_lambda_grid() if lam_grid is None else np.asarray(lam_grid, dtype=float)
    lams, logm, truncated = _log_mgf_table(x, grid, center_tol)
    diag = {"truncated_lambdas": truncated.tolist()} if truncated.size else {}
    if lams.size == 0:
        raise DomainError("no lambda grid point survives the overflow truncation")
    if not np.all(np.isfinite(logm)):
        bad = float(lams[~np.isfinite(logm)][0])
        return _inf(arg=bad, reason="moment generating function diverges", **diag)

    def feasible(tau):
        return bool(np.all(logm <= phi(lams * tau)))

    if feasible(0.0):
        return NormValue(0.0, arg=None, diagnostics=diag)
    lo, hi = 0.0, 1.0
    while not feasible(hi):
        lo, hi = hi, 2.0 * hi
        if hi > ceiling:
            return _inf(reason="no tau below ceiling satisfies the mgf bound", **diag)
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    slack = logm - phi(lams * lo)
    binding = float(lams[int(np.argmax(slack))])
    return NormValue(hi, arg=binding, diagnostics=diag)


# -- Lorentz ------------------------------------------------------------------------

def _tail_breakpoints(x) -> list[float]:
    pts = set()
    if isinstance(x, ContinuousRV):
        s = abs(x.scale)
        for b in (*x.support, *x.breakpoints):
            if math.isfinite(b):
                pts.add(abs(b) * s)
    return sorted(p for p in pts if p > 0)


def _empirical_lorentz(sorted_abs: np.ndarray, p: float, q: float) -> float:
    n = sorted_abs.size
    counts = np.arange(n, 0, -1, dtype=float)  # #{|v| >= a_k} for k = 1..n
    if math.isinf(q):
        return float(np.max(sorted_abs * (counts / n) ** (1.0 / p)))
    r = q / p
    # sum by parts over the steps: sum_k a_k^q ((n-k+1)^r - (n-k)^r) / n^r
    weights = counts ** r - (counts - 1.0) ** r
    return (math.fsum(sorted_abs ** q * weights) / float(n) ** r) ** (1.0 / q)


def lorentz_quasinorm(x, p: float, q: float) -> NormValue:
    """Lorentz quasinorm built from the tail function P(|X| >= x).

    finite q:  ( int_0^inf P(|X| >= x)^(q/p) d(x^q) )^(1/q)
    q = inf:   sup_x x P(|X| >= x)^(1/p)
    """
    if not (p >= 1 and q >= 1):
        raise DomainError("Lorentz quasinorm needs p, q >= 1")
    if isinstance(x, DiscreteRV):
        atoms = np.abs(np.asarray(x.atoms, dtype=float))
        probs = np.asarray(x.probs, dtype=float)
        order = np.argsort(atoms)
        a, w = atoms[order], probs[order]
        tail = np.cumsum(w[::-1])[::-1]  # P(|X| >= a_k)
        if math.isinf(q):
            k = int(np.argmax(a * tail ** (1.0 / p)))
            return NormValue(float(a[k] * tail[k] ** (1.0 / p)), arg=float(a[k]))
        prev = np.concatenate([[0.0], a[:-1]])
        val = math.fsum(tail ** (q / p) * (a ** q - prev ** q))
        return NormValue(val ** (1.0 / q))
    if is_analytic(x):
        return _analytic_lorentz(x, p, q)
    srt = x.sorted_abs if isinstance(x, EmpiricalSample) else np.sort(np.abs(_values(x)))
    if math.isinf(q):
        n = srt.size
        k = int(np.argmax(srt * (np.arange(n, 0, -1) / n) ** (1.0 / p)))
        return NormValue(_empirical_lorentz(srt, p, q), arg=float(srt[k]))
    return NormValue(_empirical_lorentz(srt, p, q))


def _analytic_lorentz(x, p, q) -> NormValue:
    from .quadrature import HalfLine, quad

    tail = np.vectorize(x.tail_abs, otypes=[float])
    if math.isinf(q):
        def objective(t):
            return t * tail(t) ** (1.0 / p)

        hi = x.support[1] if isinstance(x, ContinuousRV) else math.inf
        lo = x.support[0] if isinstance(x, ContinuousRV) else -math.inf
        span = max(abs(lo), abs(hi)) * abs(getattr(x, "scale", 1.0))
        top = span if math.isfinite(span) else 1e6
        grid = np.geomspace(top * 1e-9, top, 601)
        vals = objective(grid)
        k = int(np.argmax(vals))
        a, b = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
        res = optimize.minimize_scalar(lambda t: -float(objective(t)), bounds=(a, b),
                                       method="bounded", options={"xatol": 1e-13})
        best_t, best = (res.x, -res.fun) if -res.fun >= vals[k] else (grid[k], vals[k])
        if k == grid.size - 1 and not math.isfinite(span):
            return _inf(arg=float(best_t), reason="weak-type supremum not attained on the search range")
        return NormValue(float(best), arg=float(best_t))

    def integrand(t):
        return q * t ** (q - 1.0) * tail(t) ** (q / p)

    r = quad(integrand, HalfLine(0.0), breakpoints=_tail_breakpoints(x), abs_tol=1e-14, rel_tol=1e-12)
    if not r.converged or not math.isfinite(r.value):
        return _inf(reason="tail integral diverges")
    return NormValue(r.value ** (1.0 / q), diagnostics={"error_estimate": r.error_estimate})


STRONG_NORMAL, NOT_STRONG_NORMAL = "StrongNormal", "NotStrongNormal"


def lorentz_snri_classify(p: float, q: float) -> str:
    """Strong normality of L_{p,q}: min(p, q) > 2, or q = 2 <= p."""
    if not (p >= 1 and q >= 1):
        raise DomainError("Lorentz classification needs p, q >= 1")
    if min(p, q) > 2 or (q == 2 and p >= 2):
        return STRONG_NORMAL
    return NOT_STRONG_NORMAL


# -- norm specifications ---------------------------------------------------------

@dataclass(frozen=True)
class NormSpec:
    tag: str
    p: Optional[float] = None
    q: Optional[float] = None
    psi: Any = None
    phi: Any = None
    p_grid: Optional[tuple] = None
    lam_grid: Optional[tuple] = None
    ceiling: float = 1e3

    def __post_init__(self):
        need = {LP: ("p",), LORENTZ: ("p", "q"), GLS: ("psi",), BPHI: ("phi",)}
        if self.tag not in need:
            raise DomainError(f"unknown norm tag {self.tag!r}")
        for name in need[self.tag]:
            if getattr(self, name) is None:
                raise DomainError(f"{self.tag} norm requires {name}")
        if self.tag in (LP, LORENTZ) and not self.p >= 1:
            raise DomainError("p must be >= 1")
        if self.tag == LORENTZ and not self.q >= 1:
            raise DomainError("q must be >= 1")

    @classmethod
    def lp(cls, p):
        return cls(LP, p=float(p))

    @classmethod
    def lorentz(cls, p, q):
        return cls(LORENTZ, p=float(p), q=float(q))

    @classmethod
    def gls(cls, psi, p_grid=None, ceiling=1e3):
        return cls(GLS, psi=psi, p_grid=None if p_grid is None else tuple(map(float, p_grid)), ceiling=ceiling)

    @classmethod
    def bphi(cls, phi, lam_grid=None, ceiling=1e6):
        return cls(BPHI, phi=phi, lam_grid=None if lam_grid is None else tuple(map(float, lam_grid)),
                   ceiling=ceiling)

    def resolved_p_grid(self) -> np.ndarray:
        if self.p_grid is not None:
            return np.asarray(self.p_grid)
        return default_p_grid(getattr(self.psi, "support_B", math.inf),
                              start=max(2.0, getattr(self.psi, "support_A", 1.0)))

    def resolved_lam_grid(self) -> np.ndarray:
        if self.lam_grid is not None:
            return np.asarray(self.lam_grid)
        return default_lambda_grid()

    def describe(self) -> dict:
        d: dict = {"tag": self.tag}
        if self.tag in (LP, LORENTZ):
            d["p"] = self.p
        if self.tag == LORENTZ:
            d["q"] = self.q
        if self.tag == GLS:
            d["psi"] = getattr(self.psi, "label", repr(self.psi))
            d["p_grid"] = [float(self.resolved_p_grid()[0]), float(self.resolved_p_grid()[-1]),
                           int(self.resolved_p_grid().size)]
        if self.tag == BPHI:
            d["phi"] = getattr(self.phi, "label", repr(self.phi))
            g = self.resolved_lam_grid()
            d["lam_grid"] = [float(g.min()), float(g.max()), int(g.size)]
        return d


def evaluate(spec: NormSpec, x) -> NormValue:
    """Evaluate the norm described by ``spec`` on ``x``."""
    if spec.tag == LP:
        return lp_norm(x, spec.p)
    if spec.tag == LORENTZ:
        return lorentz_quasinorm(x, spec.p, spec.q)
    if spec.tag == GLS:
        return gls_norm(moment_curve(x, spec.resolved_p_grid()), spec.psi, ceiling=spec.ceiling)
    return bphi_norm(x, spec.phi, spec.resolved_lam_grid(), ceiling=spec.ceiling)


# -- associate-norm pairing ------------------------------------------------------

@dataclass(frozen=True)
class PairingResult:
    value: float
    best: Optional[str]
    table: list  # (name, |E zeta tau|, ||zeta||_Y, ratio)


def associate_pairing_lb(target, dictionary, norm: NormSpec) -> PairingResult:
    """Lower estimate of the associate norm of ``target``.

    Returns max over test variables zeta of |E(zeta tau)| / ||zeta||_Y,
    which never exceeds ||tau||_{Y'} by the generalized Hoelder inequality.
    All variables must be realized on the same replicate stream, i.e. be
    arrays of the same length whose entries correspond replicate by
    replicate.
    """
    tau = _values(target)
    items = list(dictionary.items()) if isinstance(dictionary, dict) else [
        (f"zeta{i}", z) for i, z in enumerate(dictionary)]
    if not items:
        raise DomainError("test dictionary is empty")
    table = []
    best, best_name = 0.0, None
    for name, z in items:
        zv = _values(z)
        if zv.shape != tau.shape:
            raise PreconditionError(f"test variable {name!r} is not realized on the target's replicates")
        pairing = abs(math.fsum(zv * tau) / tau.size)
        nv = evaluate(norm, zv)
        if nv.infinite or nv.value == 0:
            ratio = 0.0
        else:
            ratio = pairing / nv.value
        table.append((name, pairing, None if nv.infinite else nv.value, ratio))
        if ratio > best:
            best, best_name = ratio, name
    return PairingResult(best, best_name, table)


# -- tail envelope ----------------------------------------------------------------

@dataclass(frozen=True)
class TailEnvelope:
    """x -> exp(-C x^m) for x >= threshold, 1 below it.

    From |X|_p <= N p^(1/m) and Markov's inequality,
    P(|X| > x) <= (N p^(1/m) / x)^p; choosing p = x^m / (e N^m) gives
    exp(-x^m / (m e N^m)), so C = 1 / (m e N^m).  The choice of p must lie in
    the range of p covered by the norm, which fixes ``threshold`` (and
    ``valid_until`` when the grid is bounded).
    """

    norm: float
    m: float
    C: float
    threshold: float
    valid_until: float

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.norm == 0:
            return np.where(x > 0, 0.0, 1.0)
        env = np.exp(-self.C * np.abs(x) ** self.m)
        return np.where(x >= self.threshold, env, 1.0)


def gls_tail_bound(gls_norm_value, m: float, p_min: float = 2.0, p_max: float = math.inf) -> TailEnvelope:
    if isinstance(gls_norm_value, NormValue):
        if gls_norm_value.infinite:
            raise DomainError("tail envelope needs a finite G(psi_m) norm")
        gls_norm_value = gls_norm_value.value
    N = float(gls_norm_value)
    if not m > 0:
        raise DomainError("m must be positive")
    if not math.isfinite(N):
        raise DomainError("tail envelope needs a finite G(psi_m) norm")
    if N == 0:
        return TailEnvelope(0.0, m, math.inf, 0.0, math.inf)
    C = 1.0 / (m * math.e * N ** m)
    lo = N * (math.e * p_min) ** (1.0 / m)
    hi = N * (math.e * p_max) ** (1.0 / m) if math.isfinite(p_max) else math.inf
    return TailEnvelope(N, m, C, lo, hi)
