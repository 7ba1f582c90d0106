"""Seeded simulation: CLT norms, divergence probes, estimator deviations,
maximum likelihood and end-to-end bound verification.

All simulations split replicates into fixed-size blocks drawn from
counter-based substreams (see :mod:`rcbounds.rng`), so results do not depend
on the number of workers.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Optional, Sequence

import numpy as np

from . import distributions as dist
from .bounds import (lower_bound_bphi, lower_bound_gls, lower_bound_lp,
                     rosenthal_bound)
from .errors import DomainError, EstimationError, PreconditionError, UnsupportedScoreError
from .families import SCALE, SHIFT, get_family
from .norms import (NormSpec, associate_pairing_lb, evaluate, lp_norm, lp_norm_jackknife, lp_norm_se)
from .rng import Stream, run_blocks, stable_hash
from .transforms import parse_phi, parse_psi, phi_bar, psi_R

HOLDS, WITHIN_NOISE, VIOLATED, INCONCLUSIVE = "Holds", "HoldsWithinNoise", "Violated", "Inconclusive"
WNRI_CONSISTENT, DIVERGENCE_DETECTED = "WNRIConsistent", "DivergenceDetected"
SAMPLE_MEAN, MLE = "sample-mean", "mle"
LOWER, UPPER = "lower", "upper"

# An estimator failing on more than this fraction of replicates aborts the run.
MAX_FAILURE_RATE = 1e-3
# Smallest fitted growth exponent accepted as divergence.
MIN_GROWTH_EXPONENT = 0.02
# Replicate blocks hold at most this many draws.
BLOCK_DRAWS = 2 ** 21


def rows_per_block(n: int) -> int:
    return max(1, min(4096, BLOCK_DRAWS // max(1, n)))


# -- maximum likelihood -------------------------------------------------------------

def _score_sums(fam, X: np.ndarray, theta: np.ndarray) -> np.ndarray:
    with np.errstate(all="ignore"):
        return fam._score_unchecked(X, theta[:, None]).sum(axis=1)


def _mle_bracket(fam, X: np.ndarray):
    lo, hi = X.min(axis=1), X.max(axis=1)
    if fam.kind == SHIFT:
        pad = np.maximum(1.0, hi - lo)
        return lo - pad, hi + pad
    if fam.kind == SCALE:
        return np.maximum(lo, 1e-300) / 2.0, 2.0 * np.maximum(hi, 1e-300)
    raise EstimationError(f"no MLE bracket for a {fam.kind} family")


def mle_rows(family, X) -> np.ndarray:
    """Row-wise MLE of an ``(reps, n)`` sample array; NaN marks failed rows.

    Roots of the score sum are found by bisection on the sign change, then
    polished by Newton steps (finite-difference slope) kept inside the
    bracket.  Families whose MLE is the sample mean return it directly.
    """
    fam = get_family(family)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if fam.mle_closed_form == "mean":
        return X.mean(axis=1)
    if not fam.has_score:
        raise UnsupportedScoreError(f"{fam.name} has no score function")
    lo, hi = _mle_bracket(fam, X)
    s_lo, s_hi = _score_sums(fam, X, lo), _score_sums(fam, X, hi)
    ok = np.sign(s_lo) * np.sign(s_hi) <= 0
    ok &= np.isfinite(s_lo) & np.isfinite(s_hi)
    rising = s_hi > s_lo
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        width = hi - lo
        if np.all(~ok | (width <= 1e-15 * np.maximum(1.0, np.abs(mid)))):
            break
        s_mid = _score_sums(fam, X, mid)
        exact = s_mid == 0
        go_right = np.where(rising, s_mid < 0, s_mid > 0)
        lo = np.where(go_right & ~exact, mid, lo)
        hi = np.where(~go_right & ~exact, mid, hi)
        lo = np.where(exact, mid, lo)
        hi = np.where(exact, mid, hi)
    theta = 0.5 * (lo + hi)
    # Newton polish inside the final bracket
    for _ in range(3):
        h = np.maximum(hi - lo, 1e-12 * np.maximum(1.0, np.abs(theta)))
        slope = (_score_sums(fam, X, theta + h) - _score_sums(fam, X, theta - h)) / (2 * h)
        s = _score_sums(fam, X, theta)
        with np.errstate(all="ignore"):
            step = np.where(slope != 0, s / slope, 0.0)
        cand = theta - step
        better = (cand >= lo) & (cand <= hi) & (np.abs(_score_sums(fam, X, cand)) < np.abs(s))
        theta = np.where(better, cand, theta)
    return np.where(ok, theta, np.nan)


def mle_estimate(family, sample) -> float:
    """MLE of theta from one sample; raises EstimationError without a sign change."""
    value = float(mle_rows(family, np.asarray(sample, dtype=float)[None, :])[0])
    if not math.isfinite(value):
        raise EstimationError("score sum has no sign change in the bracket")
    return value


def estimator_rows(family, estimator: str, X: np.ndarray) -> np.ndarray:
    if estimator == SAMPLE_MEAN:
        return X.mean(axis=1)
    if estimator == MLE:
        return mle_rows(family, X)
    raise DomainError(f"unknown estimator {estimator!r}")


# -- deviation norms --------------------------------------------------------------

@dataclass
class Deviation:
    value: float
    se: Optional[float]
    reps: int
    failures: int
    samples: np.ndarray = field(repr=False, default=None)


def simulate_estimates(family, theta0: float, estimator: str, n: int, reps: int, stream: Stream,
                       workers: Optional[int] = None, with_score: bool = False):
    """sqrt(n) (theta_hat - theta0) per replicate, optionally with the
    normalized score sum n^(-1/2) sum l(x_i, theta0) of the same sample."""
    fam = get_family(family)
    theta0 = fam.check_theta(theta0)
    if n < 1 or reps < 1:
        raise DomainError("n and reps must be positive")
    root = math.sqrt(n)

    def block(rng, count):
        X = fam._draw(theta0, rng, (count, n))
        dev = root * (estimator_rows(fam, estimator, X) - theta0)
        if not with_score:
            return dev[:, None]
        sc = fam._score_unchecked(X, theta0).sum(axis=1) / root
        return np.column_stack([dev, sc])

    out = run_blocks(block, reps, stream, block=rows_per_block(n), workers=workers)
    return out[:, 0] if not with_score else out


def _drop_failures(values: np.ndarray, reps: int):
    bad = ~np.isfinite(values if values.ndim == 1 else values[:, 0])
    failures = int(bad.sum())
    if failures > MAX_FAILURE_RATE * reps:
        raise EstimationError(f"estimator failed on {failures} of {reps} replicates")
    return values[~bad], failures


def deviation_norm(family, theta0: float, estimator: str, n: int, norm: NormSpec, reps: int,
                   seed: int = 0, workers: Optional[int] = None, stream: Optional[Stream] = None,
                   keep_samples: bool = False) -> Deviation:
    """Y-norm of sqrt(n)(theta_hat - theta0) over ``reps`` replicates.

    L_p norms carry a jackknife standard error.
    """
    fam = get_family(family)
    if stream is None:
        stream = Stream(seed, ["deviation", fam.name, float(theta0), estimator, int(n), norm.describe()])
    dev = simulate_estimates(fam, theta0, estimator, n, reps, stream, workers)
    dev, failures = _drop_failures(dev, reps)
    if norm.tag == "Lp":
        value, se = lp_norm_jackknife(dev, norm.p)
    else:
        value, se = float(evaluate(norm, dev)), None
    return Deviation(value, se, reps, failures, dev if keep_samples else None)


# -- CLT norms and divergence probing ---------------------------------------------------

@dataclass
class GrowthFit:
    slope: float
    se: float
    points: int

    @property
    def diverges(self) -> bool:
        return self.slope > 3.0 * self.se and self.slope > MIN_GROWTH_EXPONENT


def fit_growth(n_grid: Sequence[int], values: Sequence[float], ses: Sequence[float],
               upper_half: bool = True) -> GrowthFit:
    """Weighted log-log regression of norm on n.

    Log-values carry variance (se / value)^2.  The slope standard error
    combines the weighted-regression error with the residual scatter, so a
    misspecified straight line does not produce an overconfident fit.
    With ``upper_half`` only the larger half of the grid (at least three
    points) enters the fit, where pre-asymptotic curvature has faded.
    """
    n = np.asarray(n_grid, dtype=float)
    v = np.asarray(values, dtype=float)
    s = np.asarray(ses, dtype=float)
    if n.size < 2:
        raise DomainError("growth fit needs at least two grid points")
    if upper_half and n.size > 3:
        k = max(3, (n.size + 1) // 2)
        n, v, s = n[-k:], v[-k:], s[-k:]
    x = np.log(n)
    y = np.log(v)
    sig = np.maximum(s / v, 1e-12)
    w = 1.0 / sig ** 2
    xb = np.sum(w * x) / np.sum(w)
    sxx = float(np.sum(w * (x - xb) ** 2))
    slope = float(np.sum(w * (x - xb) * (y - np.sum(w * y) / np.sum(w))) / sxx)
    se = math.sqrt(1.0 / sxx)
    if n.size > 2:
        resid = y - (np.sum(w * y) / np.sum(w) + slope * (x - xb))
        chi2 = float(np.sum(w * resid ** 2)) / (n.size - 2)
        se *= math.sqrt(max(1.0, chi2))
    return GrowthFit(slope, se, int(n.size))


@dataclass
class CltNormEstimate:
    distribution: str
    norm: dict
    n_grid: list
    values: list
    ses: list
    running_sup: list
    sup: float
    divergence: bool
    growth: GrowthFit

    def to_dict(self) -> dict:
        d = asdict(self)
        d["growth"] = asdict(self.growth)
        return d


def _resolve_distribution(d):
    if isinstance(d, (dist.RandomVariable,)):
        return d
    return dist.parse_distribution(str(d))


def _check_centered(d) -> None:
    if isinstance(d, dist.StableRV):
        return  # symmetric
    mean = d.mean()
    second = d.abs_moment(2.0).value
    spread = math.sqrt(second) if math.isfinite(second) and second > 0 else 1.0
    if abs(mean) > 1e-8 * spread:
        raise PreconditionError(f"{d.name} is not centered (mean={mean})")


def _norm_se(spec: NormSpec, values: np.ndarray, batches: int = 20) -> float:
    if spec.tag == "Lp":
        return lp_norm_se(values, spec.p)
    # batch means for norms without a closed-form delta method
    parts = np.array_split(values, batches)
    est = np.array([float(evaluate(spec, part)) for part in parts])
    if not np.all(np.isfinite(est)):
        return math.inf
    return float(est.std(ddof=1) / math.sqrt(batches))


def normalized_sums(d, n: int, reps: int, stream: Stream, workers: Optional[int] = None,
                    normalize: bool = True) -> np.ndarray:
    """``reps`` draws of n^(-1/2) (X_1 + ... + X_n) (or the raw sum)."""
    scale = 1.0 / math.sqrt(n) if normalize else 1.0

    def block(rng, count):
        return d.sample(rng, (count, n)).sum(axis=1) * scale

    return run_blocks(block, reps, stream.child(int(n)), block=rows_per_block(n), workers=workers)


def clt_norm_estimate(distribution, norm: NormSpec, n_grid: Sequence[int], reps: int, seed: int = 0,
                      workers: Optional[int] = None) -> CltNormEstimate:
    """Monte Carlo estimate of sup_n || n^(-1/2) sum X_i ||_Y over ``n_grid``."""
    d = _resolve_distribution(distribution)
    _check_centered(d)
    grid = [int(n) for n in n_grid]
    if not grid or any(b <= a for a, b in zip(grid, grid[1:])) or grid[0] < 1:
        raise DomainError("n_grid must be an increasing sequence of positive integers")
    stream = Stream(seed, ["clt", d.name, norm.describe()])
    values, ses = [], []
    for n in grid:
        sums = normalized_sums(d, n, reps, stream, workers)
        nv = evaluate(norm, sums)
        values.append(float(nv))
        ses.append(_norm_se(norm, sums) if nv.finite else math.inf)
    running = np.maximum.accumulate(values).tolist()
    finite = all(math.isfinite(v) for v in values)
    growth = fit_growth(grid, values, ses) if finite and len(grid) > 1 else GrowthFit(
        math.inf if not finite else 0.0, 0.0, len(grid))
    return CltNormEstimate(d.name, norm.describe(), grid, values, ses, running, float(running[-1]),
                           growth.diverges or not finite, growth)


@dataclass
class ProbeResult:
    verdict: str
    estimate: CltNormEstimate

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, **self.estimate.to_dict()}


def wnri_probe(distribution, norm: NormSpec, n_grid: Sequence[int], reps: int, seed: int = 0,
               workers: Optional[int] = None) -> ProbeResult:
    """DivergenceDetected when the normalized sums' norm grows with n."""
    est = clt_norm_estimate(distribution, norm, n_grid, reps, seed, workers)
    return ProbeResult(DIVERGENCE_DETECTED if est.divergence else WNRI_CONSISTENT, est)


# -- Rosenthal ----------------------------------------------------------------------

@dataclass
class RosenthalReport:
    distribution: str
    p: list
    n_grid: list
    ratios: dict  # p -> list of ratios per n
    ses: dict
    max_ratio: dict

    @property
    def holds(self) -> bool:
        """Every ratio at most 1, allowing 3 SE at p = 2 where equality is exact."""
        for q in self.p:
            for r, s in zip(self.ratios[q], self.ses[q]):
                if r > 1.0 + (3.0 * s if q == 2.0 else 0.0) + 1e-12:
                    return False
        return True

    def to_dict(self) -> dict:
        return asdict(self)


def rosenthal_empirical_check(distribution, p, n_grid: Sequence[int], reps: int, seed: int = 0,
                              workers: Optional[int] = None) -> RosenthalReport:
    """|X_1 + ... + X_n|_p / (R(p) sqrt(n) |X|_p) on each n.

    ``p`` may be a single exponent or a sequence; all exponents share the
    same simulated sums.
    """
    d = _resolve_distribution(distribution)
    _check_centered(d)
    ps = [float(p)] if np.ndim(p) == 0 else [float(v) for v in p]
    base = {}
    for q in ps:
        nv = lp_norm(d, q)
        if not nv.finite:
            raise PreconditionError(f"|X|_{q} is infinite for {d.name}")
        base[q] = nv.value
    stream = Stream(seed, ["rosenthal", d.name])
    ratios = {q: [] for q in ps}
    ses = {q: [] for q in ps}
    for n in n_grid:
        sums = normalized_sums(d, int(n), reps, stream, workers, normalize=False)
        for q in ps:
            denom = rosenthal_bound(q) * math.sqrt(n) * base[q]
            ratios[q].append(float(lp_norm(sums, q)) / denom)
            ses[q].append(lp_norm_se(sums, q) / denom)
    return RosenthalReport(d.name, ps, [int(n) for n in n_grid], ratios, ses,
                           {q: max(r) for q, r in ratios.items()})


# -- scenarios and verification -------------------------------------------------------

SCENARIO_KEYS = frozenset({"family", "theta0", "estimator", "mode", "norm", "n_grid", "reps", "seed",
                           "p_grid", "lam_grid"})


@dataclass(frozen=True)
class Scenario:
    """One verification run.

    ``norm`` describes the deviation norm: ``{"tag": "Lp", "q": 2}`` for the
    L_q lower bound, ``{"tag": "GLS", "psi": ...}``, ``{"tag": "Bphi",
    "phi": ...}``, or in upper mode the strong norm ``{"tag": "Lp", "p": 4}``.
    """

    family: Any
    theta0: float
    estimator: str
    norm: dict
    n_grid: tuple
    reps: int
    seed: int
    mode: str = LOWER
    p_grid: Optional[tuple] = None
    lam_grid: Optional[tuple] = None

    def __post_init__(self):
        grid = tuple(int(n) for n in self.n_grid)
        object.__setattr__(self, "n_grid", grid)
        if not grid or any(b <= a for a, b in zip(grid, grid[1:])) or grid[0] < 1:
            raise DomainError("n_grid must be sorted ascending with positive entries")
        if self.reps < 1000:
            raise DomainError("verification runs need reps >= 1000")
        if self.estimator not in (SAMPLE_MEAN, MLE):
            raise DomainError(f"unknown estimator {self.estimator!r}")
        if self.mode not in (LOWER, UPPER):
            raise DomainError(f"unknown mode {self.mode!r}")
        tag = self.norm.get("tag")
        if tag not in ("Lp", "GLS", "Bphi"):
            raise DomainError(f"unknown norm tag {tag!r}")
        if self.mode == LOWER and tag == "Lp" and "q" not in self.norm:
            raise DomainError("lower-bound Lp scenarios need q")
        if self.mode == UPPER and tag == "Lp" and "p" not in self.norm:
            raise DomainError("upper-bound Lp scenarios need p")
        if self.mode == UPPER and self.estimator != MLE:
            raise DomainError("upper-bound mode checks the MLE")

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "theta0": self.theta0,
            "estimator": self.estimator,
            "mode": self.mode,
            "norm": dict(self.norm),
            "n_grid": list(self.n_grid),
            "reps": self.reps,
            "seed": self.seed,
            "p_grid": None if self.p_grid is None else list(self.p_grid),
            "lam_grid": None if self.lam_grid is None else list(self.lam_grid),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        unknown = set(d) - SCENARIO_KEYS
        if unknown:
            raise DomainError(f"unknown scenario keys: {sorted(unknown)}")
        missing = {"family", "theta0", "estimator", "norm", "n_grid", "reps", "seed"} - set(d)
        if missing:
            raise DomainError(f"missing scenario keys: {sorted(missing)}")
        kw = dict(d)
        for k in ("p_grid", "lam_grid"):
            if kw.get(k) is not None:
                kw[k] = tuple(float(v) for v in kw[k])
        kw["n_grid"] = tuple(kw["n_grid"])
        kw["theta0"] = float(kw["theta0"])
        kw["reps"] = int(kw["reps"])
        kw["seed"] = int(kw["seed"])
        return cls(**kw)

    @property
    def key(self) -> int:
        return stable_hash(self.to_dict())

    def norm_spec(self) -> NormSpec:
        """The Y norm used for the deviation (lower mode: the associate side)."""
        tag = self.norm["tag"]
        if tag == "Lp":
            return NormSpec.lp(self.norm["q"] if self.mode == LOWER else self.norm["p"])
        if tag == "GLS":
            return NormSpec.gls(parse_psi(self.norm["psi"]), p_grid=self.p_grid)
        return NormSpec.bphi(parse_phi(self.norm["phi"]), lam_grid=self.lam_grid)


@dataclass
class BoundReport:
    scenario: dict
    mode: str
    rhs_bound: Optional[float]
    n_grid: list
    lhs: list
    se: list
    margin: list
    verdicts: list
    verdict: str
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, allow_nan=True)

    def csv_rows(self) -> list[dict]:
        return [{"n": n, "lhs": l, "se": s, "rhs": self.rhs_bound, "margin": m, "verdict": v}
                for n, l, s, m, v in zip(self.n_grid, self.lhs, self.se, self.margin, self.verdicts)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=["n", "lhs", "se", "rhs", "margin", "verdict"],
                                lineterminator="\n")
        writer.writeheader()
        for row in self.csv_rows():
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
        return buf.getvalue()


def classify(lhs: float, rhs: float, se: Optional[float]) -> str:
    """Lower-bound verdict for one n with 3-SE noise allowance."""
    if lhs >= rhs:
        return HOLDS
    if se is not None and lhs + 3.0 * se >= rhs:
        return WITHIN_NOISE
    return VIOLATED


_SEVERITY = {HOLDS: 0, WITHIN_NOISE: 1, INCONCLUSIVE: 2, VIOLATED: 3}


def _worst(verdicts: Sequence[str]) -> str:
    return max(verdicts, key=_SEVERITY.__getitem__)


def hermite_dictionary(score_sum: np.ndarray) -> dict:
    """Normalized score sum plus centered He_2, He_3 of it."""
    s = score_sum
    he2 = s * s - 1.0
    he3 = s ** 3 - 3.0 * s
    return {
        "score_sum": s,
        "He2": he2 - math.fsum(he2) / he2.size,
        "He3": he3 - math.fsum(he3) / he3.size,
    }


def verify_bound(scenario: Scenario, workers: Optional[int] = None) -> BoundReport:
    """Run a scenario and compare the simulated deviation norm to the bound."""
    sc = scenario
    fam = get_family(sc.family)
    base = Stream(sc.seed, ["verify", sc.key])
    if sc.mode == UPPER:
        return _verify_upper(sc, fam, base, workers)
    tag = sc.norm["tag"]
    lhs, se, margin, verdicts = [], [], [], []
    diag: dict = {}
    if tag == "Lp":
        bound = lower_bound_lp(fam, sc.theta0, float(sc.norm["q"]))
        spec = NormSpec.lp(float(sc.norm["q"]))
        rhs = bound.bound
        for n in sc.n_grid:
            dev = deviation_norm(fam, sc.theta0, sc.estimator, n, spec, sc.reps, stream=base.child(n),
                                 workers=workers)
            lhs.append(dev.value)
            se.append(dev.se)
            margin.append(dev.value - rhs)
            verdicts.append(classify(dev.value, rhs, dev.se))
            diag.setdefault("failures", []).append(dev.failures)
    else:
        if tag == "GLS":
            psi = parse_psi(sc.norm["psi"])
            bound = lower_bound_gls(fam, sc.theta0, psi, p_grid=sc.p_grid)
            pair_norm = NormSpec.gls(psi_R(psi), p_grid=sc.p_grid)
        else:
            phi = parse_phi(sc.norm["phi"])
            bound = lower_bound_bphi(fam, sc.theta0, phi, lam_grid=sc.lam_grid)
            pair_norm = NormSpec.bphi(phi_bar(phi), lam_grid=sc.lam_grid)
        rhs = bound.bound
        tables = []
        for n in sc.n_grid:
            both = simulate_estimates(fam, sc.theta0, sc.estimator, n, sc.reps, base.child(n), workers,
                                      with_score=True)
            both, failures = _drop_failures(both, sc.reps)
            res = associate_pairing_lb(both[:, 0], hermite_dictionary(both[:, 1]), pair_norm)
            lhs.append(res.value)
            se.append(None)
            margin.append(res.value - rhs)
            verdicts.append(HOLDS if res.value >= rhs else INCONCLUSIVE)
            tables.append({"n": n, "best": res.best, "table": [list(t) for t in res.table],
                           "failures": failures})
        diag["pairing"] = tables
    diag["bound"] = bound.to_dict()
    return BoundReport(sc.to_dict(), LOWER, rhs, list(sc.n_grid), lhs, se, margin, verdicts,
                       _worst(verdicts), diag)


def _verify_upper(sc: Scenario, fam, base: Stream, workers) -> BoundReport:
    spec = sc.norm_spec()
    lhs, se = [], []
    for n in sc.n_grid:
        dev = deviation_norm(fam, sc.theta0, sc.estimator, n, spec, sc.reps, stream=base.child(n),
                             workers=workers)
        lhs.append(dev.value)
        se.append(dev.se)
    if len(sc.n_grid) < 2:
        raise DomainError("upper-bound mode needs at least two sample sizes")
    fit = fit_growth(sc.n_grid, lhs, [s if s is not None else 0.0 for s in se], upper_half=False)
    verdict = VIOLATED if fit.diverges else HOLDS
    return BoundReport(sc.to_dict(), UPPER, None, list(sc.n_grid), lhs, se, [None] * len(lhs),
                       [verdict] * len(lhs), verdict, {"growth": asdict(fit)})
