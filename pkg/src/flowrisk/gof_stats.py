"""Goodness of fit for discrete samples: binning, KS and AD statistics, moment fits.

The KS decisions use the asymptotic Kolmogorov critical values c(alpha)/sqrt(n).
For discrete reference distributions these are conservative (true rejection
rate below alpha), which is the usual behaviour of general-purpose fitting
tools and is accepted here; exact discrete KS p-values are not computed.
"""

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from flowrisk.distributions import (
    DISCRETE_UNIFORM,
    FAMILIES,
    GEOMETRIC,
    NEGATIVE_BINOMIAL,
    POISSON,
    FittedDistribution,
)
from flowrisk.errors import InfeasibleFitError, InvalidParameterError, NoAcceptableFitError

KS_COEFFICIENTS = {0.01: 1.628, 0.02: 1.517, 0.05: 1.358, 0.10: 1.224}
ALPHAS = (0.01, 0.02, 0.05, 0.10)
AD_CRITICAL_05 = 2.492
AD_EPS = 1e-12
SMALL_N = 5


def normalize(samples: Sequence[float], width: float = 1.0, floor: int = 1) -> np.ndarray:
    """Bin real-valued samples to integers: round(x / width), clamped below at ``floor``."""
    if not width > 0:
        raise InvalidParameterError(f"bin width must be positive, got {width}")
    x = np.asarray(samples, dtype=np.float64)
    if x.size == 0:
        raise InvalidParameterError("cannot normalize an empty sample")
    # round half away from zero; numpy's banker's rounding would send 2.5 -> 2
    binned = np.floor(x / width + 0.5).astype(np.int64)
    return np.maximum(binned, floor)


def ks_statistic(samples: Sequence[int], cdf: Callable) -> float:
    """sup_x |F_n(x) - F(x)| for integer data against an integer-lattice CDF.

    Both step functions are constant on [x, x+1), so the supremum is reached
    either at a sample value or just before it, where F_n(x-) meets F(x-1).
    """
    x = np.asarray(samples)
    n = x.size
    if n == 0:
        raise InvalidParameterError("KS statistic needs at least one sample")
    values, counts = np.unique(x, return_counts=True)
    upto = np.cumsum(counts)
    at = np.abs(upto / n - cdf(values))
    before = np.abs((upto - counts) / n - cdf(values - 1))
    return float(max(at.max(), before.max()))


def kolmogorov_q(lam: float) -> float:
    """Q(lam) = 2 sum_{k>=1} (-1)^(k-1) exp(-2 k^2 lam^2), the Kolmogorov tail."""
    if lam <= 0:
        return 1.0
    if lam < 1.18:
        # Jacobi-transformed series converges fast for small lam
        y = math.exp(-math.pi ** 2 / (8 * lam * lam))
        s = sum(y ** ((2 * j - 1) ** 2) for j in range(1, 12))
        return min(1.0, max(0.0, 1.0 - math.sqrt(2 * math.pi) / lam * s))
    total = 0.0
    for k in range(1, 101):
        term = math.exp(-2.0 * k * k * lam * lam)
        total += term if k % 2 else -term
        if term < 1e-17:
            break
    return min(1.0, max(0.0, 2.0 * total))


def ks_pvalue(d: float, n: int) -> float:
    rn = math.sqrt(n)
    return kolmogorov_q((rn + 0.12 + 0.11 / rn) * d)


def ks_critical(alpha: float, n: int) -> float:
    try:
        return KS_COEFFICIENTS[alpha] / math.sqrt(n)
    except KeyError:
        raise InvalidParameterError(
            f"no KS critical value for alpha={alpha}; known: {sorted(KS_COEFFICIENTS)}") from None


def ad_statistic(samples: Sequence[int], cdf: Callable, eps: float = AD_EPS) -> Tuple[float, bool]:
    """A^2 = -N - S over the ascending sample; returns (A^2, clamped flag).

    CDF values are clamped to [eps, 1 - eps] so the logarithms stay finite;
    the flag reports whether any clamping happened.
    """
    y = np.sort(np.asarray(samples))
    N = y.size
    if N == 0:
        raise InvalidParameterError("AD statistic needs at least one sample")
    F = np.asarray(cdf(y), dtype=np.float64)
    clamped = bool(np.any((F < eps) | (F > 1 - eps)))
    F = np.clip(F, eps, 1 - eps)
    i = np.arange(1, N + 1)
    S = np.sum((2 * i - 1) / N * (np.log(F) + np.log1p(-F[::-1])))
    return float(-N - S), clamped


@dataclass
class GofReport:
    family: str
    params: Dict[str, float]
    n: int
    d_n: Optional[float] = None
    p_value: Optional[float] = None
    decisions: Dict[float, bool] = field(default_factory=dict)
    a2: Optional[float] = None
    ad_accepted: Optional[bool] = None
    accepted: bool = False
    route: Optional[str] = None  # "ks" | "ad" once selected
    flags: List[str] = field(default_factory=list)
    error: Optional[str] = None

    @property
    def ks_accepted_any(self) -> bool:
        return any(self.decisions.values())

    @property
    def distribution(self) -> FittedDistribution:
        return FittedDistribution(self.family, self.params)

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "params": dict(self.params),
            "n": self.n,
            "D_n": self.d_n,
            "A2": self.a2,
            "p_value": self.p_value,
            "decisions": {f"{a:g}": ("accept" if ok else "reject") for a, ok in self.decisions.items()},
            "ad_accepted": self.ad_accepted,
            "accepted": self.accepted,
            "route": self.route,
            "flags": list(self.flags),
            "error": self.error,
        }


def ks_test(samples: Sequence[int], dist: FittedDistribution,
            alphas: Sequence[float] = ALPHAS) -> GofReport:
    x = np.asarray(samples)
    n = int(x.size)
    d = ks_statistic(x, dist.cdf)
    report = GofReport(dist.family, dict(dist.params), n, d_n=d, p_value=ks_pvalue(d, n))
    report.decisions = {a: d <= ks_critical(a, n) for a in sorted(alphas)}
    if n < SMALL_N:
        report.flags.append("small-n")
    return report


def fit(family: str, samples: Sequence[int]) -> FittedDistribution:
    x = np.asarray(samples, dtype=np.float64)
    if x.size == 0:
        raise InvalidParameterError("cannot fit an empty sample")
    if family not in FAMILIES:
        raise InvalidParameterError(f"unknown family {family!r}")
    mean = float(x.mean())
    if family == GEOMETRIC:
        if mean < 1 or x.min() < 1:
            raise InfeasibleFitError("geometric needs samples on {1, 2, ...}")
        return FittedDistribution(GEOMETRIC, {"p": 1.0 / mean})
    if family == DISCRETE_UNIFORM:
        if x.min() < 1:
            raise InfeasibleFitError("discrete-uniform needs samples on {1, ..., n}")
        return FittedDistribution(DISCRETE_UNIFORM, {"n": float(x.max())})
    if family == POISSON:
        if mean <= 0:
            raise InfeasibleFitError("poisson needs a positive mean")
        return FittedDistribution(POISSON, {"lambda": mean})
    var = float(x.var())
    if var <= mean:
        raise InfeasibleFitError(
            f"negative-binomial needs overdispersion (variance {var:.6g} <= mean {mean:.6g})")
    return FittedDistribution(NEGATIVE_BINOMIAL, {"c": mean * mean / (var - mean), "p": mean / var})


def select_distribution(samples: Sequence[int], candidates: Sequence[str] = FAMILIES,
                        alphas: Sequence[float] = ALPHAS,
                        ad_critical: float = AD_CRITICAL_05) -> Tuple[GofReport, List[GofReport]]:
    """Fit every candidate, accept the lowest-D_n KS survivor, else fall back to AD.

    Returns (accepted report, all reports sorted by D_n). Raises
    NoAcceptableFitError carrying all reports when both tests reject everything.
    """
    if not candidates:
        raise InvalidParameterError("at least one candidate family is required")
    x = np.asarray(samples)
    reports = []
    for family in candidates:
        try:
            dist = fit(family, x)
        except InfeasibleFitError as exc:
            reports.append(GofReport(family, {}, int(x.size), error=str(exc)))
            continue
        reports.append(ks_test(x, dist, alphas))
    fitted = sorted((r for r in reports if r.error is None), key=lambda r: r.d_n)
    reports = fitted + [r for r in reports if r.error is not None]

    for r in fitted:
        if r.ks_accepted_any:
            r.accepted, r.route = True, "ks"
            return r, reports

    for r in fitted:
        r.a2, clamped = ad_statistic(x, r.distribution.cdf)
        r.ad_accepted = r.a2 <= ad_critical
        if clamped:
            r.flags.append("ad-clamped")
    by_a2 = sorted((r for r in fitted if r.ad_accepted), key=lambda r: r.a2)
    if by_a2:
        best = by_a2[0]
        best.accepted, best.route = True, "ad"
        return best, reports
    raise NoAcceptableFitError("no candidate accepted by KS or AD", reports)


class Moments(NamedTuple):
    mean: float
    median: float
    std: float
    skewness: float
    excess_kurtosis: float


def moments(samples: Sequence[float]) -> Moments:
    """Mean, lower median, sample std (n-1) and population skewness / excess kurtosis."""
    x = np.asarray(samples, dtype=np.float64)
    n = x.size
    if n < 2:
        raise InvalidParameterError("moments need at least two samples")
    mean = float(x.mean())
    dev = x - mean
    m2 = float(np.mean(dev * dev))
    if m2 == 0.0:
        raise InvalidParameterError("zero variance: skewness and kurtosis are undefined")
    m3 = float(np.mean(dev ** 3))
    m4 = float(np.mean(dev ** 4))
    median = float(np.partition(x, (n - 1) // 2)[(n - 1) // 2])
    return Moments(
        mean=mean,
        median=median,
        std=math.sqrt(m2 * n / (n - 1)),
        skewness=m3 / m2 ** 1.5,
        excess_kurtosis=m4 / (m2 * m2) - 3.0,
    )


def warn_small(n: int, label: str = "series"):
    if n < SMALL_N:
        warnings.warn(f"{label} has only {n} samples; KS asymptotics are unreliable", stacklevel=2)
