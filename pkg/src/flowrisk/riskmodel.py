"""Monte Carlo loss prediction for elephant-flow profiles and Value-at-Risk.

Each iteration takes a profile (volume V, size S in MByte/s), draws an
available-throughput factor A and an error factor E from their fitted
distributions (in bin units, converted to MByte/s by ``unit_scale``) and
computes the shortfall ``B = V * (S - (A + E))``. Positive shortfalls are the
predicted losses; the loss rate is the fraction of iterations that lose.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from flowrisk import distributions, rng
from flowrisk.distributions import FittedDistribution
from flowrisk.errors import InvalidParameterError, NoLossesError
from flowrisk.gof_stats import moments
from flowrisk.topology import BITS_PER_MBYTE

DEFAULT_ITERATIONS = 1_000_000
DEFAULT_CONFIDENCES = (0.90, 0.95, 0.99)
DEFAULT_BINS = 50
CHUNK = 1 << 16
MBPS_TO_MBYTES = 1e6 / BITS_PER_MBYTE  # 1/8


@dataclass(frozen=True)
class ElephantProfile:
    label: str
    size: float  # MByte/s
    volume: float

    def __post_init__(self):
        if not self.volume > 0 or not self.size > 0:
            raise InvalidParameterError(f"profile {self.label!r} needs positive size and volume")

    def to_dict(self) -> dict:
        return {"label": self.label, "size": self.size, "volume": self.volume}


DEFAULT_PROFILES = (
    ElephantProfile("Large", 1.25, 100),
    ElephantProfile("Normal 1", 0.75, 85),
    ElephantProfile("Normal 2", 0.5, 65),
    ElephantProfile("Small", 0.12, 45),
)


def pmf(family: str, params: Dict[str, float], k):
    return distributions.pmf(family, params, k)


def sample(family: str, params: Dict[str, float], stream, size: int = 1) -> np.ndarray:
    return distributions.sample(FittedDistribution(family, params), stream, size)


def norm_ppf(c: float) -> float:
    """Standard normal quantile: Acklam's rational approximation plus one Halley step."""
    if not 0.0 < c < 1.0:
        raise InvalidParameterError(f"probability must be in (0, 1), got {c}")
    a = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
         1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
    b = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
         6.680131188771972e+01, -1.328068155288572e+01)
    cc = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
          -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
    d = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
         3.754408661907416e+00)
    lo = 0.02425
    if c < lo:
        q = math.sqrt(-2 * math.log(c))
        x = (((((cc[0] * q + cc[1]) * q + cc[2]) * q + cc[3]) * q + cc[4]) * q + cc[5]) / \
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1)
    elif c <= 1 - lo:
        q = c - 0.5
        r = q * q
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q / \
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1)
    else:
        q = math.sqrt(-2 * math.log1p(-c))
        x = -(((((cc[0] * q + cc[1]) * q + cc[2]) * q + cc[3]) * q + cc[4]) * q + cc[5]) / \
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1)
    # upper tail form above the median avoids cancellation (1 - c is exact there)
    if c > 0.5:
        e = (1.0 - c) - 0.5 * math.erfc(x / math.sqrt(2))
    else:
        e = 0.5 * math.erfc(-x / math.sqrt(2)) - c
    u = e * math.sqrt(2 * math.pi) * math.exp(x * x / 2)
    return x - u / (1 + x * u / 2)


def _check_confidence(c: float):
    if not 0.0 < c < 1.0:
        raise InvalidParameterError(f"confidence must be in (0, 1), got {c}")


def var_parametric(mean: float, std: float, confidence: float, printed_sign: bool = False) -> float:
    """Normal-approximation VaR as a positive loss magnitude, mean + z_c * std.

    ``printed_sign=True`` returns the literal form -mean + z_c * std instead.
    """
    _check_confidence(confidence)
    if std < 0:
        raise InvalidParameterError("std must be non-negative")
    z = norm_ppf(confidence)
    return (-mean if printed_sign else mean) + z * std


def var_empirical(samples: Sequence[float], confidence: float) -> float:
    """Smallest x with empirical CDF >= c, i.e. the ceil(c*n)-th order statistic."""
    _check_confidence(confidence)
    x = np.asarray(samples, dtype=np.float64)
    n = x.size
    if n == 0:
        raise NoLossesError("no retained losses to take a quantile of")
    rank = math.ceil(Fraction(str(confidence)) * n)
    rank = min(max(rank, 1), n)
    return float(np.partition(x, rank - 1)[rank - 1])


def confidence_key(c: float) -> str:
    return f"{c:.2f}" if round(c, 2) == c else repr(c)


@dataclass
class RiskReport:
    iterations: int
    retained: int
    samples: np.ndarray = field(repr=False)
    bound: float
    histogram_edges: List[float]
    histogram_counts: List[int]
    mean: Optional[float] = None
    median: Optional[float] = None
    std: Optional[float] = None
    skewness: Optional[float] = None
    excess_kurtosis: Optional[float] = None
    var: Dict[float, Tuple[float, float]] = field(default_factory=dict)  # c -> (parametric, empirical)
    seed: int = 0
    profiles: List[ElephantProfile] = field(default_factory=list)
    a_dist: Optional[FittedDistribution] = None
    e_dist: Optional[FittedDistribution] = None
    unit_scale: float = MBPS_TO_MBYTES
    flags: List[str] = field(default_factory=list)

    @property
    def loss_rate(self) -> float:
        return self.retained / self.iterations

    @property
    def empty(self) -> bool:
        return self.retained == 0


def _chunk_losses(start, stop, chunk, seed, volumes, sizes, a_dist, e_dist, a_scale, e_scale):
    stream = rng.UniformStream(seed, chunk)
    m = stop - start
    a = distributions.sample(a_dist, stream, m)
    e = distributions.sample(e_dist, stream, m)
    idx = np.arange(start, stop) % len(volumes)
    b = volumes[idx] * (sizes[idx] - (a * a_scale + e * e_scale))
    return b[b > 0]


def predict_loss(profiles: Sequence[ElephantProfile], a_dist: FittedDistribution,
                 e_dist: FittedDistribution, iterations: int = DEFAULT_ITERATIONS,
                 unit_scale: float = MBPS_TO_MBYTES, seed: int = 0,
                 workers: int = 1, bins: int = DEFAULT_BINS,
                 confidences: Sequence[float] = DEFAULT_CONFIDENCES,
                 e_unit_scale: Optional[float] = None, chunk_size: int = CHUNK) -> RiskReport:
    """Run the shortfall model ``iterations`` times.

    Iteration i uses profile ``i mod len(profiles)``. Iterations are cut into
    fixed chunks, chunk j drawing from Philox stream (seed, j), so the result
    does not depend on ``workers``.
    """
    if iterations < 1:
        raise InvalidParameterError("iterations must be >= 1")
    if not profiles:
        raise InvalidParameterError("at least one elephant profile is required")
    for c in confidences:
        _check_confidence(c)
    volumes = np.array([p.volume for p in profiles], dtype=np.float64)
    sizes = np.array([p.size for p in profiles], dtype=np.float64)
    e_scale = unit_scale if e_unit_scale is None else e_unit_scale

    for dist in (a_dist, e_dist):
        if dist.family in (distributions.POISSON, distributions.NEGATIVE_BINOMIAL):
            dist._table(0)  # build the shared CDF table before threads read it
    jobs = []
    for j, start in enumerate(range(0, iterations, chunk_size)):
        stop = min(start + chunk_size, iterations)
        jobs.append((start, stop, j, seed, volumes, sizes, a_dist, e_dist, unit_scale, e_scale))
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda job: _chunk_losses(*job), jobs))
    else:
        parts = [_chunk_losses(*job) for job in jobs]
    losses = np.concatenate(parts) if parts else np.zeros(0)

    bound = float(volumes.max() * sizes.max())
    counts, edges = np.histogram(losses, bins=bins, range=(0.0, bound))
    report = RiskReport(
        iterations=int(iterations),
        retained=int(losses.size),
        samples=losses,
        bound=bound,
        histogram_edges=edges.tolist(),
        histogram_counts=counts.astype(int).tolist(),
        seed=int(seed),
        profiles=list(profiles),
        a_dist=a_dist,
        e_dist=e_dist,
        unit_scale=unit_scale,
    )
    if report.empty:
        report.flags.append("no-losses")
        return report
    if losses.size >= 2 and losses.min() != losses.max():
        m = moments(losses)
        report.mean, report.median, report.std = m.mean, m.median, m.std
        report.skewness, report.excess_kurtosis = m.skewness, m.excess_kurtosis
    else:
        report.mean = float(losses.mean())
        report.median = float(np.sort(losses)[(losses.size - 1) // 2])
        report.std = 0.0
        report.flags.append("degenerate-losses")
    report.var = confidence_sweep(report, confidences)
    return report


def confidence_sweep(report: RiskReport, confidences: Sequence[float]) -> Dict[float, Tuple[float, float]]:
    """confidence -> (parametric VaR, empirical VaR) on the retained losses."""
    if report.empty:
        raise NoLossesError("report has no retained losses")
    return {
        c: (var_parametric(report.mean, report.std, c), var_empirical(report.samples, c))
        for c in confidences
    }
