"""Discrete families used for throughput and error factors.

==================  =============  =====================================
family              support        pmf
==================  =============  =====================================
geometric           1, 2, ...      (1-p)^(k-1) p
discrete-uniform    1 .. n         1/n
negative-binomial   0, 1, ...      C(k+c-1, k) p^c (1-p)^k
poisson             0, 1, ...      e^-lam lam^k / k!
==================  =============  =====================================

The negative binomial counts failures before the c-th success; c may be
fractional.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np
from scipy.special import gammaln

from flowrisk.errors import InvalidParameterError

GEOMETRIC = "geometric"
DISCRETE_UNIFORM = "discrete-uniform"
NEGATIVE_BINOMIAL = "negative-binomial"
POISSON = "poisson"
FAMILIES = (GEOMETRIC, DISCRETE_UNIFORM, NEGATIVE_BINOMIAL, POISSON)

TAIL_MASS = 1e-12
# Integral shape parameters up to this size are sampled as sums of geometrics.
MAX_GEOMETRIC_SUM = 64
MAX_TABLE = 1 << 24


@dataclass(frozen=True)
class FittedDistribution:
    family: str
    params: Dict[str, float]
    _cdf_table: list = field(default_factory=list, compare=False, repr=False)

    def __post_init__(self):
        validate(self.family, self.params)

    @property
    def support_min(self) -> int:
        return 1 if self.family in (GEOMETRIC, DISCRETE_UNIFORM) else 0

    @property
    def support_max(self) -> Optional[int]:
        return int(self.params["n"]) if self.family == DISCRETE_UNIFORM else None

    @property
    def mean(self) -> float:
        p = self.params
        if self.family == GEOMETRIC:
            return 1.0 / p["p"]
        if self.family == DISCRETE_UNIFORM:
            return (p["n"] + 1) / 2.0
        if self.family == NEGATIVE_BINOMIAL:
            return p["c"] * (1 - p["p"]) / p["p"]
        return p["lambda"]

    @property
    def variance(self) -> float:
        p = self.params
        if self.family == GEOMETRIC:
            return (1 - p["p"]) / p["p"] ** 2
        if self.family == DISCRETE_UNIFORM:
            return (p["n"] ** 2 - 1) / 12.0
        if self.family == NEGATIVE_BINOMIAL:
            return p["c"] * (1 - p["p"]) / p["p"] ** 2
        return p["lambda"]

    def pmf(self, k):
        return pmf(self.family, self.params, k)

    def cdf(self, k):
        """P(X <= floor(k)), vectorised."""
        k = np.floor(np.asarray(k, dtype=np.float64))
        fam, p = self.family, self.params
        if fam == GEOMETRIC:
            kk = np.maximum(k, 0.0)
            out = -np.expm1(kk * np.log1p(-p["p"])) if p["p"] < 1 else (kk >= 1).astype(float)
            return np.where(k < 1, 0.0, out)
        if fam == DISCRETE_UNIFORM:
            return np.clip(k, 0, p["n"]) / p["n"]
        table = self._table(int(k.max()) if k.size else 0)
        idx = np.clip(k, -1, len(table) - 1).astype(np.int64)
        return np.where(idx < 0, 0.0, table[np.maximum(idx, 0)])

    def _table(self, upto: int) -> np.ndarray:
        """Cumulative pmf from 0 up to at least ``upto`` and the 1 - TAIL_MASS point."""
        table = self._cdf_table[0] if self._cdf_table else None
        if table is not None and len(table) > upto and table[-1] >= 1 - TAIL_MASS:
            return table
        size = max(64, int(self.mean + 12 * math.sqrt(self.variance) + 16), upto + 1)
        while True:
            ks = np.arange(size, dtype=np.float64)
            table = np.minimum(np.cumsum(pmf(self.family, self.params, ks)), 1.0)
            if (table[-1] >= 1 - TAIL_MASS and size > upto) or size >= MAX_TABLE:
                break
            size *= 2
        self._cdf_table[:] = [table]
        return table

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "params": dict(self.params),
            "support": {"min": self.support_min, "max": self.support_max},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FittedDistribution":
        return cls(d["family"], {k: float(v) for k, v in d["params"].items()})


def validate(family: str, params: Dict[str, float]):
    if family not in FAMILIES:
        raise InvalidParameterError(f"unknown family {family!r}; expected one of {FAMILIES}")
    try:
        if family == GEOMETRIC:
            ok = 0.0 < params["p"] <= 1.0
        elif family == DISCRETE_UNIFORM:
            ok = params["n"] >= 1 and float(params["n"]).is_integer()
        elif family == NEGATIVE_BINOMIAL:
            ok = params["c"] > 0 and 0.0 < params["p"] < 1.0
        else:
            ok = params["lambda"] > 0
    except KeyError as exc:
        raise InvalidParameterError(f"{family} is missing parameter {exc}") from None
    if not ok:
        raise InvalidParameterError(f"invalid {family} parameters {params}")


def pmf(family: str, params: Dict[str, float], k):
    """Probability mass at integer ``k`` (scalar or array); 0 off the support."""
    validate(family, params)
    scalar = np.ndim(k) == 0
    k = np.asarray(k, dtype=np.float64)
    integral = k == np.floor(k)
    if family == GEOMETRIC:
        p = params["p"]
        ok = integral & (k >= 1)
        kk = np.where(ok, k, 1.0)
        out = np.where(ok, np.exp((kk - 1) * np.log1p(-p)) * p if p < 1 else (kk == 1) * 1.0, 0.0)
    elif family == DISCRETE_UNIFORM:
        n = params["n"]
        out = np.where(integral & (k >= 1) & (k <= n), 1.0 / n, 0.0)
    elif family == NEGATIVE_BINOMIAL:
        c, p = params["c"], params["p"]
        ok = integral & (k >= 0)
        kk = np.where(ok, k, 0.0)
        logp = (gammaln(kk + c) - gammaln(c) - gammaln(kk + 1)
                + c * math.log(p) + kk * math.log1p(-p))
        out = np.where(ok, np.exp(logp), 0.0)
    else:
        lam = params["lambda"]
        ok = integral & (k >= 0)
        kk = np.where(ok, k, 0.0)
        out = np.where(ok, np.exp(kk * math.log(lam) - lam - gammaln(kk + 1)), 0.0)
    return float(out) if scalar else out


def sample(dist: FittedDistribution, stream, size: int) -> np.ndarray:
    """Draw ``size`` integers, consuming uniforms from ``stream`` (a UniformStream).

    geometric: inversion ceil(ln U / ln(1-p)); discrete-uniform: floor(nU) + 1;
    poisson: CDF inversion by search; negative-binomial: sum of c failure
    counts ceil(ln U / ln(1-p)) - 1 when c is a small integer, else CDF inversion.
    """
    fam, p = dist.family, dist.params
    if fam == GEOMETRIC:
        u = stream.uniforms(size)
        if p["p"] >= 1.0:
            return np.ones(size, dtype=np.int64)
        return np.maximum(1, np.ceil(np.log(u) / math.log1p(-p["p"]))).astype(np.int64)
    if fam == DISCRETE_UNIFORM:
        n = int(p["n"])
        u = stream.uniforms(size)
        return np.minimum(np.floor(n * u).astype(np.int64) + 1, n)
    if fam == NEGATIVE_BINOMIAL and float(p["c"]).is_integer() and p["c"] <= MAX_GEOMETRIC_SUM:
        c = int(p["c"])
        u = stream.uniforms((size, c))
        fails = np.maximum(0, np.ceil(np.log(u) / math.log1p(-p["p"])) - 1)
        return fails.sum(axis=1).astype(np.int64)
    return invert_cdf(dist, stream.uniforms(size))


def invert_cdf(dist: FittedDistribution, u: np.ndarray) -> np.ndarray:
    """Smallest k with F(k) >= u, for the families with a tabulated CDF."""
    table = dist._table(0)
    idx = np.searchsorted(table, u, side="left")
    if np.any(idx >= len(table)):
        # u beyond the tabulated 1 - TAIL_MASS point: extend once, then the
        # remaining mass is below double resolution.
        table = dist._table(4 * len(table))
        idx = np.minimum(np.searchsorted(table, u, side="left"), len(table) - 1)
    return idx.astype(np.int64) + dist.support_min
