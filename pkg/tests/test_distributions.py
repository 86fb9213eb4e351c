import numpy as np
import pytest
from scipy import stats

from flowrisk.distributions import (
    DISCRETE_UNIFORM,
    GEOMETRIC,
    NEGATIVE_BINOMIAL,
    POISSON,
    FittedDistribution,
    invert_cdf,
    pmf,
    sample,
)
from flowrisk.errors import InvalidParameterError
from flowrisk.rng import UniformStream

CASES = [
    (GEOMETRIC, {"p": 0.3}, stats.geom(0.3)),
    (DISCRETE_UNIFORM, {"n": 7.0}, stats.randint(1, 8)),
    (NEGATIVE_BINOMIAL, {"c": 3.0, "p": 0.4}, stats.nbinom(3, 0.4)),
    (NEGATIVE_BINOMIAL, {"c": 2.7, "p": 0.25}, stats.nbinom(2.7, 0.25)),
    (POISSON, {"lambda": 4.5}, stats.poisson(4.5)),
]


@pytest.mark.parametrize("family,params,ref", CASES)
def test_pmf_and_cdf_match_scipy(family, params, ref):
    d = FittedDistribution(family, params)
    k = np.arange(-2, 60)
    np.testing.assert_allclose(d.pmf(k), ref.pmf(k), rtol=1e-10, atol=1e-300)
    np.testing.assert_allclose(d.cdf(k), ref.cdf(k), rtol=1e-10, atol=1e-14)
    assert d.cdf(2.7) == d.cdf(2)
    assert d.mean == pytest.approx(ref.mean())
    assert d.variance == pytest.approx(ref.var())


def test_pmf_off_support_and_scalar():
    assert pmf(GEOMETRIC, {"p": 0.5}, 0) == 0.0
    assert pmf(POISSON, {"lambda": 2.0}, 1.5) == 0.0
    assert pmf(DISCRETE_UNIFORM, {"n": 3.0}, 4) == 0.0
    assert isinstance(pmf(POISSON, {"lambda": 2.0}, 1), float)
    assert pmf(GEOMETRIC, {"p": 1.0}, 1) == 1.0


@pytest.mark.parametrize("family,params,ref", CASES)
def test_sampler_mean_and_support(family, params, ref):
    d = FittedDistribution(family, params)
    x = sample(d, UniformStream(11, 0), 200_000)
    assert x.min() >= d.support_min
    if d.support_max is not None:
        assert x.max() <= d.support_max
    se = np.sqrt(ref.var() / x.size)
    assert abs(x.mean() - ref.mean()) < 5 * se


def test_sampler_deterministic_per_stream():
    d = FittedDistribution(POISSON, {"lambda": 3.0})
    a = sample(d, UniformStream(1, 2), 100)
    b = sample(d, UniformStream(1, 2), 100)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, sample(d, UniformStream(1, 3), 100))


def test_inversion_edges():
    d = FittedDistribution(POISSON, {"lambda": 2.0})
    out = invert_cdf(d, np.array([1e-300, 0.5, 1 - 2.0 ** -53]))
    assert out[0] == 0 and out[1] == 2 and out[2] > 10
    nb = FittedDistribution(NEGATIVE_BINOMIAL, {"c": 0.5, "p": 0.01})
    assert invert_cdf(nb, np.array([1 - 2.0 ** -53]))[0] > 1000


@pytest.mark.parametrize("family,params", [
    (GEOMETRIC, {"p": 0.0}), (GEOMETRIC, {}), (DISCRETE_UNIFORM, {"n": 2.5}),
    (NEGATIVE_BINOMIAL, {"c": 1.0, "p": 1.0}), (POISSON, {"lambda": -1.0}), ("zipf", {"s": 2}),
])
def test_invalid_parameters(family, params):
    with pytest.raises(InvalidParameterError):
        FittedDistribution(family, params)


def test_round_trip_dict():
    d = FittedDistribution(NEGATIVE_BINOMIAL, {"c": 2.0, "p": 0.5})
    assert FittedDistribution.from_dict(d.to_dict()) == d
    assert d.to_dict()["support"] == {"min": 0, "max": None}
