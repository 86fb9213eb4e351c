import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from flowrisk import schedulers
from flowrisk.errors import InvalidParameterError
from flowrisk.schedulers import (
    DctcpState,
    FlowKey,
    ScheduledFlow,
    dctcp_update,
    dctcp_update_arrays,
    ecmp_hash,
    ecmp_select,
    estimate_demands,
    hedera_detect,
    hedera_reschedule,
    splitmix64,
)
from flowrisk.topology import equal_cost_paths

M64 = (1 << 64) - 1


def fnv1a64(data: bytes) -> int:
    h = 14695981039346656037
    for b in data:
        h = ((h ^ b) * 1099511628211) % 2 ** 64
    return h


def test_fnv_reference_vectors():
    assert fnv1a64(b"") == 0xCBF29CE484222325
    assert fnv1a64(b"a") == 0xAF63DC4C8601EC8C
    assert fnv1a64(b"foobar") == 0x85944171F73967E8


def test_splitmix64_vector():
    assert splitmix64(0) == 0xE220A8397B1DCDAF


@given(st.integers(0, 2**32 - 1), st.integers(0, 2**32 - 1), st.integers(0, 65535),
       st.integers(0, 65535), st.integers(0, M64))
@settings(max_examples=200, deadline=None)
def test_ecmp_hash_layout(src, dst, sport, dport, salt):
    key = FlowKey(src, dst, sport, dport)
    data = salt.to_bytes(8, "little") + src.to_bytes(4, "little") + dst.to_bytes(4, "little") \
        + sport.to_bytes(2, "little") + dport.to_bytes(2, "little") + bytes([6])
    assert ecmp_hash(key, salt) == splitmix64(fnv1a64(data))


def test_ecmp_select_is_roughly_uniform():
    counts = np.zeros(4)
    for sport in range(32768, 32768 + 8000):
        counts[ecmp_select(FlowKey(0, 15, sport, 5001), 4)] += 1
    assert stats.chisquare(counts).pvalue > 0.001
    with pytest.raises(InvalidParameterError):
        ecmp_select(FlowKey(0, 1, 1, 1), 0)


def test_hedera_threshold_is_strict():
    assert hedera_detect(1e6 + 1, 10e6) == "elephant"
    assert hedera_detect(1e6, 10e6) == "default"
    assert hedera_detect(0.0, 10e6, threshold=0.0) == "default"


def test_estimate_demands_examples():
    nic = 10.0
    assert estimate_demands([(1, 0, 5)], nic) == {1: 10.0}
    d = estimate_demands([(1, 0, 5), (2, 0, 6)], nic)
    assert d == pytest.approx({1: 5.0, 2: 5.0})
    d = estimate_demands([(1, 0, 9), (2, 1, 9), (3, 2, 9)], nic)
    assert d == pytest.approx({1: nic / 3, 2: nic / 3, 3: nic / 3})
    # sender with 2 flows, one into a receiver shared with a single-flow sender
    d = estimate_demands([(1, 0, 4), (2, 0, 5), (3, 1, 5)], nic)
    assert d == pytest.approx({1: 5.0, 2: 5.0, 3: 5.0})
    # receiver-limited flow frees capacity for its sibling
    d = estimate_demands([(1, 0, 4), (2, 0, 5), (3, 1, 5), (4, 2, 5), (5, 3, 5)], nic)
    assert d == pytest.approx({1: 7.5, 2: 2.5, 3: 2.5, 4: 2.5, 5: 2.5})
    assert estimate_demands([], nic) == {}


@given(st.lists(st.tuples(st.integers(0, 5), st.integers(6, 11)), min_size=1, max_size=25))
@settings(max_examples=100, deadline=None)
def test_estimate_demands_respects_nics(pairs):
    flows = [(i, s, d) for i, (s, d) in enumerate(pairs)]
    dem = estimate_demands(flows, 1.0)
    for host in range(12):
        out = sum(dem[i] for i, s, _ in flows if s == host)
        inn = sum(dem[i] for i, _, d in flows if d == host)
        assert out <= 1 + 1e-9 and inn <= 1 + 1e-9
    assert all(v > 0 for v in dem.values())


def _sf(topo, fid, src, dst, which=0, rate=0.0):
    return ScheduledFlow(fid, src, dst, equal_cost_paths(topo, src, dst)[which], True, rate)


def test_first_fit_spreads_colliding_elephants(topo4):
    # two elephants from different hosts in pod 0 towards pod 3, both hashed to path 0
    flows = [_sf(topo4, 1, 0, 12), _sf(topo4, 2, 2, 14)]
    out = dict(hedera_reschedule(flows, topo4))
    assert out[1] == equal_cost_paths(topo4, 0, 12)[0]
    used = set(out[1].links)
    assert not used & set(out[2].links)


def test_no_fit_keeps_current_path(topo4):
    demands = {1: 10e6, 2: 10e6}
    # same source host: the host uplink is the bottleneck, nothing fits for flow 2
    flows = [_sf(topo4, 1, 0, 12), _sf(topo4, 2, 0, 8, which=3)]
    out = dict(hedera_reschedule(flows, topo4, demands=demands))
    assert out[2] == flows[1].path


def test_small_flows_are_not_moved(topo4):
    flows = [_sf(topo4, 1, 0, 12, rate=5e5)]
    assert hedera_reschedule(flows, topo4, use_estimator=False) == []
    flows = [_sf(topo4, 1, 0, 12, rate=5e6)]
    assert [fid for fid, _ in hedera_reschedule(flows, topo4, use_estimator=False)] == [1]


def test_dctcp_update_by_hand():
    s = DctcpState()
    s1 = dctcp_update(s, 1.0)
    assert s1.alpha == pytest.approx(1 / 16)
    assert s1.rate_factor == pytest.approx(1 - 1 / 32)
    s2 = dctcp_update(s1, 0.0)
    assert s2.alpha == pytest.approx(15 / 16 * 1 / 16)
    assert s2.rate_factor == 1.0
    low = DctcpState(alpha=1.0, rate_factor=0.011)
    assert dctcp_update(low, 1.0).rate_factor == schedulers.DCTCP_MIN_RATE_FACTOR
    with pytest.raises(InvalidParameterError):
        dctcp_update(s, 1.5)
    with pytest.raises(InvalidParameterError):
        DctcpState(gain=0.0)


def test_dctcp_alpha_converges_to_mark_fraction():
    s = DctcpState()
    for _ in range(400):
        s = dctcp_update(s, 0.3)
    assert s.alpha == pytest.approx(0.3, rel=1e-9)


@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0.01, 1), st.floats(0, 1)), min_size=1, max_size=20))
@settings(max_examples=100, deadline=None)
def test_vectorised_matches_scalar(rows):
    a = np.array([r[0] for r in rows])
    rf = np.array([r[1] for r in rows])
    f = np.array([r[2] for r in rows])
    na, nr = dctcp_update_arrays(a, rf, f)
    for i, (ai, ri, fi) in enumerate(rows):
        s = dctcp_update(DctcpState(alpha=ai, rate_factor=ri), fi)
        assert na[i] == pytest.approx(s.alpha, abs=1e-15)
        assert nr[i] == pytest.approx(s.rate_factor, abs=1e-15)
