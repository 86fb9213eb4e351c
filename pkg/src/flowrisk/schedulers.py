"""Flow handling policies: ECMP hashing, Hedera rescheduling, DCTCP rate control."""

import struct
from dataclasses import dataclass, replace
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from flowrisk.errors import InvalidParameterError, SimulationError
from flowrisk.topology import FatTreeTopology, Path, equal_cost_paths

MASK64 = (1 << 64) - 1
FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3

PROTO_TCP = 6
HEDERA_THRESHOLD = 0.10
HEDERA_EPOCH_S = 1.0
DCTCP_GAIN = 1.0 / 16.0
DCTCP_MARK_THRESHOLD = 0.20
DCTCP_WINDOW = 10
DCTCP_EPOCH_S = 0.010
# Floor on the rate factor, analogous to DCTCP's minimum congestion window.
DCTCP_MIN_RATE_FACTOR = 1e-2


@dataclass(frozen=True, order=True)
class FlowKey:
    src: int
    dst: int
    src_port: int
    dst_port: int
    protocol: int = PROTO_TCP

    def encode(self) -> bytes:
        return struct.pack("<IIHHB", self.src, self.dst, self.src_port, self.dst_port, self.protocol)


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def ecmp_hash(key: FlowKey, salt: int = 0) -> int:
    """FNV-1a over ``salt (u64 LE) || key.encode()``, finished with splitmix64."""
    h = FNV_OFFSET
    for byte in struct.pack("<Q", salt & MASK64) + key.encode():
        h ^= byte
        h = (h * FNV_PRIME) & MASK64
    return splitmix64(h)


def ecmp_select(key: FlowKey, n_paths: int, salt: int = 0) -> int:
    if n_paths < 1:
        raise InvalidParameterError(f"n_paths must be >= 1, got {n_paths}")
    return ecmp_hash(key, salt) % n_paths


def hedera_detect(flow_rate: float, link_capacity: float,
                  threshold: float = HEDERA_THRESHOLD) -> str:
    return "elephant" if flow_rate > threshold * link_capacity else "default"


def estimate_demands(flows: Iterable[Tuple[int, int, int]],
                     nic_capacity: float) -> Dict[int, float]:
    """Host-limited max-min demand estimate for ``(flow id, src, dst)`` triples.

    Alternates a source pass (split leftover NIC capacity among unconverged
    flows) and a destination pass (receiver-limited flows are pinned to the
    destination's fair share and marked converged) until nothing changes.
    """
    flows = list(flows)
    if not flows:
        return {}
    demand = {fid: 0.0 for fid, _, _ in flows}
    converged = {fid: False for fid, _, _ in flows}
    by_src: Dict[int, List[int]] = {}
    by_dst: Dict[int, List[int]] = {}
    for fid, s, d in flows:
        by_src.setdefault(s, []).append(fid)
        by_dst.setdefault(d, []).append(fid)

    for _ in range(len(flows) + 2):
        before = dict(demand)
        for members in by_src.values():
            done = sum(demand[f] for f in members if converged[f])
            open_ = [f for f in members if not converged[f]]
            if open_:
                share = max(0.0, 1.0 - done) / len(open_)
                for f in open_:
                    demand[f] = share
        for members in by_dst.values():
            if sum(demand[f] for f in members) <= 1.0 + 1e-12:
                continue
            limited = set(members)
            below = 0.0
            share = 1.0 / len(members)
            while True:
                moved = [f for f in limited if demand[f] < share]
                if not moved:
                    break
                for f in moved:
                    below += demand[f]
                    limited.discard(f)
                if not limited:
                    break
                share = (1.0 - below) / len(limited)
            for f in limited:
                demand[f] = share
                converged[f] = True
        if all(abs(demand[f] - before[f]) <= 1e-12 for f in demand):
            break
    return {f: v * nic_capacity for f, v in demand.items()}


@dataclass
class ScheduledFlow:
    """What Hedera's scheduler sees of an active flow."""
    id: int
    src: int
    dst: int
    path: Path
    elephant: bool = True
    rate: float = 0.0  # last measured rate, bits/s


def hedera_reschedule(flows: Sequence[ScheduledFlow], topo: FatTreeTopology,
                      threshold: float = HEDERA_THRESHOLD,
                      demands: Optional[Mapping[int, float]] = None,
                      use_estimator: bool = True) -> List[Tuple[int, Path]]:
    """Global first fit over each detected elephant's equal-cost paths.

    Returns ``(flow id, path)`` for every detected elephant, in scan order
    (ascending flow id). A flow with no fitting path keeps its current path,
    and its demand stays reserved there.
    """
    candidates = sorted((f for f in flows if f.elephant), key=lambda f: f.id)
    if demands is None:
        if use_estimator:
            demands = estimate_demands(((f.id, f.src, f.dst) for f in candidates),
                                       topo.link_capacity)
        else:
            demands = {f.id: f.rate for f in candidates}

    reserved: Dict[Tuple[int, int], float] = {}
    cap = topo.link_capacity
    slack = cap * 1e-9
    out = []
    for f in candidates:
        need = demands.get(f.id, 0.0)
        if hedera_detect(need, cap, threshold) != "elephant":
            continue
        paths = equal_cost_paths(topo, f.src, f.dst)
        if not paths:
            raise SimulationError(f"flow {f.id} has no equal-cost path")
        chosen = f.path
        for path in paths:
            if all(reserved.get(l, 0.0) + need <= cap + slack for l in path.links):
                chosen = path
                break
        for l in chosen.links:
            reserved[l] = reserved.get(l, 0.0) + need
        out.append((f.id, chosen))
    return out


@dataclass(frozen=True)
class DctcpState:
    alpha: float = 0.0
    gain: float = DCTCP_GAIN
    mark_threshold: float = DCTCP_MARK_THRESHOLD
    rate_factor: float = 1.0
    window: int = DCTCP_WINDOW

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise InvalidParameterError(f"alpha must be in [0, 1], got {self.alpha}")
        if not 0.0 < self.gain <= 1.0:
            raise InvalidParameterError(f"gain must be in (0, 1], got {self.gain}")
        if not 0.0 < self.rate_factor <= 1.0:
            raise InvalidParameterError(f"rate factor must be in (0, 1], got {self.rate_factor}")


def dctcp_update(state: DctcpState, marked_fraction: float) -> DctcpState:
    F = marked_fraction
    if not 0.0 <= F <= 1.0:
        raise InvalidParameterError(f"marked fraction must be in [0, 1], got {F}")
    alpha = min(1.0, max(0.0, (1.0 - state.gain) * state.alpha + state.gain * F))
    if F > 0.0:
        rate = max(DCTCP_MIN_RATE_FACTOR, state.rate_factor * (1.0 - alpha / 2.0))
    else:
        rate = min(1.0, state.rate_factor + 1.0 / state.window)
    return replace(state, alpha=alpha, rate_factor=rate)


def dctcp_update_arrays(alpha, rate_factor, marked, gain=DCTCP_GAIN, window=DCTCP_WINDOW):
    """Vectorised :func:`dctcp_update` over numpy arrays; returns new arrays."""
    alpha = np.clip((1.0 - gain) * alpha + gain * marked, 0.0, 1.0)
    cut = np.maximum(DCTCP_MIN_RATE_FACTOR, rate_factor * (1.0 - alpha / 2.0))
    grow = np.minimum(1.0, rate_factor + 1.0 / window)
    return alpha, np.where(marked > 0.0, cut, grow)
