"""Event-driven fluid simulation of a fat-tree under ECMP, Hedera or DCTCP.

Between events every active flow runs at its max-min fair rate given the
current path assignment and per-flow rate caps. Events are flow arrivals,
mice completions, elephant expirations, probe sampling boundaries and the
periodic control epochs of Hedera (rescheduling) and DCTCP (rate factors).
"""

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numba
import numpy as np

from flowrisk import rng, schedulers
from flowrisk.errors import InvalidParameterError, SimulationError
from flowrisk.topology import FatTreeTopology, Path, equal_cost_paths
from flowrisk.workload import ELEPHANT, MICE, Scenario, make_scenario

ALGORITHMS = ("ecmp", "hedera", "dctcp")
EPS_T = 1e-9
DONE_BYTES = 1e-6
CAP_TOL = 1e-9
ELEPHANT_PORT, MICE_PORT = 5001, 80


@dataclass(frozen=True)
class SimParams:
    sample_interval: float = 1.0
    hedera_epoch: float = schedulers.HEDERA_EPOCH_S
    hedera_threshold: float = schedulers.HEDERA_THRESHOLD
    hedera_use_estimator: bool = True
    dctcp_gain: float = schedulers.DCTCP_GAIN
    dctcp_mark_threshold: float = schedulers.DCTCP_MARK_THRESHOLD
    dctcp_epoch: float = schedulers.DCTCP_EPOCH_S
    dctcp_window: int = schedulers.DCTCP_WINDOW
    mice_think_mean: float = 0.5
    ecmp_salt: int = 0
    strict_conservation: bool = True

    def validate(self):
        for name in ("sample_interval", "hedera_epoch", "dctcp_epoch"):
            if not getattr(self, name) > 0:
                raise InvalidParameterError(f"{name} must be positive")
        if not 0.0 < self.dctcp_gain <= 1.0:
            raise InvalidParameterError("dctcp_gain must be in (0, 1]")
        if not 0.0 <= self.hedera_threshold < 1.0:
            raise InvalidParameterError("hedera_threshold must be in [0, 1)")
        if self.dctcp_window < 1 or self.mice_think_mean < 0:
            raise InvalidParameterError("dctcp_window >= 1 and mice_think_mean >= 0 required")
        return self


@dataclass(frozen=True)
class FlowRecord:
    flow_id: int
    cls: str
    bytes: float
    fct_s: Optional[float] = None
    mean_mbps: Optional[float] = None


@dataclass
class RunResult:
    algorithm: str
    scenario: str
    repetition: int
    seed: int
    probe_series: List[Tuple[float, float, float]]
    records: List[FlowRecord]
    events: int = 0
    violations: int = 0
    max_utilization: float = 0.0

    @property
    def probe_throughputs(self) -> np.ndarray:
        return np.array([bps for _, _, bps in self.probe_series])

    @property
    def probe_mean_mbps(self) -> float:
        return float(self.probe_throughputs.mean() / 1e6)

    @property
    def probe_std_mbps(self) -> float:
        x = self.probe_throughputs
        return float(x.std(ddof=1) / 1e6) if len(x) > 1 else 0.0

    def mice_fcts(self) -> List[float]:
        return [r.fct_s for r in self.records if r.cls == MICE and r.fct_s is not None]


@dataclass
class SampleSet:
    algorithm: str
    scenario: str
    repetitions: List[int]
    seeds: List[int]
    throughput: List[float]  # probe mean per repetition, Mbps
    error: List[float]  # probe-series sample std per repetition, Mbps
    bin_width: float = 1.0
    runs: List[RunResult] = field(default_factory=list, compare=False, repr=False)

    @property
    def worst_case_error(self) -> float:
        return max(self.error) if self.error else 0.0


# ---------------------------------------------------------------- max-min core

@numba.njit(cache=True)
def _progressive_fill(link_ids, hops, active, caps, link_cap, tol):
    n = link_ids.shape[0]
    n_links = link_cap.shape[0]
    rates = np.zeros(n)
    frozen = np.empty(n, np.bool_)
    for f in range(n):
        frozen[f] = not active[f]
    rem = link_cap.copy()
    count = np.zeros(n_links, np.int64)
    rounds = 0
    while True:
        count[:] = 0
        n_open = 0
        for f in range(n):
            if not frozen[f]:
                n_open += 1
                for h in range(hops[f]):
                    count[link_ids[f, h]] += 1
        if n_open == 0:
            break
        rounds += 1
        if rounds > n + 1:
            return rates, -1
        delta = np.inf
        for l in range(n_links):
            if count[l] > 0:
                d = rem[l] / count[l]
                if d < delta:
                    delta = d
        for f in range(n):
            if not frozen[f] and np.isfinite(caps[f]):
                d = caps[f] - rates[f]
                if d < delta:
                    delta = d
        if delta < 0.0:
            delta = 0.0
        for l in range(n_links):
            if count[l] > 0:
                rem[l] -= delta * count[l]
        for f in range(n):
            if frozen[f]:
                continue
            rates[f] += delta
            if np.isfinite(caps[f]) and caps[f] - rates[f] <= tol * caps[f]:
                frozen[f] = True
                continue
            for h in range(hops[f]):
                l = link_ids[f, h]
                if rem[l] <= tol * link_cap[l]:
                    frozen[f] = True
                    break
    return rates, rounds


@numba.njit(cache=True)
def _link_loads(link_ids, hops, active, rates, n_links):
    loads = np.zeros(n_links)
    for f in range(link_ids.shape[0]):
        if active[f]:
            for h in range(hops[f]):
                loads[link_ids[f, h]] += rates[f]
    return loads


def _pack(paths: Sequence[Sequence[int]]):
    width = max((len(p) for p in paths), default=1)
    link_ids = np.zeros((len(paths), max(width, 1)), dtype=np.int64)
    hops = np.zeros(len(paths), dtype=np.int64)
    for i, p in enumerate(paths):
        link_ids[i, :len(p)] = p
        hops[i] = len(p)
    return link_ids, hops


def maxmin_rates(paths: Sequence[Sequence[int]], caps: Optional[Sequence[float]],
                 capacities: Sequence[float]) -> np.ndarray:
    """Progressive-filling max-min allocation.

    ``paths[i]`` lists the link indices flow ``i`` crosses, ``caps[i]`` its
    rate ceiling (``inf`` or ``None`` for none) and ``capacities[l]`` the
    capacity of link ``l``.
    """
    n = len(paths)
    if n == 0:
        return np.zeros(0)
    if any(len(p) == 0 for p in paths):
        raise InvalidParameterError("every flow needs a non-empty path")
    cap_arr = np.full(n, np.inf) if caps is None else np.array(
        [np.inf if c is None else float(c) for c in caps])
    if np.any(cap_arr <= 0):
        raise InvalidParameterError("flow caps must be positive")
    link_cap = np.asarray(capacities, dtype=np.float64)
    link_ids, hops = _pack(paths)
    rates, rounds = _progressive_fill(link_ids, hops, np.ones(n, np.bool_), cap_arr, link_cap, CAP_TOL)
    if rounds < 0:
        raise SimulationError("progressive filling did not converge")
    return rates


# ---------------------------------------------------------------- simulation

def _ecmp_path(topo, src, dst, slot, request, elephant, salt) -> Path:
    paths = equal_cost_paths(topo, src, dst)
    sport = 32768 + (slot * 131 + request) % 28232
    key = schedulers.FlowKey(src, dst, sport, ELEPHANT_PORT if elephant else MICE_PORT)
    return paths[schedulers.ecmp_select(key, len(paths), salt)]


def simulate(topo: FatTreeTopology, scenario: Scenario, algorithm: str,
             params: Optional[SimParams] = None, seed: int = 0,
             repetition: int = 0, observer: Optional[Callable] = None) -> RunResult:
    """Run one scenario under ``algorithm`` until the scenario window closes.

    ``observer(t, allocation)``, if given, is called after every rate
    recomputation with ``(flow id, path, rate bits/s)`` for each active flow.
    """
    if algorithm not in ALGORITHMS:
        raise InvalidParameterError(f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")
    params = (params or SimParams()).validate()
    flows = scenario.all_flows
    n_hosts = len(topo.hosts)
    for f in flows:
        if not (0 <= f.src < n_hosts and 0 <= f.dst < n_hosts) or f.src == f.dst:
            raise InvalidParameterError(f"flow {f.id} has invalid endpoints")
    n = len(flows)
    window = scenario.window
    probe_end = scenario.probe.start_time + scenario.probe.duration
    nic = topo.link_capacity
    link_index = topo.link_index
    link_cap = np.full(len(topo.directed_links), nic)

    elephant = np.array([f.cls == ELEPHANT for f in flows])
    next_start = np.array([f.start_time for f in flows])
    next_start[next_start >= window] = np.inf
    duration = np.array([f.duration if f.cls == ELEPHANT else np.inf for f in flows])
    size = np.array([float(f.transfer_size) if f.cls == MICE else np.inf for f in flows])
    end_time = np.full(n, np.inf)
    remaining = np.zeros(n)
    active = np.zeros(n, np.bool_)
    began = np.zeros(n)
    sent = np.zeros(n)
    request = np.zeros(n, np.int64)
    caps = np.full(n, np.inf)
    alpha = np.zeros(n)
    rfac = np.ones(n)
    paths: List[Optional[Path]] = [None] * n
    link_ids = np.zeros((n, 6), np.int64)
    hops = np.zeros(n, np.int64)

    think_seed = rng.derive_seed(seed, "mice-think", scenario.tag)
    think_streams = {}

    def set_path(i, path):
        paths[i] = path
        ids = [link_index[l] for l in path.links]
        link_ids[i, :len(ids)] = ids
        hops[i] = len(ids)

    def think_time(i):
        s = think_streams.get(i)
        if s is None:
            s = think_streams[i] = rng.UniformStream(think_seed, i)
        return 2.0 * params.mice_think_mean * s.uniform()

    records: List[FlowRecord] = []
    probe_series = []
    interval_bytes = 0.0
    sample_idx = 0
    n_samples = int(round((probe_end - scenario.probe.start_time) / params.sample_interval))
    if algorithm == "hedera":
        epoch = params.hedera_epoch
    elif algorithm == "dctcp":
        epoch = params.dctcp_epoch
    else:
        epoch = math.inf
    ctrl_idx = 1
    next_ctrl = epoch
    rates = np.zeros(n)
    # Bytes are committed only when rates change; between commits a flow's
    # progress is rates * (t - seg_t0).
    seg_t0 = 0.0
    probe_mark = 0.0  # probe bytes sent at the last sampling boundary
    dirty = True
    events = 0
    violations = 0
    max_util = 0.0
    t = 0.0

    def progress():
        return rates * (t - seg_t0) / 8.0

    while True:
        due = np.flatnonzero(~active & (next_start <= t + EPS_T))
        if due.size or dirty:
            moved = progress()
            sent += moved
            remaining[active & ~elephant] -= moved[active & ~elephant]
            seg_t0 = t
        for i in due:
            active[i] = True
            began[i] = t
            sent[i] = 0.0
            next_start[i] = np.inf
            if elephant[i]:
                end_time[i] = t + duration[i]
            else:
                remaining[i] = size[i]
            set_path(i, _ecmp_path(topo, flows[i].src, flows[i].dst, i, int(request[i]),
                                   bool(elephant[i]), params.ecmp_salt))
            dirty = True

        if dirty:
            if algorithm == "dctcp":
                caps = np.where(active, rfac * nic, np.inf)
            rates, rounds = _progressive_fill(link_ids, hops, active, caps, link_cap, CAP_TOL)
            if rounds < 0:
                raise SimulationError("progressive filling did not converge")
            loads = _link_loads(link_ids, hops, active, rates, len(link_cap))
            util = float((loads / link_cap).max()) if len(loads) else 0.0
            max_util = max(max_util, util)
            if observer is not None:
                observer(t, [(flows[i].id, paths[i], float(rates[i])) for i in np.flatnonzero(active)])
            if util > 1.0 + CAP_TOL:
                violations += 1
                if params.strict_conservation:
                    raise SimulationError(f"link oversubscribed at t={t}: utilization {util}")
            dirty = False

        t_next = window
        if sample_idx < n_samples:
            t_next = min(t_next, scenario.probe.start_time + (sample_idx + 1) * params.sample_interval)
        t_next = min(t_next, next_ctrl)
        pending = next_start[~active]
        if pending.size:
            t_next = min(t_next, pending.min())
        live_e = active & elephant
        if live_e.any():
            t_next = min(t_next, end_time[live_e].min())
        live_m = active & ~elephant & (rates > 0)
        if live_m.any():
            t_next = min(t_next, seg_t0 + (remaining[live_m] * 8.0 / rates[live_m]).min())

        t = max(t, t_next)
        events += 1
        now = progress()

        for i in np.flatnonzero(active & ~elephant & (remaining - now <= DONE_BYTES)):
            dirty = True
            active[i] = False
            records.append(FlowRecord(flows[i].id, MICE, float(size[i]), fct_s=t - began[i]))
            request[i] += 1
            nxt = t + think_time(i)
            next_start[i] = nxt if nxt < window else np.inf
        for i in np.flatnonzero(active & elephant & (end_time <= t + EPS_T)):
            dirty = True
            active[i] = False
            held = t - began[i]
            total = sent[i] + now[i]
            records.append(FlowRecord(flows[i].id, ELEPHANT, float(total),
                                      mean_mbps=total * 8.0 / held / 1e6 if held > 0 else 0.0))

        if sample_idx < n_samples:
            boundary = scenario.probe.start_time + (sample_idx + 1) * params.sample_interval
            if t >= boundary - EPS_T:
                cum = sent[0] + now[0]
                probe_series.append((boundary - params.sample_interval, boundary,
                                     (cum - probe_mark) * 8.0 / params.sample_interval))
                probe_mark = cum
                sample_idx += 1

        if t >= next_ctrl - EPS_T:
            if algorithm == "hedera":
                changed = _hedera_epoch(topo, flows, active, elephant, paths, rates, params, set_path)
            else:
                new_alpha, new_rfac = _dctcp_epoch(link_ids, hops, active, rfac, alpha, nic,
                                                   link_cap, params)
                changed = bool(np.any(new_rfac != rfac))
                alpha, rfac = new_alpha, new_rfac
            dirty = dirty or changed
            ctrl_idx += 1
            next_ctrl = ctrl_idx * epoch

        if t >= window - EPS_T:
            moved = progress()
            sent += moved
            remaining[active & ~elephant] -= moved[active & ~elephant]
            break

    for i in np.flatnonzero(active):
        if elephant[i]:
            held = t - began[i]
            records.append(FlowRecord(flows[i].id, ELEPHANT, float(sent[i]),
                                      mean_mbps=sent[i] * 8.0 / held / 1e6 if held > 0 else 0.0))
        else:
            records.append(FlowRecord(flows[i].id, MICE, float(size[i] - remaining[i])))

    return RunResult(algorithm, scenario.tag, repetition, int(seed), probe_series, records,
                     events=events, violations=violations, max_utilization=max_util)


def _hedera_epoch(topo, flows, active, elephant, paths, rates, params, set_path):
    live = [
        schedulers.ScheduledFlow(flows[i].id, flows[i].src, flows[i].dst, paths[i],
                                 elephant=True, rate=float(rates[i]))
        for i in np.flatnonzero(active & elephant)
    ]
    if not live:
        return False
    changed = False
    slot_of = {flows[i].id: i for i in np.flatnonzero(active & elephant)}
    for fid, path in schedulers.hedera_reschedule(
            live, topo, threshold=params.hedera_threshold,
            use_estimator=params.hedera_use_estimator):
        i = slot_of[fid]
        if path != paths[i]:
            set_path(i, path)
            changed = True
    return changed


def _dctcp_epoch(link_ids, hops, active, rfac, alpha, nic, link_cap, params):
    """Mark each flow by the overload of the most congested link on its path."""
    offered = np.where(active, rfac * nic, 0.0)
    demand = _link_loads(link_ids, hops, active, offered, len(link_cap))
    with np.errstate(divide="ignore", invalid="ignore"):
        overload = np.where(demand > 0, (demand - link_cap) / demand, 0.0)
    link_mark = np.where(demand > params.dctcp_mark_threshold * link_cap,
                         np.clip(overload, 0.0, 1.0), 0.0)
    width = link_ids.shape[1]
    mask = np.arange(width)[None, :] < hops[:, None]
    flow_mark = np.where(mask, link_mark[link_ids], 0.0).max(axis=1)
    new_alpha, new_rfac = schedulers.dctcp_update_arrays(
        alpha, rfac, flow_mark, gain=params.dctcp_gain, window=params.dctcp_window)
    return np.where(active, new_alpha, alpha), np.where(active, new_rfac, rfac)


# ---------------------------------------------------------------- campaigns

def _campaign_job(args):
    topo, ratio, pattern, algorithm, params, seed, rep = args
    scenario = make_scenario(ratio, pattern, seed, topo)
    return simulate(topo, scenario, algorithm, params, seed, repetition=rep)


def worker_count(default: int = 1) -> int:
    raw = os.environ.get("FLOWRISK_THREADS")
    if not raw:
        return default
    try:
        return max(1, int(raw))
    except ValueError:
        raise InvalidParameterError(f"FLOWRISK_THREADS must be an integer, got {raw!r}")


def run_campaign(topo: FatTreeTopology, ratio: str, algorithm: str, repetitions: int = 25,
                 base_seed: int = 0, pattern: str = "all-layers",
                 params: Optional[SimParams] = None, workers: Optional[int] = None,
                 bin_width: float = 1.0) -> SampleSet:
    """Repeat :func:`simulate` with seeds ``base_seed + i`` and collect probe statistics."""
    if repetitions < 1:
        raise InvalidParameterError("repetitions must be >= 1")
    params = params or SimParams()
    workers = worker_count() if workers is None else workers
    jobs = [(topo, ratio, pattern, algorithm, params, base_seed + i, i) for i in range(repetitions)]
    if workers > 1 and repetitions > 1:
        with ProcessPoolExecutor(max_workers=min(workers, repetitions)) as pool:
            runs = list(pool.map(_campaign_job, jobs))
    else:
        runs = [_campaign_job(job) for job in jobs]
    return SampleSet(
        algorithm=algorithm,
        scenario=runs[0].scenario,
        repetitions=[r.repetition for r in runs],
        seeds=[r.seed for r in runs],
        throughput=[r.probe_mean_mbps for r in runs],
        error=[r.probe_std_mbps for r in runs],
        bin_width=bin_width,
        runs=runs,
    )


def run_probe_only(topo: FatTreeTopology, algorithm: str, params: Optional[SimParams] = None,
                   seed: int = 0) -> RunResult:
    from flowrisk.workload import probe_only_scenario

    return simulate(topo, probe_only_scenario(topo), algorithm, params, seed)
