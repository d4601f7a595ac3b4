"""
Event replay of a mapped workload: charge-pump voltage schedules, discharge
and interconnect delay injection, and inter-spike-interval statistics
"""
import logging
import math
from dataclasses import dataclass

import numpy as np

from exceptions import ReplayError, UndefinedIsiError
from hardware import synapse_to_pump, validate_spec
from workload import SpikeDb, check_pairing, write_trace

logger = logging.getLogger(__name__)

DELAY_EPS = 1e-12


@dataclass(frozen=True)
class VoltageSchedule:
    pump: int
    segments: tuple

    @property
    def horizon_ms(self):
        return self.segments[-1][1] if self.segments else 0.0

    def time_at(self, volts):
        return sum(end - start for start, end, v in self.segments if v == volts)


@dataclass(frozen=True)
class PumpActivity:
    pulses: tuple
    troughs: tuple


@dataclass(frozen=True)
class ReplayCounters:
    spikes_processed: int
    spikes_delayed: int
    inter_crossbar_spikes: int
    total_delay_ms: float
    policy_delay_ms: float
    bus_delay_ms: float


@dataclass(frozen=True)
class ExecutionResult:
    horizon_ms: float
    nominal_horizon_ms: float
    policy: object
    spec: object
    observed: SpikeDb
    delayed_synapse_trains: tuple
    activity: tuple
    counters: ReplayCounters

    @property
    def pump_count(self):
        return len(self.activity)


@dataclass(frozen=True)
class IsiStats:
    per_neuron: tuple
    cv: tuple
    mean_ms: float
    defined_neurons: int
    excluded_neurons: int


@dataclass(frozen=True)
class IsiChange:
    per_neuron: tuple
    mean: float
    compared_neurons: int
    excluded: tuple


# ISI

def compute_isi(train):
    """Average inter-spike interval of a sorted train"""
    train = np.asarray(train, dtype=np.float64)
    if train.size < 2:
        raise UndefinedIsiError(f'ISI needs at least 2 spikes, got {train.size}')
    return float((train[-1] - train[0]) / (train.size - 1))


def isi_stats(db):
    per_neuron, cvs = [], []
    for train in db.trains:
        if len(train) < 2:
            per_neuron.append(None)
            cvs.append(None)
            continue
        intervals = np.diff(np.asarray(train))
        mean = compute_isi(train)
        per_neuron.append(mean)
        cvs.append(float(intervals.std() / mean) if mean > 0 else 0.0)
    defined = [v for v in per_neuron if v is not None]
    return IsiStats(
        per_neuron=tuple(per_neuron),
        cv=tuple(cvs),
        mean_ms=float(np.mean(defined)) if defined else 0.0,
        defined_neurons=len(defined),
        excluded_neurons=len(per_neuron) - len(defined),
    )


def isi_change(reference, observed):
    """Fractional |I_obs - I_ref| / I_ref per neuron, averaged over neurons defined in both"""
    if len(reference.per_neuron) != len(observed.per_neuron):
        raise ReplayError('ISI statistics cover different neuron sets')
    changes, excluded = [], []
    for neuron, (ref, obs) in enumerate(zip(reference.per_neuron, observed.per_neuron)):
        if ref is None and obs is None:
            changes.append(None)
        elif ref is None or obs is None or ref == 0:
            changes.append(None)
            excluded.append(neuron)
        else:
            changes.append(abs(obs - ref) / ref)
    if excluded:
        logger.warning('ISI change excludes %d neurons defined on one side only', len(excluded))
    defined = [c for c in changes if c is not None]
    return IsiChange(
        per_neuron=tuple(changes),
        mean=float(np.mean(defined)) if defined else 0.0,
        compared_neurons=len(defined),
        excluded=tuple(excluded),
    )


# Pump service

def serve_events(arrivals, policy, spec):
    """Serve one pump's sorted arrivals under a discharge policy.

    A pump-local lag carries forward so every later event keeps its spacing
    behind a delayed one. Returns served times, merged boost pulses and the
    PerSpike discharge troughs; a trough ends t_recover_ms before the event
    it precedes is served.
    """
    pulse, recover = spec.t_pulse_ms, spec.t_recover_ms
    served = np.empty(len(arrivals))
    pulses, troughs = [], []
    lag = 0.0
    pulse_start = pulse_end = None

    for i, arrival in enumerate(arrivals):
        x = arrival + lag
        if policy.kind == 'perspike' and pulse_end is not None and x >= pulse_end:
            # Discharged until t_recover before service, recharging at v_idle
            s = x + recover
            if x > pulse_end:
                troughs.append((pulse_end, x))
        elif policy.kind == 'interval':
            j = math.floor(x / policy.interval_ms)
            window_end = j * policy.interval_ms + recover
            s = window_end if j >= 1 and x < window_end else x
        else:
            s = x
        lag = s - arrival
        served[i] = s

        if pulse_end is not None and s <= pulse_end:
            pulse_end = max(pulse_end, s + pulse)
        else:
            if pulse_end is not None:
                pulses.append((pulse_start, pulse_end))
            pulse_start, pulse_end = s, s + pulse

    if pulse_end is not None:
        pulses.append((pulse_start, pulse_end))
    return served, tuple(pulses), tuple(troughs)


def _expand_events(net, db):
    counts = db.counts[net.pre] if net.synapse_count else np.zeros(0, dtype=np.int64)
    syn = np.repeat(np.arange(net.synapse_count), counts)
    if syn.size:
        times = np.concatenate([db.train(p) for p in net.pre])
    else:
        times = np.zeros(0)
    return syn, times


def replay(net, db, mapping, spec, policy, nbti=None):
    """Replay synapse-spike events in time order through the shared bus and the pumps"""
    validate_spec(spec)
    check_pairing(net, db)
    if len(mapping.crossbars) != net.synapse_count:
        raise ReplayError(f'mapping covers {len(mapping.crossbars)} synapses, network has {net.synapse_count}')
    if mapping.crossbar_count != spec.crossbar_count:
        raise ReplayError(f'mapping targets {mapping.crossbar_count} crossbars, hardware has {spec.crossbar_count}')
    if policy.kind == 'interval' and policy.interval_ms <= spec.t_recover_ms:
        raise ReplayError(f'discharge interval {policy.interval_ms} ms must exceed t_recover {spec.t_recover_ms} ms')

    syn_pump = synapse_to_pump(mapping, spec)
    assignment = np.asarray(mapping.partition.assignment, dtype=np.int64)
    ev_syn, ev_time = _expand_events(net, db)
    order = np.lexsort((ev_syn, ev_time))
    ev_syn, ev_time = ev_syn[order], ev_time[order]

    # Shared FIFO bus for spikes crossing crossbars
    if ev_syn.size:
        cut = assignment[net.pre[ev_syn]] != assignment[net.post[ev_syn]]
    else:
        cut = np.zeros(0, dtype=bool)
    arrival = ev_time.copy()
    bus_free = -math.inf
    for i in np.flatnonzero(cut):
        bus_free = max(ev_time[i], bus_free) + spec.t_hop_ms
        arrival[i] = bus_free

    served = np.empty_like(arrival)
    ev_pump = syn_pump[ev_syn] if ev_syn.size else np.zeros(0, dtype=np.int64)
    activity = []
    for pump in range(spec.pump_count):
        idx = np.flatnonzero(ev_pump == pump)
        idx = idx[np.lexsort((ev_syn[idx], ev_time[idx], arrival[idx]))]
        pump_served, pulses, troughs = serve_events(arrival[idx], policy, spec)
        served[idx] = pump_served
        activity.append(PumpActivity(pulses=pulses, troughs=troughs))

    last_pulse_end = max((a.pulses[-1][1] for a in activity if a.pulses), default=0.0)
    horizon = float(max(db.horizon_ms, last_pulse_end))
    assert all(end <= horizon for a in activity for _, end in a.pulses)

    delays = served - ev_time
    observed = _observed_trains(net, db, ev_syn, ev_time, delays)
    observed_horizon = float(max([horizon] + [train[-1] for train in observed if train]))

    delayed_synapse = [[] for _ in range(net.synapse_count)]
    for s, t in zip(ev_syn, served):
        delayed_synapse[s].append(float(t))

    counters = ReplayCounters(
        spikes_processed=int(ev_syn.size),
        spikes_delayed=int((delays > DELAY_EPS).sum()),
        inter_crossbar_spikes=int(cut.sum()),
        total_delay_ms=float(delays.sum()),
        policy_delay_ms=float((served - arrival).sum()),
        bus_delay_ms=float((arrival - ev_time).sum()),
    )
    logger.info('Replay under %s: %d events, %d delayed, %d cut, %.3f ms added',
                policy.label, counters.spikes_processed, counters.spikes_delayed,
                counters.inter_crossbar_spikes, counters.total_delay_ms)

    return ExecutionResult(
        horizon_ms=horizon,
        nominal_horizon_ms=db.horizon_ms,
        policy=policy,
        spec=spec,
        observed=SpikeDb(horizon_ms=observed_horizon, trains=observed),
        delayed_synapse_trains=tuple(tuple(t) for t in delayed_synapse),
        activity=tuple(activity),
        counters=counters,
    )


def _observed_trains(net, db, ev_syn, ev_time, delays):
    """Shift each firing by the largest delay among incoming events at or before it"""
    observed = [list(train) for train in db.trains]
    if not ev_syn.size:
        return observed
    ev_post = net.post[ev_syn]
    order = np.lexsort((ev_time, ev_post))
    ev_post, times, delays = ev_post[order], ev_time[order], delays[order]
    bounds = np.searchsorted(ev_post, np.arange(net.neuron_count + 1))

    for neuron in range(net.neuron_count):
        lo, hi = bounds[neuron], bounds[neuron + 1]
        train = db.train(neuron)
        if lo == hi or not train.size:
            continue
        running = np.maximum.accumulate(delays[lo:hi])
        idx = np.searchsorted(times[lo:hi], train, side='right') - 1
        shift = np.where(idx >= 0, running[np.clip(idx, 0, None)], 0.0)
        observed[neuron] = (train + shift).tolist()
    return observed


# Schedules

def _covered(points, intervals):
    if not intervals:
        return np.zeros(points.shape, dtype=bool)
    starts = np.array([s for s, _ in intervals])
    ends = np.array([e for _, e in intervals])
    i = np.searchsorted(starts, points, side='right') - 1
    return (i >= 0) & (points < ends[np.clip(i, 0, None)])


def discharge_windows(policy, spec, activity, horizon):
    if policy.kind == 'perspike':
        windows = list(activity.troughs)
        if activity.pulses and activity.pulses[-1][1] < horizon:
            windows.append((activity.pulses[-1][1], horizon))
        return windows
    if policy.kind == 'interval':
        windows = []
        j = 1
        while j * policy.interval_ms < horizon:
            start = j * policy.interval_ms
            windows.append((start, min(start + spec.t_recover_ms, horizon)))
            j += 1
        return windows
    return []


def paint_schedule(pump, horizon, pulses, windows, spec):
    """Idle baseline, discharge windows over it, boost pulses over both; merged canonical form"""
    points = {0.0, horizon}
    for start, end in list(pulses) + list(windows):
        points.update((min(start, horizon), min(end, horizon)))
    bounds = np.array(sorted(p for p in points if 0.0 <= p <= horizon))
    if bounds.size < 2:
        return VoltageSchedule(pump=pump, segments=())

    mids = (bounds[:-1] + bounds[1:]) / 2.0
    volts = np.full(mids.shape, spec.v_idle)
    volts[_covered(mids, sorted(windows))] = spec.v_discharge
    volts[_covered(mids, sorted(pulses))] = spec.v_boost

    segments = []
    for start, end, v in zip(bounds[:-1], bounds[1:], volts):
        if end <= start:
            continue
        if segments and segments[-1][2] == v:
            segments[-1] = (segments[-1][0], float(end), float(v))
        else:
            segments.append((float(start), float(end), float(v)))
    return VoltageSchedule(pump=pump, segments=tuple(segments))


def build_pump_schedules(result):
    schedules = []
    for pump, activity in enumerate(result.activity):
        windows = discharge_windows(result.policy, result.spec, activity, result.horizon_ms)
        schedule = paint_schedule(pump, result.horizon_ms, activity.pulses, windows, result.spec)
        check_schedule(schedule, result.spec, result.horizon_ms)
        schedules.append(schedule)
    return tuple(schedules)


def check_schedule(schedule, spec, horizon):
    segments = schedule.segments
    assert segments and segments[0][0] == 0.0 and segments[-1][1] == horizon, 'schedule must cover [0, H]'
    for (s0, e0, v0), (s1, e1, v1) in zip(segments, segments[1:]):
        assert e0 == s1, 'schedule segments must be contiguous'
        assert v0 != v1, 'adjacent segments must differ in voltage'
    for start, end, v in segments:
        assert end > start and v in spec.levels, f'bad segment ({start}, {end}, {v})'


# Dumps

def write_schedules(schedules, path):
    with open(path, 'w', encoding='utf-8') as handle:
        handle.write('# pumpwear schedules: PUMP,<k>,<start_ms>,<end_ms>,<volts>\n')
        for schedule in schedules:
            for start, end, volts in schedule.segments:
                handle.write(f'PUMP,{schedule.pump},{start!r},{end!r},{volts!r}\n')


def write_delayed_trace(net, result, path):
    write_trace(net, result.observed, path)
