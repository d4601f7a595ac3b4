"""
SNN workloads: networks, spike traces, the trace file format and synthetic
trace generators
"""
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from exceptions import TraceFormatError, WorkloadError

logger = logging.getLogger(__name__)

TRACE_HEADER = '# pumpwear trace v1'


@dataclass(frozen=True)
class Synapse:
    id: int
    pre: int
    post: int
    weight: float


@dataclass(frozen=True)
class Network:
    neuron_count: int
    synapses: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, 'synapses', tuple(self.synapses))
        if self.neuron_count <= 0:
            raise WorkloadError(f'neuron_count must be positive, got {self.neuron_count}')

        seen_pairs = set()
        for index, syn in enumerate(self.synapses):
            if syn.id != index:
                raise WorkloadError(f'synapse ids must be dense 0..S-1, found id {syn.id} at position {index}')
            if not (0 <= syn.pre < self.neuron_count and 0 <= syn.post < self.neuron_count):
                raise WorkloadError(f'synapse {syn.id} references a neuron outside 0..{self.neuron_count - 1}')
            if syn.pre == syn.post:
                raise WorkloadError(f'synapse {syn.id} is a self loop on neuron {syn.pre}')
            if (syn.pre, syn.post) in seen_pairs:
                raise WorkloadError(f'duplicate synapse {syn.pre}->{syn.post}')
            seen_pairs.add((syn.pre, syn.post))

    @property
    def synapse_count(self):
        return len(self.synapses)

    @cached_property
    def pre(self):
        return np.array([s.pre for s in self.synapses], dtype=np.int64)

    @cached_property
    def post(self):
        return np.array([s.post for s in self.synapses], dtype=np.int64)

    @cached_property
    def weights(self):
        return np.array([s.weight for s in self.synapses], dtype=np.float64)

    @cached_property
    def out_degree(self):
        return np.bincount(self.pre, minlength=self.neuron_count)

    @cached_property
    def in_degree(self):
        return np.bincount(self.post, minlength=self.neuron_count)

    @cached_property
    def incoming(self):
        """Synapse ids grouped by post-neuron"""
        groups = [[] for _ in range(self.neuron_count)]
        for syn in self.synapses:
            groups[syn.post].append(syn.id)
        return tuple(tuple(g) for g in groups)

    @cached_property
    def presynaptic(self):
        """Distinct pre-neurons feeding each neuron"""
        return tuple(frozenset(self.synapses[s].pre for s in ids) for ids in self.incoming)


@dataclass(frozen=True)
class SpikeDb:
    horizon_ms: float
    trains: tuple = field(default=())

    def __post_init__(self):
        object.__setattr__(self, 'horizon_ms', float(self.horizon_ms))
        object.__setattr__(self, 'trains', tuple(tuple(float(t) for t in train) for train in self.trains))
        if not self.horizon_ms > 0:
            raise WorkloadError(f'horizon_ms must be positive, got {self.horizon_ms}')
        for neuron, train in enumerate(self.trains):
            for i, t in enumerate(train):
                if t < 0:
                    raise WorkloadError(f'neuron {neuron}: negative firing time {t}')
                if t > self.horizon_ms:
                    raise WorkloadError(f'neuron {neuron}: time exceeds horizon ({t} > {self.horizon_ms})')
                if i and t <= train[i - 1]:
                    raise WorkloadError(f'neuron {neuron}: firing times not strictly increasing at {t}')

    @classmethod
    def empty(cls, neuron_count, horizon_ms):
        return cls(horizon_ms=horizon_ms, trains=((),) * neuron_count)

    @property
    def neuron_count(self):
        return len(self.trains)

    @cached_property
    def counts(self):
        return np.array([len(t) for t in self.trains], dtype=np.int64)

    @property
    def total_spikes(self):
        return int(self.counts.sum())

    def train(self, neuron):
        return np.asarray(self.trains[neuron], dtype=np.float64)


@dataclass(frozen=True)
class SynapseTrains:
    horizon_ms: float
    trains: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, 'horizon_ms', float(self.horizon_ms))

    @cached_property
    def counts(self):
        return np.array([len(t) for t in self.trains], dtype=np.int64)

    @property
    def total_spikes(self):
        return int(self.counts.sum())


@dataclass(frozen=True)
class LifParams:
    leak_per_ms: float = 0.1
    threshold: float = 1.0
    reset: float = 0.0
    refractory_ms: float = 2.0
    dt_ms: float = 0.1

    def validate(self):
        problems = []
        if self.threshold <= self.reset:
            problems.append(f'threshold {self.threshold} must exceed reset {self.reset}')
        if self.leak_per_ms < 0:
            problems.append('leak_per_ms must be >= 0')
        if self.refractory_ms < 0:
            problems.append('refractory_ms must be >= 0')
        if self.dt_ms <= 0:
            problems.append('dt_ms must be positive')
        if problems:
            raise WorkloadError('unstable LIF parameters: ' + '; '.join(problems))


def check_pairing(net, db):
    if db.neuron_count != net.neuron_count:
        raise WorkloadError(f'spike database covers {db.neuron_count} neurons, network has {net.neuron_count}')


# Trace file format

def write_trace(net, db, path):
    """Write the canonical trace file: header, synapses, then spikes by (neuron, time)"""
    check_pairing(net, db)
    lines = [TRACE_HEADER, f'T_MS={float(db.horizon_ms)!r}', f'NEURONS={net.neuron_count}']
    lines.extend(f'SYN,{s.id},{s.pre},{s.post},{float(s.weight)!r}' for s in net.synapses)
    for neuron, train in enumerate(db.trains):
        lines.extend(f'SPK,{neuron},{t!r}' for t in train)
    with open(path, 'w', encoding='utf-8') as handle:
        handle.write('\n'.join(lines) + '\n')


def load_trace(path):
    """Parse and validate a trace file into (Network, SpikeDb)"""
    horizon = None
    neuron_count = None
    synapses = {}
    spikes = {}

    with open(path, encoding='utf-8') as handle:
        for line_no, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line or line.startswith('#'):
                continue
            try:
                if line.startswith('T_MS='):
                    horizon = float(line[5:])
                    if not (0 < horizon < math.inf):
                        raise TraceFormatError('T_MS must be positive and finite', line_no, line)
                elif line.startswith('NEURONS='):
                    neuron_count = int(line[8:])
                    if neuron_count <= 0:
                        raise TraceFormatError('NEURONS must be positive', line_no, line)
                elif line.startswith('SYN,'):
                    _, sid, pre, post, weight = line.split(',')
                    sid, pre, post = int(sid), int(pre), int(post)
                    weight = float(weight)
                    if not math.isfinite(weight):
                        raise TraceFormatError('synapse weight must be finite', line_no, line)
                    if sid in synapses:
                        raise TraceFormatError(f'duplicate synapse id {sid}', line_no, line)
                    synapses[sid] = (Synapse(sid, pre, post, weight), line_no)
                elif line.startswith('SPK,'):
                    _, neuron, t = line.split(',')
                    neuron, t = int(neuron), float(t)
                    _check_spike(neuron, t, horizon, neuron_count, spikes, line_no, line)
                    spikes.setdefault(neuron, []).append(t)
                else:
                    raise TraceFormatError('unrecognized record', line_no, line)
            except ValueError as exc:
                raise TraceFormatError(f'malformed record ({exc})', line_no, line) from exc

    if horizon is None or neuron_count is None:
        raise TraceFormatError('missing T_MS or NEURONS header')

    ordered = []
    for index in range(len(synapses)):
        if index not in synapses:
            raise TraceFormatError(f'synapse ids are not dense: id {index} missing')
        ordered.append(synapses[index][0])
    for syn, line_no in synapses.values():
        if not (0 <= syn.pre < neuron_count and 0 <= syn.post < neuron_count):
            raise TraceFormatError('synapse references an out-of-range neuron', line_no,
                                   f'SYN,{syn.id},{syn.pre},{syn.post}')

    try:
        net = Network(neuron_count=neuron_count, synapses=ordered)
    except WorkloadError as exc:
        raise TraceFormatError(str(exc)) from exc
    db = SpikeDb(horizon_ms=horizon,
                 trains=[spikes.get(n, ()) for n in range(neuron_count)])
    logger.info('Loaded trace %s: %d neurons, %d synapses, %d spikes',
                path, net.neuron_count, net.synapse_count, db.total_spikes)
    return net, db


def _check_spike(neuron, t, horizon, neuron_count, spikes, line_no, line):
    if horizon is None or neuron_count is None:
        raise TraceFormatError('spike record before T_MS/NEURONS header', line_no, line)
    if not 0 <= neuron < neuron_count:
        raise TraceFormatError(f'neuron id {neuron} out of range', line_no, line)
    if not math.isfinite(t):
        raise TraceFormatError('spike time must be finite', line_no, line)
    if t < 0:
        raise TraceFormatError('negative time', line_no, line)
    if t > horizon:
        raise TraceFormatError('time exceeds horizon', line_no, line)
    previous = spikes.get(neuron)
    if previous and t <= previous[-1]:
        raise TraceFormatError('unsorted or duplicate spike time', line_no, line)


# Synthetic workloads

def gen_network(layer_sizes, fan_in, seed=0, weight_range=(0.1, 1.0)):
    """Layered feed-forward network; each neuron draws `fan_in` distinct pre-neurons from the previous layer"""
    if not layer_sizes or any(size <= 0 for size in layer_sizes):
        raise WorkloadError('layer sizes must be positive')
    rng = np.random.default_rng(seed)
    offsets = np.concatenate([[0], np.cumsum(layer_sizes)])
    synapses = []
    for layer in range(1, len(layer_sizes)):
        prev_start, prev_size = int(offsets[layer - 1]), int(layer_sizes[layer - 1])
        k = min(fan_in, prev_size)
        for post in range(int(offsets[layer]), int(offsets[layer + 1])):
            pres = np.sort(rng.choice(prev_size, size=k, replace=False)) + prev_start
            for pre in pres:
                weight = float(rng.uniform(*weight_range))
                synapses.append(Synapse(len(synapses), int(pre), post, weight))
    return Network(neuron_count=int(offsets[-1]), synapses=synapses)


def lognormal_rates(neuron_count, mean_hz, sigma=1.0, seed=0):
    """Skewed per-neuron firing rates with the requested mean"""
    rng = np.random.default_rng(seed)
    rates = rng.lognormal(mean=0.0, sigma=sigma, size=neuron_count)
    return rates * (mean_hz / rates.mean())


def gen_poisson(net, rate_hz, horizon_ms, seed=0):
    """Independent homogeneous Poisson trains, one per neuron"""
    rates = np.broadcast_to(np.asarray(rate_hz, dtype=np.float64), (net.neuron_count,))
    if np.any(rates <= 0):
        raise WorkloadError('Poisson rates must be positive')
    rng = np.random.default_rng(seed)
    trains = []
    for rate in rates:
        count = rng.poisson(rate * horizon_ms / 1000.0)
        times = np.unique(rng.uniform(0.0, horizon_ms, size=count))
        trains.append(times.tolist())
    return SpikeDb(horizon_ms=horizon_ms, trains=trains)


def expand_to_synapses(net, db):
    """Per-synapse spike trains: every synapse carries its pre-neuron's train"""
    check_pairing(net, db)
    return SynapseTrains(horizon_ms=db.horizon_ms,
                         trains=tuple(db.trains[s.pre] for s in net.synapses))


def simulate_lif(net, input_trains, params, horizon_ms):
    """Discrete-time leaky integrate-and-fire replay of a network driven by input neurons.

    `input_trains` maps each input neuron to its firing times. A spike in step
    bin k reaches its post-neurons at the update to step k+1, so each hop adds
    one time step.
    """
    params.validate()
    inputs = {int(n): sorted(float(t) for t in ts) for n, ts in input_trains.items()}
    for neuron in inputs:
        if not 0 <= neuron < net.neuron_count:
            raise WorkloadError(f'input neuron {neuron} out of range')
        if net.in_degree[neuron]:
            raise WorkloadError(f'input neuron {neuron} has incoming synapses')

    dt = params.dt_ms
    steps = int(math.floor(horizon_ms / dt + 1e-9))
    weights = np.zeros((net.neuron_count, net.neuron_count))
    if net.synapse_count:
        weights[net.pre, net.post] = net.weights

    drive = {}
    for neuron, times in inputs.items():
        for t in times:
            if t < 0 or t > horizon_ms:
                raise WorkloadError(f'input spike {t} outside [0, {horizon_ms}]')
            drive.setdefault(int(math.floor(t / dt + 1e-9)), []).append(neuron)

    is_input = np.zeros(net.neuron_count, dtype=bool)
    is_input[list(inputs)] = True
    decay = math.exp(-params.leak_per_ms * dt)
    refractory_steps = int(round(params.refractory_ms / dt))

    v = np.full(net.neuron_count, params.reset)
    last_fire = np.full(net.neuron_count, -(10 ** 9), dtype=np.int64)
    recurrent = np.zeros(net.neuron_count)
    fired_at = [[] for _ in range(net.neuron_count)]

    for k in range(steps):
        step = k + 1
        current = recurrent
        if k in drive:
            current = current + weights[drive[k]].sum(axis=0)
        v = params.reset + (v - params.reset) * decay + current
        blocked = is_input | (step - last_fire <= refractory_steps)
        v[blocked] = params.reset
        fired = np.flatnonzero(v >= params.threshold)
        if fired.size:
            v[fired] = params.reset
            last_fire[fired] = step
            t = round(step * dt, 9)
            for neuron in fired:
                fired_at[neuron].append(t)
            recurrent = weights[fired].sum(axis=0)
        else:
            recurrent = np.zeros(net.neuron_count)

    for neuron, times in inputs.items():
        fired_at[neuron] = times
    db = SpikeDb(horizon_ms=horizon_ms, trains=fired_at)
    logger.info('LIF replay produced %d spikes over %.1f ms', db.total_spikes, horizon_ms)
    return db
