"""
Neuron-partition mappings of an SNN onto crossbars.

A synapse's weight occupies a column of its post-neuron's crossbar, so the
decision variable is a neuron partition and every synapse follows its
post-neuron. Spikes on synapses whose endpoints sit on different crossbars
cross the shared interconnect.
"""
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass

import numpy as np

from exceptions import CapacityError, TraceFormatError
from workload import check_pairing

logger = logging.getLogger(__name__)

EPS = 1e-9


@dataclass(frozen=True)
class NeuronPartition:
    assignment: tuple
    crossbar_count: int

    def __post_init__(self):
        object.__setattr__(self, 'assignment', tuple(int(c) for c in self.assignment))
        for neuron, crossbar in enumerate(self.assignment):
            if not 0 <= crossbar < self.crossbar_count:
                raise CapacityError(f'neuron {neuron} assigned to crossbar {crossbar} outside 0..{self.crossbar_count - 1}')

    def members(self, crossbar):
        return [n for n, c in enumerate(self.assignment) if c == crossbar]


@dataclass(frozen=True)
class MappingMatrix:
    crossbars: tuple
    partition: NeuronPartition

    @property
    def crossbar_count(self):
        return self.partition.crossbar_count

    def matrix(self):
        """Dense one-hot synapse-to-crossbar matrix M (S x C)"""
        m = np.zeros((len(self.crossbars), self.crossbar_count), dtype=np.int8)
        m[np.arange(len(self.crossbars)), list(self.crossbars)] = 1
        return m


class Occupancy:
    """Columns and distinct row drivers used on each crossbar"""

    def __init__(self, net, spec, crossbar_count=None):
        self.net = net
        self.rows = spec.crossbar_rows
        self.cols = spec.crossbar_cols
        count = crossbar_count or spec.crossbar_count
        self.cols_used = [0] * count
        self.pre_counts = [Counter() for _ in range(count)]

    def _needs_col(self, neuron):
        return 1 if self.net.in_degree[neuron] else 0

    def fits(self, crossbar, add, remove=None):
        cols = self.cols_used[crossbar] + self._needs_col(add)
        if remove is not None:
            cols -= self._needs_col(remove)
        if cols > self.cols:
            return False

        counts = self.pre_counts[crossbar]
        dropped = set()
        if remove is not None:
            dropped = {p for p in self.net.presynaptic[remove] if counts[p] == 1}
        distinct = len(counts) - len(dropped)
        distinct += sum(1 for p in self.net.presynaptic[add] if p not in counts or p in dropped)
        return distinct <= self.rows

    def add(self, neuron, crossbar):
        self.cols_used[crossbar] += self._needs_col(neuron)
        self.pre_counts[crossbar].update(self.net.presynaptic[neuron])

    def remove(self, neuron, crossbar):
        self.cols_used[crossbar] -= self._needs_col(neuron)
        counts = self.pre_counts[crossbar]
        for p in self.net.presynaptic[neuron]:
            counts[p] -= 1
            if counts[p] == 0:
                del counts[p]

    def violations(self):
        problems = []
        for crossbar, (cols, counts) in enumerate(zip(self.cols_used, self.pre_counts)):
            if cols > self.cols:
                problems.append(f'crossbar {crossbar}: {cols} post-neurons exceed {self.cols} columns')
            if len(counts) > self.rows:
                problems.append(f'crossbar {crossbar}: {len(counts)} pre-neurons exceed {self.rows} rows')
        return problems


def occupancy_of(partition, net, spec):
    occ = Occupancy(net, spec, partition.crossbar_count)
    for neuron, crossbar in enumerate(partition.assignment):
        occ.add(neuron, crossbar)
    return occ


def check_capacity(partition, net, spec):
    problems = occupancy_of(partition, net, spec).violations()
    if problems:
        raise CapacityError('; '.join(problems))


def derive_mapping(partition, net, spec=None):
    """Synapse i lives on the crossbar of its post-neuron"""
    if len(partition.assignment) != net.neuron_count:
        raise CapacityError(f'partition covers {len(partition.assignment)} neurons, network has {net.neuron_count}')
    if spec is not None:
        check_capacity(partition, net, spec)
    assignment = np.asarray(partition.assignment, dtype=np.int64)
    crossbars = assignment[net.post] if net.synapse_count else np.zeros(0, dtype=np.int64)
    return MappingMatrix(crossbars=tuple(int(c) for c in crossbars), partition=partition)


def neuron_weights(net, db):
    """Synapse activations a neuron's crossbar serves: spikes summed over its incoming synapses"""
    check_pairing(net, db)
    if not net.synapse_count:
        return np.zeros(net.neuron_count, dtype=np.int64)
    return np.bincount(net.post, weights=db.counts[net.pre], minlength=net.neuron_count).astype(np.int64)


def cut_spike_count(partition, net, db):
    check_pairing(net, db)
    if not net.synapse_count:
        return 0
    assignment = np.asarray(partition.assignment, dtype=np.int64)
    cut = assignment[net.pre] != assignment[net.post]
    return int(db.counts[net.pre][cut].sum())


def utilization(mapping, db, net, spec):
    """Synapse-spike events served per crossbar"""
    check_pairing(net, db)
    if not net.synapse_count:
        return np.zeros(mapping.crossbar_count, dtype=np.int64)
    return np.bincount(np.asarray(mapping.crossbars, dtype=np.int64), weights=db.counts[net.pre],
                       minlength=mapping.crossbar_count).astype(np.int64)


# Strategies

def map_round_robin(net, spec):
    """Neuron n on crossbar n mod C, moved to the lowest-index crossbar with room when full"""
    occ = Occupancy(net, spec)
    assignment = []
    for neuron in range(net.neuron_count):
        preferred = neuron % spec.crossbar_count
        order = [preferred] + [c for c in range(spec.crossbar_count) if c != preferred]
        target = next((c for c in order if occ.fits(c, neuron)), None)
        if target is None:
            raise CapacityError(f'no crossbar can host neuron {neuron} '
                                f'(fan-in {len(net.presynaptic[neuron])}, {spec.crossbar_rows}x{spec.crossbar_cols} crossbars)')
        occ.add(neuron, target)
        assignment.append(target)
    return NeuronPartition(assignment, spec.crossbar_count)


def map_balanced(net, db, spec):
    """Longest-processing-time assignment of neurons, heaviest first, to the least-loaded crossbar"""
    weights = neuron_weights(net, db)
    occ = Occupancy(net, spec)
    loads = np.zeros(spec.crossbar_count, dtype=np.int64)
    assignment = [0] * net.neuron_count

    for neuron in sorted(range(net.neuron_count), key=lambda n: (-weights[n], n)):
        order = sorted(range(spec.crossbar_count), key=lambda c: (loads[c], c))
        target = next((c for c in order if occ.fits(c, neuron)), None)
        if target is None:
            raise CapacityError(f'no crossbar can host neuron {neuron} while balancing')
        occ.add(neuron, target)
        loads[target] += weights[neuron]
        assignment[neuron] = target

    if weights.size and loads.max() > loads.mean() + weights.max():
        logger.warning('Balanced mapping exceeds the LPT bound (max load %d, mean %.1f); capacity is binding',
                       loads.max(), loads.mean())
    return NeuronPartition(assignment, spec.crossbar_count)


def _spike_adjacency(net, db):
    adjacency = [defaultdict(float) for _ in range(net.neuron_count)]
    counts = db.counts
    for syn in net.synapses:
        k = counts[syn.pre]
        if k:
            adjacency[syn.pre][syn.post] += k
            adjacency[syn.post][syn.pre] += k
    return adjacency


def improve_partition(partition, net, db, spec, seed=0, max_passes=100):
    """Kernighan-Lin style local search on cut spikes with single moves and pairwise swaps.

    Visits neurons in a seed-shuffled order, applies the best strictly improving
    feasible action for each, and stops after a pass without improvement.
    """
    check_pairing(net, db)
    count = partition.crossbar_count
    assignment = list(partition.assignment)
    occ = occupancy_of(partition, net, spec)
    adjacency = _spike_adjacency(net, db)

    affinity = np.zeros((net.neuron_count, count))
    for neuron, neighbours in enumerate(adjacency):
        for other, w in neighbours.items():
            affinity[neuron, assignment[other]] += w
    members = [set() for _ in range(count)]
    for neuron, crossbar in enumerate(assignment):
        members[crossbar].add(neuron)

    def relocate(neuron, src, dst):
        occ.remove(neuron, src)
        occ.add(neuron, dst)
        members[src].discard(neuron)
        members[dst].add(neuron)
        assignment[neuron] = dst
        for other, w in adjacency[neuron].items():
            affinity[other, src] -= w
            affinity[other, dst] += w

    rng = np.random.default_rng(seed)
    start_cut = cut_spike_count(partition, net, db)
    for pass_no in range(max_passes):
        improved = False
        for neuron in rng.permutation(net.neuron_count):
            neuron = int(neuron)
            src = assignment[neuron]
            best_gain, best_action = EPS, None

            for dst in range(count):
                if dst == src:
                    continue
                gain = affinity[neuron, dst] - affinity[neuron, src]
                if gain > best_gain and occ.fits(dst, neuron):
                    best_gain, best_action = gain, (dst, None)

            for dst in range(count):
                if dst == src or not members[dst]:
                    continue
                base = affinity[neuron, dst] - affinity[neuron, src]
                partners = np.array(sorted(members[dst]), dtype=np.int64)
                gains = base + affinity[partners, src] - affinity[partners, dst]
                gains -= 2.0 * np.array([adjacency[neuron].get(int(m), 0.0) for m in partners])
                for idx in np.argsort(-gains, kind='stable'):
                    gain = gains[idx]
                    if gain <= best_gain:
                        break
                    partner = int(partners[idx])
                    if occ.fits(dst, neuron, remove=partner) and occ.fits(src, partner, remove=neuron):
                        best_gain, best_action = gain, (dst, partner)
                        break

            if best_action is not None:
                dst, partner = best_action
                relocate(neuron, src, dst)
                if partner is not None:
                    relocate(partner, dst, src)
                improved = True

        if not improved:
            break
        logger.debug('KL pass %d: cut now %d', pass_no, cut_spike_count(
            NeuronPartition(assignment, count), net, db))
    else:
        logger.warning('KL refinement stopped after %d passes without converging', max_passes)

    result = NeuronPartition(assignment, count)
    logger.info('Min-comm refinement: cut spikes %d -> %d', start_cut, cut_spike_count(result, net, db))
    return result


def map_min_comm(net, db, spec, seed=0):
    """Round-robin start refined to a local minimum of cut spikes"""
    return improve_partition(map_round_robin(net, spec), net, db, spec, seed=seed)


STRATEGIES = {
    'roundrobin': lambda net, db, spec, seed: map_round_robin(net, spec),
    'balanced': lambda net, db, spec, seed: map_balanced(net, db, spec),
    'mincomm': lambda net, db, spec, seed: map_min_comm(net, db, spec, seed=seed),
}


def build_partition(strategy, net, db, spec, seed=0):
    if strategy not in STRATEGIES:
        raise CapacityError(f'unknown mapping strategy {strategy!r}; choose from {sorted(STRATEGIES)}')
    return STRATEGIES[strategy](net, db, spec, seed)


# Partition files

def write_partition(partition, path):
    with open(path, 'w', encoding='utf-8') as handle:
        handle.write(f'# pumpwear partition, {partition.crossbar_count} crossbars\n')
        for neuron, crossbar in enumerate(partition.assignment):
            handle.write(f'NRN,{neuron},{crossbar}\n')


def load_partition(path, crossbar_count=None):
    entries = {}
    with open(path, encoding='utf-8') as handle:
        for line_no, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line or line.startswith('#'):
                continue
            try:
                tag, neuron, crossbar = line.split(',')
                if tag != 'NRN':
                    raise ValueError(f'unexpected tag {tag}')
                neuron, crossbar = int(neuron), int(crossbar)
            except ValueError as exc:
                raise TraceFormatError(f'malformed partition record ({exc})', line_no, line) from exc
            if neuron in entries:
                raise TraceFormatError(f'neuron {neuron} listed twice', line_no, line)
            entries[neuron] = crossbar

    if sorted(entries) != list(range(len(entries))):
        raise TraceFormatError('partition neuron ids are not dense 0..N-1')
    assignment = [entries[n] for n in range(len(entries))]
    if crossbar_count is None:
        crossbar_count = max(assignment) + 1 if assignment else 1
    return NeuronPartition(assignment, crossbar_count)
