"""
NBTI generated-defect aging of charge pumps, per-pump aggregation,
reliability and a lifetime proxy
"""
import logging
import math
from dataclasses import dataclass

import numpy as np

from engine import discharge_windows, paint_schedule, serve_events, PumpActivity
from hardware import synapse_to_pump
from workload import check_pairing

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AgingReport:
    pump_aging: tuple
    schedule_aging: tuple
    reliability: tuple
    schedule_reliability: tuple
    log_reliability: tuple
    mttf_ms: tuple
    synapse_aging: tuple
    horizon_ms: float

    @property
    def max_aging(self):
        return max(self.pump_aging) if self.pump_aging else 0.0

    @property
    def mean_aging(self):
        return float(np.mean(self.pump_aging)) if self.pump_aging else 0.0


def defects(v, dt_ms, p):
    """Generated defects of one constant-voltage interval: g0 * (V - Vth)^m * dt^n, zero below threshold"""
    overdrive = max(v - p.v_th, 0.0)
    if overdrive == 0.0 or dt_ms <= 0.0:
        return 0.0
    return p.g0 * overdrive ** p.m_exp * dt_ms ** p.n_exp


def _segments_of(schedule):
    return schedule.segments if hasattr(schedule, 'segments') else tuple(schedule)


def schedule_aging(schedule, p):
    """Aging of a piecewise-constant voltage schedule.

    `segments` sums defects() over the segments. `equivalent_time` composes the
    segments through their equivalent stress time, g0 * (sum (V - Vth)^(m/n) * dt)^n,
    which agrees with defects() on a single segment and with the plain sum when
    n == 1, and does not depend on how a constant stretch is subdivided.
    """
    segments = _segments_of(schedule)
    if p.composition == 'segments':
        return float(sum(defects(v, end - start, p) for start, end, v in segments))

    stress = 0.0
    for start, end, v in segments:
        overdrive = max(v - p.v_th, 0.0)
        if overdrive > 0.0 and end > start:
            stress += overdrive ** (p.m_exp / p.n_exp) * (end - start)
    return float(p.g0 * stress ** p.n_exp) if stress > 0.0 else 0.0


def synapse_schedule(train, policy, spec, horizon_ms):
    """Voltage schedule a single synapse's train induces on a pump of its own"""
    arrivals = np.asarray(train, dtype=np.float64)
    _, pulses, troughs = serve_events(arrivals, policy, spec)
    horizon = max(horizon_ms, pulses[-1][1] if pulses else 0.0)
    windows = discharge_windows(policy, spec, PumpActivity(pulses=pulses, troughs=troughs), horizon)
    return paint_schedule(0, horizon, pulses, windows, spec)


def synapse_aging(train, policy, spec, p, horizon_ms):
    return schedule_aging(synapse_schedule(train, policy, spec, horizon_ms), p)


def all_synapse_aging(net, db, policy, spec, p):
    """Aging attributed to every synapse; synapses sharing a pre-neuron share a train"""
    check_pairing(net, db)
    by_pre = {}
    values = np.empty(net.synapse_count)
    for syn in net.synapses:
        if syn.pre not in by_pre:
            by_pre[syn.pre] = synapse_aging(db.trains[syn.pre], policy, spec, p, db.horizon_ms)
        values[syn.id] = by_pre[syn.pre]
    return values


def pump_aging(per_synapse, mapping, spec):
    """Total aging per pump: sum over synapses i and crossbars j of m_ij * p_jk * A_i"""
    per_synapse = np.asarray(per_synapse, dtype=np.float64)
    pumps = synapse_to_pump(mapping, spec)
    if not per_synapse.size:
        return np.zeros(spec.pump_count)
    return np.bincount(pumps, weights=per_synapse, minlength=spec.pump_count)


def log_reliability_at(aging, beta):
    return -(aging ** beta) if aging > 0 else 0.0


def reliability_at(aging, beta):
    """exp(-A^beta); underflows to 0.0 once A^beta passes about 745, use log_reliability_at there"""
    return math.exp(log_reliability_at(aging, beta))


def mttf_proxy(aging_rate, beta=1.0):
    """Workload time until accumulated aging reaches 1, where R crosses 1/e for any beta"""
    if aging_rate <= 0:
        return math.inf
    return 1.0 / aging_rate


def evaluate_aging(net, db, mapping, spec, p, policy, schedules):
    per_synapse = all_synapse_aging(net, db, policy, spec, p)
    per_pump = pump_aging(per_synapse, mapping, spec)
    sched = [schedule_aging(s, p) for s in schedules]
    horizon = db.horizon_ms
    report = AgingReport(
        pump_aging=tuple(float(a) for a in per_pump),
        schedule_aging=tuple(sched),
        reliability=tuple(reliability_at(a, p.beta) for a in per_pump),
        schedule_reliability=tuple(reliability_at(a, p.beta) for a in sched),
        log_reliability=tuple(log_reliability_at(a, p.beta) for a in per_pump),
        mttf_ms=tuple(mttf_proxy(a / horizon, p.beta) for a in per_pump),
        synapse_aging=tuple(float(a) for a in per_synapse),
        horizon_ms=horizon,
    )
    logger.info('Aging under %s: max pump %.4g (per-synapse sum), max schedule %.4g',
                policy.label, report.max_aging, max(sched) if sched else 0.0)
    return report
