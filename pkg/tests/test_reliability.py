import math

import numpy as np
import pytest

from conftest import make_spec
from engine import VoltageSchedule, build_pump_schedules, replay
from hardware import DischargePolicy, NbtiParams
from mapping import MappingMatrix, NeuronPartition, derive_mapping, map_round_robin
from reliability import (all_synapse_aging, defects, evaluate_aging, log_reliability_at, mttf_proxy, pump_aging,
                         reliability_at, schedule_aging, synapse_aging, synapse_schedule)

LINEAR = NbtiParams(g0=1.0, m_exp=2.0, n_exp=1.0, v_th=0.5)
LEVELS = (1.2, 1.8, 3.0)


def _random_schedule(rng, levels=LEVELS):
    cuts = np.sort(rng.uniform(0.0, 100.0, size=rng.integers(1, 12)))
    bounds = np.concatenate([[0.0], cuts, [100.0]])
    return [(float(a), float(b), float(rng.choice(levels))) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


# Generated defects

def test_defects_examples():
    assert defects(1.5, 2.0, LINEAR) == pytest.approx(2.0)
    assert defects(0.5, 7.0, LINEAR) == 0.0
    assert defects(0.3, 7.0, LINEAR) == 0.0
    assert defects(3.0, 0.0, LINEAR) == 0.0


def test_defects_increase_with_voltage_and_time(params):
    assert defects(1.8, 1.0, params) < defects(3.0, 1.0, params)
    assert defects(1.8, 1.0, params) < defects(1.8, 2.0, params)


# Schedule aging

@pytest.mark.parametrize('composition', ['equivalent_time', 'segments'])
def test_idle_schedule(composition):
    p = NbtiParams(g0=1.0, m_exp=2.0, n_exp=1.0, v_th=0.45, composition=composition)
    assert schedule_aging(VoltageSchedule(0, ((0.0, 60.0, 1.8),)), p) == pytest.approx(1.35 ** 2 * 60.0)
    assert schedule_aging(VoltageSchedule(0, ()), p) == 0.0


def test_equivalent_time_agrees_with_defects_on_one_segment(params):
    assert schedule_aging([(0.0, 40.0, 3.0)], params) == pytest.approx(defects(3.0, 40.0, params))


def test_equivalent_time_ignores_subdivision(params):
    whole = schedule_aging([(0.0, 10.0, 1.8), (10.0, 30.0, 3.0)], params)
    split = schedule_aging([(0.0, 4.0, 1.8), (4.0, 10.0, 1.8), (10.0, 30.0, 3.0)], params)
    assert split == pytest.approx(whole, rel=1e-12)


def test_segment_properties_on_random_schedules():
    rng = np.random.default_rng(5)
    p = NbtiParams(composition='segments')
    for _ in range(1000):
        first, second = _random_schedule(rng), _random_schedule(rng)
        shifted = [(a + 100.0, b + 100.0, v) for a, b, v in second]
        # Additive over concatenation with segments preserved
        assert schedule_aging(first + shifted, p) == pytest.approx(
            schedule_aging(first, p) + schedule_aging(second, p), rel=1e-12)
        # Zero stress below threshold
        assert schedule_aging([(a, b, 0.4) for a, b, _ in first], p) == 0.0
        # Raising one segment raises the total
        i = int(rng.integers(len(first)))
        a, b, v = first[i]
        raised = list(first)
        raised[i] = (a, b, v + 0.5)
        assert schedule_aging(raised, p) > schedule_aging(first, p)


def test_equivalent_time_monotone_on_random_schedules(params):
    rng = np.random.default_rng(6)
    for _ in range(1000):
        schedule = _random_schedule(rng)
        i = int(rng.integers(len(schedule)))
        a, b, v = schedule[i]
        raised = list(schedule)
        raised[i] = (a, b, v + 0.5)
        assert schedule_aging(raised, params) > schedule_aging(schedule, params) > 0.0


def test_linear_time_exponent_splits_freely():
    p = NbtiParams(n_exp=1.0, composition='segments')
    assert schedule_aging([(0.0, 25.0, 1.8), (25.0, 60.0, 1.8)], p) == pytest.approx(
        schedule_aging([(0.0, 60.0, 1.8)], p))


def test_aging_scales_with_g0():
    schedule = [(0.0, 5.0, 1.8), (5.0, 5.1, 3.0), (5.1, 9.0, 1.2)]
    assert schedule_aging(schedule, NbtiParams(g0=3.0)) == pytest.approx(3.0 * schedule_aging(schedule, NbtiParams()))


# Per-synapse aging

def test_empty_train_ages_at_idle(spec, params):
    assert synapse_aging((), DischargePolicy.never(), spec, params, 60.0) == pytest.approx(defects(1.8, 60.0, params))


def test_single_spike_per_spike_schedule(spec, params):
    schedule = synapse_schedule((10.0,), DischargePolicy.per_spike(), spec, 60.0)
    assert schedule.segments == ((0.0, 10.0, 1.8), (10.0, pytest.approx(10.1), 3.0), (pytest.approx(10.1), 60.0, 1.2))
    assert synapse_aging((10.0,), DischargePolicy.per_spike(), spec, params, 60.0) < \
        synapse_aging((10.0,), DischargePolicy.never(), spec, params, 60.0)


def test_policy_ordering_on_random_trains(spec, params):
    rng = np.random.default_rng(9)
    policies = [DischargePolicy.fixed_interval(d) for d in (10, 50, 100)] + [DischargePolicy.never()]
    for _ in range(50):
        train = np.unique(rng.uniform(0.0, 1000.0, size=rng.integers(5, 40)))
        per_spike = synapse_aging(train, DischargePolicy.per_spike(), spec, params, 1000.0)
        aging = [synapse_aging(train, policy, spec, params, 1000.0) for policy in policies]
        assert per_spike < aging[-1]
        assert aging == sorted(aging)


def test_all_synapse_aging_shares_pre_neuron_trains(chain, chain_db, spec, params):
    values = all_synapse_aging(chain, chain_db, DischargePolicy.never(), spec, params)
    assert values.shape == (3,)
    assert values[0] == pytest.approx(synapse_aging(chain_db.trains[0], DischargePolicy.never(), spec, params, 100.0))
    assert values[0] > values[2]


# Per-pump aggregation

def test_pump_aging_hand_sum():
    spec = make_spec(crossbars=2, pumps=2)
    mapping = MappingMatrix(crossbars=(0, 0, 1), partition=NeuronPartition((0,), 2))
    assert list(pump_aging([1.0, 2.0, 4.0], mapping, spec)) == [3.0, 4.0]


def test_pump_aging_single_pump_conserves():
    spec = make_spec(crossbars=3, pumps=1)
    mapping = MappingMatrix(crossbars=(0, 2, 1, 2), partition=NeuronPartition((0,), 3))
    assert pump_aging([0.5, 1.5, 2.5, 3.5], mapping, spec)[0] == pytest.approx(8.0)


def test_pump_aging_matches_triple_loop():
    rng = np.random.default_rng(21)
    for _ in range(100):
        crossbars = int(rng.integers(1, 9))
        pumps = int(rng.integers(1, min(crossbars, 4) + 1))
        spec = make_spec(crossbars=crossbars, pumps=pumps).with_placement(
            tuple(rng.permutation(np.arange(crossbars) % pumps)), pumps)
        synapses = int(rng.integers(0, 201))
        mapping = MappingMatrix(crossbars=tuple(int(c) for c in rng.integers(0, crossbars, size=synapses)),
                                partition=NeuronPartition((0,), crossbars))
        per_synapse = rng.uniform(0.0, 10.0, size=synapses)

        m, p = mapping.matrix(), np.zeros((crossbars, pumps), dtype=int)
        p[np.arange(crossbars), list(spec.placement)] = 1
        expected = np.zeros(pumps)
        for i in range(synapses):
            for j in range(crossbars):
                for k in range(pumps):
                    expected[k] += m[i, j] * p[j, k] * per_synapse[i]

        actual = pump_aging(per_synapse, mapping, spec)
        np.testing.assert_allclose(actual, expected, rtol=1e-12, atol=0.0)
        assert actual.sum() == pytest.approx(per_synapse.sum(), rel=1e-12)


# Reliability and lifetime

def test_reliability_at():
    assert reliability_at(0.0, 1.0) == 1.0
    assert reliability_at(1.0, 1.0) == pytest.approx(0.36788, abs=1e-5)
    values = [reliability_at(a, 1.7) for a in np.linspace(0.0, 5.0, 50)]
    assert all(x > y for x, y in zip(values, values[1:]))


def test_log_reliability_survives_underflow():
    assert reliability_at(2110.0, 1.0) == 0.0
    assert log_reliability_at(2110.0, 1.0) == -2110.0
    assert log_reliability_at(0.0, 1.7) == 0.0
    assert log_reliability_at(4.0, 0.5) == pytest.approx(-2.0)
    values = [log_reliability_at(a, 1.3) for a in np.linspace(0.0, 5000.0, 50)]
    assert all(x > y for x, y in zip(values, values[1:]))


def test_mttf_proxy():
    assert mttf_proxy(0.1) == pytest.approx(10.0)
    assert mttf_proxy(0.05) == pytest.approx(2 * mttf_proxy(0.1))
    assert mttf_proxy(0.0) == math.inf
    assert mttf_proxy(8.3) / mttf_proxy(7.1) == pytest.approx(7.1 / 8.3)


def test_evaluate_aging(poisson_workload, params):
    net, db = poisson_workload
    spec = make_spec()
    mapping = derive_mapping(map_round_robin(net, spec), net, spec)
    policy = DischargePolicy.fixed_interval(50)
    schedules = build_pump_schedules(replay(net, db, mapping, spec, policy, params))
    report = evaluate_aging(net, db, mapping, spec, params, policy, schedules)

    assert len(report.pump_aging) == spec.pump_count
    assert sum(report.pump_aging) == pytest.approx(sum(report.synapse_aging), rel=1e-12)
    assert all(0.0 <= r <= 1.0 for r in report.reliability)
    assert report.log_reliability == pytest.approx(tuple(-a ** params.beta for a in report.pump_aging))
    assert all(math.exp(log_r) == r for log_r, r in zip(report.log_reliability, report.reliability))
    assert report.mttf_ms[0] == pytest.approx(db.horizon_ms / report.pump_aging[0])
    # One merged pulse train per pump counts idle time once
    assert max(report.schedule_aging) < report.max_aging
