import json

import pytest
from click.testing import CliRunner

from conftest import make_network, make_spec
from exceptions import ConfigError, PipelineError
from explore import (NO_MTTF, SweepPlan, build_workload, cli, load_plan, main, pump_budget, run_single, run_sweep,
                     validate_plan)
from hardware import DischargePolicy
from mapping import NeuronPartition
from reliability import defects
from reports import emit_report
from workload import SpikeDb, gen_network, gen_poisson, load_trace, write_trace

GENERATED = {'generate': {'layers': [6, 6], 'fan_in': 2, 'rate_hz': 20.0, 'horizon_ms': 200.0}}
NEVER = DischargePolicy.never()
PER_SPIKE = DischargePolicy.per_spike()


def _plan(strategies=('roundrobin',), policies=(NEVER,), **kwargs):
    return SweepPlan(workload=GENERATED, strategies=tuple(strategies), policies=tuple(policies), **kwargs)


# Single cells

def test_isolated_neuron_row(spec, params):
    net = make_network(1, [])
    db = SpikeDb(horizon_ms=50.0, trains=[(1.0, 5.0, 9.0)])
    row = run_single(net, db, spec, params, 'roundrobin', NEVER)

    assert row.cut_spikes == 0
    assert row.total_delay_ms == 0.0
    assert row.spikes_processed == 0
    assert row.aging_max == 0.0
    assert row.reliability_min == 1.0
    assert row.log_reliability_min == 0.0
    assert row.composition == 'equivalent_time'
    assert row.mttf_proxy_min_ms == NO_MTTF
    assert row.aging_sched_max == pytest.approx(defects(1.8, 50.0, params))
    assert row.isi_mean_ms == pytest.approx(4.0)
    assert row.utilization_per_crossbar == '0;0;0;0;0;0'


def test_single_synapse_per_spike_against_never(single_synapse, params):
    net, db = single_synapse
    spec = make_spec(crossbars=1, pumps=1)
    partition = NeuronPartition((0, 0), 1)
    never = run_single(net, db, spec, params, 'file', NEVER, partition=partition)
    per_spike = run_single(net, db, spec, params, 'file', PER_SPIKE, partition=partition, baseline=never)

    assert never.policy == 'never' and per_spike.policy == 'perspike'
    assert never.isi_change_mean == 0.0
    assert never.norm_aging_sched_max == 1.0
    assert per_spike.spikes_delayed == 10
    assert per_spike.isi_change_mean > 0.1
    assert per_spike.norm_isi_mean > 1.0
    assert per_spike.norm_aging_max < 1.0
    assert per_spike.norm_aging_sched_max < 1.0
    assert per_spike.runtime_s > 0.0


def test_run_single_computes_missing_baseline(single_synapse, params):
    net, db = single_synapse
    spec = make_spec(crossbars=1, pumps=1)
    row = run_single(net, db, spec, params, 'roundrobin', PER_SPIKE)
    assert row.norm_aging_max < 1.0


def test_run_single_tags_failing_stage(single_synapse, params):
    net, db = single_synapse
    with pytest.raises(PipelineError) as info:
        run_single(net, db, make_spec(crossbars=1, pumps=1), params, 'roundrobin',
                   DischargePolicy.fixed_interval(1.0))
    assert info.value.stage == 'replay'


# Sweeps

def test_sweep_is_deterministic(tmp_path, poisson_workload, params):
    net, db = poisson_workload
    plan = _plan(strategies=('roundrobin', 'balanced', 'mincomm'),
                 policies=(NEVER, PER_SPIKE, DischargePolicy.fixed_interval(50)))
    reports = []
    for name in ('a.csv', 'b.csv'):
        outcome = run_sweep(plan, net, db, make_spec(), params)
        emit_report(outcome.rows, 'csv', tmp_path / name, include_runtime=False)
        reports.append((tmp_path / name).read_bytes())
    assert reports[0] == reports[1]
    assert len(outcome.rows) == 9
    assert [r.strategy for r in outcome.rows[:3]] == ['roundrobin'] * 3
    assert [r.policy for r in outcome.rows[:3]] == ['never', 'perspike', 'interval:50']


def test_parallel_sweep_matches_serial(poisson_workload, params):
    net, db = poisson_workload
    plan = _plan(strategies=('roundrobin', 'balanced'), policies=(NEVER, PER_SPIKE),
                 placements=((0, 0, 0, 1, 1, 1), (0, 1, 0, 1, 0, 1)))
    serial = run_sweep(plan, net, db, make_spec(), params)
    parallel = run_sweep(plan, net, db, make_spec(), params, jobs=2)
    strip = [(r.strategy, r.policy, r.placement, r.aging_max, r.total_delay_ms) for r in serial.rows]
    assert strip == [(r.strategy, r.policy, r.placement, r.aging_max, r.total_delay_ms) for r in parallel.rows]
    assert len(serial.rows) == 2 * 2 * 2


def test_never_rows_normalize_to_one(poisson_workload, params):
    net, db = poisson_workload
    outcome = run_sweep(_plan(strategies=('balanced', 'mincomm')), net, db, make_spec(), params)
    for row in outcome.rows:
        assert (row.norm_aging_max, row.norm_aging_mean, row.norm_aging_sched_max,
                row.norm_isi_mean) == (1.0, 1.0, 1.0, 1.0)


def test_shorter_intervals_trade_latency_for_aging(params):
    policies = tuple(DischargePolicy.fixed_interval(d) for d in (10, 50, 100)) + (NEVER,)
    plan = _plan(policies=policies)
    for seed in range(30):
        net = gen_network([20, 30, 20], fan_in=10, seed=seed)
        db = gen_poisson(net, 20.0, 1000.0, seed=seed)
        rows = run_sweep(plan, net, db, make_spec(), params).rows
        assert [r.policy for r in rows] == ['interval:10', 'interval:50', 'interval:100', 'never']

        for column in ('norm_aging_max', 'norm_aging_mean'):
            values = [getattr(r, column) for r in rows]
            assert values == sorted(values)
            assert values[-1] == 1.0
        delays = [r.total_delay_ms for r in rows]
        assert delays == sorted(delays, reverse=True)
        changes = [r.isi_change_mean for r in rows]
        assert changes == sorted(changes, reverse=True), f'seed {seed}'


def test_failed_cells_do_not_stop_the_sweep(single_synapse, params):
    net, db = single_synapse
    plan = _plan(policies=(NEVER, DischargePolicy.fixed_interval(1.0), PER_SPIKE))
    outcome = run_sweep(plan, net, db, make_spec(crossbars=1, pumps=1), params)
    assert [r.policy for r in outcome.rows] == ['never', 'perspike']
    assert len(outcome.failures) == 1
    failure = outcome.failures[0]
    assert (failure.policy, failure.stage) == ('interval:1', 'replay')
    assert 't_recover' in failure.error


def test_capacity_failure_covers_every_policy(chain, chain_db, params):
    plan = _plan(strategies=('roundrobin',), policies=(NEVER, PER_SPIKE))
    outcome = run_sweep(plan, chain, chain_db, make_spec(crossbars=2, pumps=1, cols=1), params)
    assert outcome.rows == ()
    assert {(f.policy, f.stage) for f in outcome.failures} == {('never', 'map'), ('perspike', 'map')}


def test_validate_plan(spec):
    validate_plan(_plan(), spec)
    with pytest.raises(ConfigError) as info:
        validate_plan(SweepPlan(workload={}, strategies=('greedy',), policies=(), fmt='xml',
                                placements=((0, 0, -1, 1, 1, 1),)), spec)
    violations = info.value.violations
    assert len(violations) == 5
    assert any('greedy' in v for v in violations)
    assert any(v.startswith('placement 0-0--1-1-1-1') for v in violations)


def test_validate_plan_keeps_the_crossbar_count(spec):
    with pytest.raises(ConfigError) as info:
        validate_plan(_plan(placements=((0, 1),)), spec)
    assert info.value.violations == ['placement 0-1: placement has 2 entries for 6 crossbars']
    validate_plan(_plan(placements=((0, 1, 2, 0, 1, 2),)), spec)


# Plans and workloads

def test_load_plan_resolves_relative_paths(tmp_path):
    path = tmp_path / 'plan.json'
    path.write_text(json.dumps({
        'workload': {'trace': 'net.trace'}, 'strategies': ['balanced'],
        'policies': ['never', 'interval:50'], 'placements': ['0-1-0-1-0-1'],
        'hardware': {'t_recover_ms': 2.0}, 'out': 'out/report.json', 'format': 'json', 'seed': 4,
    }))
    plan = load_plan(path)
    assert plan.workload['trace'] == str(tmp_path / 'net.trace')
    assert plan.out == str(tmp_path / 'out' / 'report.json')
    assert plan.policies == (NEVER, DischargePolicy.fixed_interval(50))
    assert plan.placements == ((0, 1, 0, 1, 0, 1),)
    assert plan.overrides == {'t_recover_ms': 2.0}
    assert plan.seed == 4


def test_load_plan_rejects_unknown_keys(tmp_path):
    path = tmp_path / 'plan.json'
    path.write_text(json.dumps({'workload': {}, 'sweep': []}))
    with pytest.raises(ConfigError, match='sweep'):
        load_plan(path)
    with pytest.raises(ConfigError, match='cannot read plan'):
        load_plan(tmp_path / 'missing.json')


def test_build_workload_is_seeded():
    first = build_workload(GENERATED, seed=2)
    assert build_workload(GENERATED, seed=2) == first
    assert first[0].neuron_count == 12


# Pump budget

def test_pump_budget(poisson_workload, params):
    net, db = poisson_workload
    spec = make_spec()
    assert pump_budget(net, db, spec, params, 'balanced', NEVER, 0.0).pump_count == 1

    one = pump_budget(net, db, spec, params, 'balanced', NEVER, 0.0)
    target = 2.5 * one.worst_mttf_ms
    result = pump_budget(net, db, spec, params, 'balanced', NEVER, target)
    assert result.met
    assert 1 < result.pump_count <= 6
    assert result.worst_mttf_ms >= target

    unreachable = pump_budget(net, db, spec, params, 'balanced', NEVER, 1e12, max_pumps=3)
    assert not unreachable.met
    assert unreachable.pump_count == 3
    assert unreachable.placement == (0, 0, 1, 1, 2, 2)


# Command line

@pytest.fixture
def trace_file(tmp_path):
    net = gen_network([8, 8], fan_in=3, seed=1)
    db = gen_poisson(net, 30.0, 300.0, seed=1)
    path = tmp_path / 'net.trace'
    write_trace(net, db, path)
    return path


def test_cli_gen(tmp_path):
    out = tmp_path / 'gen.trace'
    result = CliRunner().invoke(cli, ['gen', '--layers', '4,6,3', '--fan-in', '2', '--seed', '3', '--out', str(out)])
    assert result.exit_code == 0, result.output
    net, _ = load_trace(out)
    assert net.neuron_count == 13


def test_cli_map(tmp_path, trace_file):
    out = tmp_path / 'map.csv'
    result = CliRunner().invoke(cli, ['map', '--trace', str(trace_file), '--strategy', 'balanced',
                                      '--out', str(out)])
    assert result.exit_code == 0, result.output
    report = json.loads(result.stdout)
    assert report['strategy'] == 'balanced'
    assert len(report['utilization']) == 6
    assert out.read_text().startswith('NRN,0,')


def test_cli_eval_with_dumps(tmp_path, trace_file):
    schedules, delayed = tmp_path / 'pumps.csv', tmp_path / 'delayed.trace'
    result = CliRunner().invoke(cli, ['eval', '--trace', str(trace_file), '--policy', 'perspike',
                                      '--schedules', str(schedules), '--delayed-trace', str(delayed)])
    assert result.exit_code == 0, result.output
    row = json.loads(result.stdout)
    assert row['policy'] == 'perspike'
    assert row['composition'] == 'equivalent_time'
    assert row['norm_aging_max'] < 1.0
    assert 'PUMP,1,' in schedules.read_text()
    assert load_trace(delayed)[0] == load_trace(trace_file)[0]


def test_cli_sweep(tmp_path, trace_file):
    plan = tmp_path / 'plan.json'
    plan.write_text(json.dumps({'workload': {'trace': trace_file.name}, 'strategies': ['roundrobin', 'mincomm'],
                                'policies': ['never', 'interval:50'], 'out': 'report.csv'}))
    pdf = tmp_path / 'report.pdf'
    result = CliRunner().invoke(cli, ['sweep', str(plan), '--pdf', str(pdf), '--jobs', '1'])
    assert result.exit_code == 0, result.output
    lines = (tmp_path / 'report.csv').read_text().splitlines()
    assert len(lines) == 5
    assert lines[0].startswith('strategy,policy,placement,')
    assert pdf.read_bytes().startswith(b'%PDF')


def test_cli_budget(trace_file):
    result = CliRunner().invoke(cli, ['budget', '--trace', str(trace_file), '--target-mttf', '0'])
    assert result.exit_code == 0, result.output
    assert json.loads(result.stdout)['pump_count'] == 1


def test_main_exit_codes(tmp_path, trace_file):
    assert main(['map', '--trace', str(trace_file)]) == 0
    assert main(['map', '--trace', str(trace_file), '--set', 'voltage=3']) == 1
    assert main(['map', '--trace', str(trace_file), '--set', 'crossbar_count']) == 1
    assert main(['eval', '--trace', str(trace_file), '--policy', 'sometimes']) == 1
    assert main(['eval', '--trace', str(trace_file), '--policy', 'interval:1']) == 2

    bad = tmp_path / 'bad.trace'
    bad.write_text('# pumpwear trace v1\nT_MS=oops\n')
    assert main(['map', '--trace', str(bad)]) == 1


def test_main_reports_all_failed_sweep(tmp_path, trace_file):
    plan = tmp_path / 'plan.json'
    plan.write_text(json.dumps({'workload': {'trace': str(trace_file)}, 'strategies': ['roundrobin'],
                                'policies': ['interval:1'], 'out': str(tmp_path / 'r.csv')}))
    assert main(['sweep', str(plan)]) == 2
    assert not (tmp_path / 'r.csv').exists()


def test_main_rejects_short_placement_before_running(tmp_path, trace_file):
    plan = tmp_path / 'plan.json'
    plan.write_text(json.dumps({'workload': {'trace': str(trace_file)}, 'strategies': ['roundrobin'],
                                'policies': ['never'], 'placements': ['0-1'], 'out': str(tmp_path / 'r.csv')}))
    assert main(['sweep', str(plan)]) == 1
    assert not (tmp_path / 'r.csv').exists()


def test_nbti_overrides_reach_the_row(trace_file):
    result = CliRunner().invoke(cli, ['eval', '--trace', str(trace_file), '--set', 'g0=2.0'])
    doubled = json.loads(result.stdout)['aging_max']
    base = json.loads(CliRunner().invoke(cli, ['eval', '--trace', str(trace_file)]).stdout)['aging_max']
    assert doubled == pytest.approx(2.0 * base)


def test_rows_name_their_aging_composition(trace_file):
    result = CliRunner().invoke(cli, ['eval', '--trace', str(trace_file), '--set', 'composition=segments'])
    assert result.exit_code == 0, result.output
    assert json.loads(result.stdout)['composition'] == 'segments'
