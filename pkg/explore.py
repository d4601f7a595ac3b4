"""
Design-space exploration: the pumpwear CLI and the sweep runner
"""
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace

import click
import numpy as np

from app import configure_logging, default_jobs
from engine import build_pump_schedules, isi_change, isi_stats, replay, write_delayed_trace, write_schedules
from exceptions import ConfigError, PipelineError, PumpwearError, TraceFormatError
from hardware import DischargePolicy, contiguous_placement, load_config, validate_spec
from mapping import (STRATEGIES, build_partition, check_capacity, cut_spike_count, derive_mapping,
                     load_partition, utilization, write_partition)
from reliability import all_synapse_aging, evaluate_aging, pump_aging
from reports import FORMATS, emit_report, render_sweep_pdf
from workload import gen_network, gen_poisson, lognormal_rates, load_trace, write_trace

logger = logging.getLogger(__name__)

NO_MTTF = -1.0


@dataclass(frozen=True)
class SweepPlan:
    workload: dict
    strategies: tuple
    policies: tuple
    placements: tuple = ()
    config: str = None
    overrides: dict = field(default_factory=dict)
    out: str = None
    fmt: str = 'csv'
    seed: int = 0
    label: str = None


@dataclass(frozen=True)
class ReportRow:
    strategy: str
    policy: str
    placement: str
    pumps: int
    composition: str
    aging_per_pump: str
    aging_max: float
    aging_mean: float
    aging_sched_per_pump: str
    aging_sched_max: float
    aging_sched_mean: float
    reliability_per_pump: str
    reliability_min: float
    log_reliability_min: float
    mttf_proxy_min_ms: float
    isi_mean_ms: float
    isi_defined_neurons: int
    isi_change_mean: float
    isi_cv_mean: float
    cut_spikes: int
    utilization_per_crossbar: str
    spikes_processed: int
    spikes_delayed: int
    total_delay_ms: float
    horizon_ms: float
    norm_aging_max: float = 1.0
    norm_aging_mean: float = 1.0
    norm_aging_sched_max: float = 1.0
    norm_isi_mean: float = 1.0
    runtime_s: float = 0.0


ROW_TYPES = {f.name: f.type for f in fields(ReportRow)}


@dataclass(frozen=True)
class CellFailure:
    strategy: str
    policy: str
    placement: str
    stage: str
    error: str


@dataclass(frozen=True)
class SweepOutcome:
    rows: tuple
    failures: tuple


@dataclass(frozen=True)
class BudgetResult:
    pump_count: int
    placement: tuple
    worst_mttf_ms: float
    met: bool


# Plans

def _parse_placement(value):
    if isinstance(value, str):
        value = [v for v in value.replace('-', ',').split(',') if v.strip()]
    return tuple(int(v) for v in value)


def placed_spec(spec, placement):
    """Swap in a plan placement; the crossbar count stays, so a wrong-length placement fails validation"""
    placement = tuple(placement)
    return replace(spec, placement=placement, pump_count=max(placement) + 1 if placement else spec.pump_count)


def placement_id(placement):
    return '-'.join(str(k) for k in placement)


def load_plan(path):
    """Read a JSON sweep plan; relative paths resolve against the plan's directory"""
    try:
        with open(path, encoding='utf-8') as handle:
            document = json.load(handle)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f'cannot read plan {path}: {exc}') from exc

    known = {'workload', 'strategies', 'policies', 'placements', 'config', 'hardware', 'out', 'format',
             'seed', 'label'}
    unknown = set(document) - known
    if unknown:
        raise ConfigError([f'unknown plan key {key!r}' for key in sorted(unknown)])

    base = os.path.dirname(os.path.abspath(path))

    def resolve(p):
        return p if p is None or os.path.isabs(p) else os.path.join(base, p)

    workload = dict(document.get('workload', {}))
    if 'trace' in workload:
        workload['trace'] = resolve(workload['trace'])

    return SweepPlan(
        workload=workload,
        strategies=tuple(document.get('strategies', ())),
        policies=tuple(DischargePolicy.parse(p) for p in document.get('policies', ())),
        placements=tuple(_parse_placement(p) for p in document.get('placements', ())),
        config=resolve(document.get('config')),
        overrides=dict(document.get('hardware', {})),
        out=resolve(document.get('out')),
        fmt=document.get('format', 'csv'),
        seed=int(document.get('seed', 0)),
        label=document.get('label'),
    )


def validate_plan(plan, spec):
    violations = []
    if not plan.strategies:
        violations.append('plan lists no mapping strategies')
    if not plan.policies:
        violations.append('plan lists no discharge policies')
    for strategy in plan.strategies:
        if strategy not in STRATEGIES:
            violations.append(f'unknown mapping strategy {strategy!r}')
    if plan.fmt not in FORMATS:
        violations.append(f'unknown report format {plan.fmt!r}')
    if 'trace' not in plan.workload and 'generate' not in plan.workload:
        violations.append('workload needs a `trace` path or a `generate` block')
    for placement in plan.placements:
        try:
            validate_spec(placed_spec(spec, placement))
        except ConfigError as exc:
            violations.extend(f'placement {placement_id(placement)}: {v}' for v in exc.violations)
    if violations:
        raise ConfigError(violations)


def build_workload(source, seed=0):
    """Load a trace, or generate a layered network with Poisson trains"""
    if 'trace' in source:
        return load_trace(source['trace'])
    gen = dict(source['generate'])
    net = gen_network(gen['layers'], gen.get('fan_in', 8), seed=seed)
    rate = gen.get('rate_hz', 20.0)
    if gen.get('sigma'):
        rate = lognormal_rates(net.neuron_count, rate, sigma=gen['sigma'], seed=seed)
    db = gen_poisson(net, rate, gen.get('horizon_ms', 1000.0), seed=seed)
    return net, db


# Single cell

def _join(values):
    return ';'.join(repr(float(v)) for v in values)


def _ratio(value, baseline):
    if baseline == 0:
        return 1.0 if value == 0 else 0.0
    return value / baseline


def normalize_row(row, baseline):
    """Fill the normalized columns against the Never row of the same strategy and placement"""
    return replace(row,
                    norm_aging_max=_ratio(row.aging_max, baseline.aging_max),
                    norm_aging_mean=_ratio(row.aging_mean, baseline.aging_mean),
                    norm_aging_sched_max=_ratio(row.aging_sched_max, baseline.aging_sched_max),
                    norm_isi_mean=_ratio(row.isi_mean_ms, baseline.isi_mean_ms))


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except PumpwearError as exc:
        raise PipelineError(name, exc) from exc


def run_single(net, db, spec, params, strategy, policy, seed=0, partition=None, baseline=None):
    """Map, replay, measure ISI and aging for one (strategy, policy, placement) cell"""
    started = time.perf_counter()
    if partition is None:
        partition = _stage('map', build_partition, strategy, net, db, spec, seed)
    mapping = _stage('map', derive_mapping, partition, net, spec)

    result = _stage('replay', replay, net, db, mapping, spec, policy, params)
    schedules = _stage('replay', build_pump_schedules, result)

    reference = _stage('isi', isi_stats, db)
    observed = _stage('isi', isi_stats, result.observed)
    change = _stage('isi', isi_change, reference, observed)
    cvs = [c for c in observed.cv if c is not None]

    report = _stage('aging', evaluate_aging, net, db, mapping, spec, params, policy, schedules)
    finite = [m for m in report.mttf_ms if math.isfinite(m)]

    row = ReportRow(
        strategy=strategy,
        policy=policy.label,
        placement=placement_id(spec.placement),
        pumps=spec.pump_count,
        composition=params.composition,
        aging_per_pump=_join(report.pump_aging),
        aging_max=report.max_aging,
        aging_mean=report.mean_aging,
        aging_sched_per_pump=_join(report.schedule_aging),
        aging_sched_max=max(report.schedule_aging),
        aging_sched_mean=float(np.mean(report.schedule_aging)),
        reliability_per_pump=_join(report.reliability),
        reliability_min=min(report.reliability),
        log_reliability_min=min(report.log_reliability),
        mttf_proxy_min_ms=min(finite) if finite else NO_MTTF,
        isi_mean_ms=observed.mean_ms,
        isi_defined_neurons=observed.defined_neurons,
        isi_change_mean=change.mean,
        isi_cv_mean=float(np.mean(cvs)) if cvs else 0.0,
        cut_spikes=cut_spike_count(partition, net, db),
        utilization_per_crossbar=';'.join(str(int(u)) for u in utilization(mapping, db, net, spec)),
        spikes_processed=result.counters.spikes_processed,
        spikes_delayed=result.counters.spikes_delayed,
        total_delay_ms=result.counters.total_delay_ms,
        horizon_ms=result.horizon_ms,
    )

    if policy.kind != 'never':
        if baseline is None:
            baseline = run_single(net, db, spec, params, strategy, DischargePolicy.never(), seed, partition)
        row = normalize_row(row, baseline)
    return replace(row, runtime_s=time.perf_counter() - started)


# Sweeps

def _run_group(net, db, spec, params, strategy, policies, seed, partition):
    """All policies of one (strategy, placement) pair against one hidden Never baseline"""
    rows, failures = {}, []
    baseline = None
    try:
        baseline = run_single(net, db, spec, params, strategy, DischargePolicy.never(), seed, partition)
    except PipelineError as exc:
        failures.extend(_failure(strategy, p, spec, exc) for p in policies)
        return rows, failures

    for policy in policies:
        if policy.kind == 'never':
            rows[policy] = baseline
            continue
        try:
            rows[policy] = run_single(net, db, spec, params, strategy, policy, seed, partition, baseline)
        except PipelineError as exc:
            failures.append(_failure(strategy, policy, spec, exc))
    return rows, failures


def _failure(strategy, policy, spec, exc):
    logger.warning('Sweep cell %s/%s/%s failed in %s: %s', strategy, policy.label,
                   placement_id(spec.placement), exc.stage, exc.cause)
    return CellFailure(strategy, policy.label, placement_id(spec.placement), exc.stage, str(exc.cause))


def run_sweep(plan, net=None, db=None, spec=None, params=None, jobs=1):
    """Cartesian product of strategies, policies and placements; failed cells are recorded, not fatal"""
    if spec is None or params is None:
        spec, params = load_config(plan.config, plan.overrides)
    validate_plan(plan, spec)
    if net is None or db is None:
        net, db = build_workload(plan.workload, plan.seed)

    placements = plan.placements or (spec.placement,)
    specs = [placed_spec(spec, p) for p in placements]

    partitions, failures = {}, []
    for strategy in plan.strategies:
        try:
            partitions[strategy] = _stage('map', build_partition, strategy, net, db, spec, plan.seed)
            check_capacity(partitions[strategy], net, spec)
        except (PipelineError, PumpwearError) as exc:
            exc = exc if isinstance(exc, PipelineError) else PipelineError('map', exc)
            for cell_spec in specs:
                failures.extend(_failure(strategy, p, cell_spec, exc) for p in plan.policies)
            partitions.pop(strategy, None)

    groups = [(strategy, index) for strategy in plan.strategies if strategy in partitions
              for index in range(len(specs))]
    logger.info('Sweep: %d strategies x %d policies x %d placements (%d groups, %d jobs)',
                len(plan.strategies), len(plan.policies), len(specs), len(groups), jobs)

    args = [(net, db, specs[index], params, strategy, plan.policies, plan.seed, partitions[strategy])
            for strategy, index in groups]
    if jobs > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_group, *zip(*args)))
    else:
        results = [_run_group(*a) for a in args]

    rows = []
    for (strategy, index), (group_rows, group_failures) in zip(groups, results):
        failures.extend(group_failures)
        rows.extend(group_rows[p] for p in plan.policies if p in group_rows)

    # Order follows the plan axes, not completion order
    strategy_rank = {s: i for i, s in enumerate(plan.strategies)}
    placement_rank = {placement_id(s.placement): i for i, s in enumerate(specs)}
    policy_rank = {p.label: i for i, p in enumerate(plan.policies)}
    rows.sort(key=lambda r: (strategy_rank[r.strategy], placement_rank[r.placement], policy_rank[r.policy]))

    logger.info('Sweep finished: %d rows, %d failed cells', len(rows), len(failures))
    return SweepOutcome(rows=tuple(rows), failures=tuple(failures))


def pump_budget(net, db, spec, params, strategy, policy, target_mttf_ms, max_pumps=None, seed=0):
    """Smallest number of contiguously placed pumps whose worst MTTF proxy meets the target"""
    partition = build_partition(strategy, net, db, spec, seed)
    mapping = derive_mapping(partition, net, spec)
    per_synapse = all_synapse_aging(net, db, policy, spec, params)
    limit = min(max_pumps or spec.crossbar_count, spec.crossbar_count)

    best = None
    for pumps in range(1, limit + 1):
        candidate = spec.with_placement(contiguous_placement(spec.crossbar_count, pumps), pumps)
        worst = float(np.max(pump_aging(per_synapse, mapping, candidate)))
        mttf = db.horizon_ms / worst if worst > 0 else math.inf
        logger.debug('Budget: %d pumps -> worst MTTF proxy %.4g ms', pumps, mttf)
        best = BudgetResult(pumps, candidate.placement, mttf, mttf >= target_mttf_ms)
        if best.met:
            break
    return best


# CLI

def _parse_sets(pairs):
    overrides = {}
    for pair in pairs:
        if '=' not in pair:
            raise click.BadParameter(f'expected key=value, got {pair!r}', param_hint='--set')
        key, value = pair.split('=', 1)
        overrides[key.strip()] = value.strip()
    return overrides


def config_options(fn):
    fn = click.option('--set', 'sets', multiple=True, metavar='KEY=VALUE',
                      help='Override one hardware or NBTI parameter.')(fn)
    fn = click.option('--config', type=click.Path(exists=True, dir_okay=False),
                      help='JSON hardware/NBTI config file.')(fn)
    return fn


def _load(config, sets):
    return load_config(config, _parse_sets(sets))


def _echo_json(data):
    click.echo(json.dumps(data, indent=2))


@click.group()
@click.option('--log-level', default=None, help='Logging level (default from PUMPWEAR_LOG_LEVEL).')
def cli(log_level):
    """Charge pump aging and ISI exploration for crossbar SNN hardware"""
    if log_level:
        logging.getLogger().setLevel(log_level.upper())


@cli.command()
@click.option('--layers', default='64,64,32', show_default=True, help='Comma-separated layer sizes.')
@click.option('--fan-in', default=8, show_default=True)
@click.option('--rate', 'rate_hz', default=20.0, show_default=True, help='Mean firing rate (Hz).')
@click.option('--sigma', default=0.0, show_default=True, help='Lognormal rate skew; 0 keeps rates uniform.')
@click.option('--horizon', 'horizon_ms', default=1000.0, show_default=True)
@click.option('--seed', default=0, show_default=True)
@click.option('--out', required=True, type=click.Path(dir_okay=False))
def gen(layers, fan_in, rate_hz, sigma, horizon_ms, seed, out):
    """Generate a synthetic workload trace"""
    sizes = [int(v) for v in layers.split(',') if v.strip()]
    source = {'generate': {'layers': sizes, 'fan_in': fan_in, 'rate_hz': rate_hz,
                           'sigma': sigma, 'horizon_ms': horizon_ms}}
    net, db = build_workload(source, seed)
    write_trace(net, db, out)
    click.echo(f'{net.neuron_count} neurons, {net.synapse_count} synapses, {db.total_spikes} spikes -> {out}')


@cli.command('map')
@config_options
@click.option('--trace', required=True, type=click.Path(exists=True, dir_okay=False))
@click.option('--strategy', type=click.Choice(sorted(STRATEGIES)), default='mincomm', show_default=True)
@click.option('--seed', default=0, show_default=True)
@click.option('--out', type=click.Path(dir_okay=False), help='Partition file to write.')
def map_cmd(config, sets, trace, strategy, seed, out):
    """Map a trace onto crossbars and report cut spikes and utilization"""
    spec, _ = _load(config, sets)
    net, db = load_trace(trace)
    partition = build_partition(strategy, net, db, spec, seed)
    mapping = derive_mapping(partition, net, spec)
    if out:
        write_partition(partition, out)
    _echo_json({
        'strategy': strategy,
        'cut_spikes': cut_spike_count(partition, net, db),
        'utilization': [int(u) for u in utilization(mapping, db, net, spec)],
    })


@cli.command('eval')
@config_options
@click.option('--trace', required=True, type=click.Path(exists=True, dir_okay=False))
@click.option('--mapping', 'mapping_path', type=click.Path(exists=True, dir_okay=False),
              help='Partition file; mapped with --strategy when omitted.')
@click.option('--strategy', type=click.Choice(sorted(STRATEGIES)), default='mincomm', show_default=True)
@click.option('--policy', default='never', show_default=True, help='never | perspike | interval:<ms>')
@click.option('--format', 'fmt', type=click.Choice(FORMATS), default='json', show_default=True)
@click.option('--seed', default=0, show_default=True)
@click.option('--out', type=click.Path(dir_okay=False))
@click.option('--schedules', type=click.Path(dir_okay=False), help='Dump pump voltage schedules here.')
@click.option('--delayed-trace', type=click.Path(dir_okay=False), help='Write the delayed trace here.')
def eval_cmd(config, sets, trace, mapping_path, strategy, policy, fmt, seed, out, schedules, delayed_trace):
    """Evaluate one mapping under one discharge policy"""
    spec, params = _load(config, sets)
    net, db = load_trace(trace)
    policy = DischargePolicy.parse(policy)
    partition = load_partition(mapping_path, spec.crossbar_count) if mapping_path else None
    row = run_single(net, db, spec, params, strategy if partition is None else 'file', policy, seed, partition)

    if schedules or delayed_trace:
        result = replay(net, db, derive_mapping(partition or build_partition(strategy, net, db, spec, seed),
                                                net, spec), spec, policy, params)
        if schedules:
            write_schedules(build_pump_schedules(result), schedules)
        if delayed_trace:
            write_delayed_trace(net, result, delayed_trace)

    if out:
        emit_report([row], fmt, out)
    else:
        _echo_json({f.name: getattr(row, f.name) for f in fields(row)})


@cli.command()
@click.argument('plan_path', type=click.Path(exists=True, dir_okay=False))
@config_options
@click.option('--format', 'fmt', type=click.Choice(FORMATS), default=None)
@click.option('--seed', type=int, default=None, help='Override the plan seed.')
@click.option('--out', type=click.Path(dir_okay=False), default=None)
@click.option('--jobs', type=int, default=None, help='Parallel sweep groups (default PUMPWEAR_JOBS).')
@click.option('--store', is_flag=True, help='Persist the run in the results database.')
@click.option('--pdf', type=click.Path(dir_okay=False), help='Also write a PDF summary.')
def sweep(plan_path, config, sets, fmt, seed, out, jobs, store, pdf):
    """Run a sweep plan and write its report"""
    plan = load_plan(plan_path)
    overrides = dict(plan.overrides)
    overrides.update(_parse_sets(sets))
    plan = SweepPlan(
        workload=plan.workload, strategies=plan.strategies, policies=plan.policies,
        placements=plan.placements, config=config or plan.config, overrides=overrides,
        out=out or plan.out, fmt=fmt or plan.fmt, seed=plan.seed if seed is None else seed,
        label=plan.label or os.path.basename(plan_path),
    )
    if not plan.out:
        raise click.UsageError('no output path: pass --out or set `out` in the plan')

    outcome = run_sweep(plan, jobs=jobs or default_jobs())
    if not outcome.rows:
        raise PumpwearError(f'every sweep cell failed ({len(outcome.failures)} failures)')
    emit_report(outcome.rows, plan.fmt, plan.out)
    if pdf:
        with open(pdf, 'wb') as handle:
            handle.write(render_sweep_pdf(outcome.rows, meta={'Plan': plan.label, 'Seed': plan.seed,
                                                             'Failed cells': len(outcome.failures)}))
    if store:
        from app import create_app
        from results import save_sweep
        with create_app().app_context():
            run_id = save_sweep(plan, outcome)
        click.echo(f'stored as run {run_id}')
    click.echo(f'{len(outcome.rows)} rows, {len(outcome.failures)} failed cells -> {plan.out}')


@cli.command()
@config_options
@click.option('--trace', required=True, type=click.Path(exists=True, dir_okay=False))
@click.option('--strategy', type=click.Choice(sorted(STRATEGIES)), default='balanced', show_default=True)
@click.option('--policy', default='never', show_default=True)
@click.option('--target-mttf', 'target_mttf_ms', type=float, required=True, help='Target MTTF proxy (ms).')
@click.option('--max-pumps', type=int, default=None)
@click.option('--seed', default=0, show_default=True)
def budget(config, sets, trace, strategy, policy, target_mttf_ms, max_pumps, seed):
    """Find the smallest pump count meeting a lifetime target"""
    spec, params = _load(config, sets)
    net, db = load_trace(trace)
    result = pump_budget(net, db, spec, params, strategy, DischargePolicy.parse(policy),
                         target_mttf_ms, max_pumps, seed)
    _echo_json({
        'pump_count': result.pump_count,
        'placement': list(result.placement),
        'worst_mttf_ms': result.worst_mttf_ms if math.isfinite(result.worst_mttf_ms) else None,
        'met': result.met,
    })


@cli.command()
@click.option('--host', default='0.0.0.0', show_default=True)
@click.option('--port', default=5000, show_default=True)
def serve(host, port):
    """Serve stored sweep runs over the read-only results API"""
    from app import create_app
    create_app().run(host=host, port=port)


def main(argv=None):
    """Run the CLI and return its exit code: 1 for usage and config errors, 2 for runtime failures"""
    configure_logging()
    try:
        result = cli.main(args=argv, prog_name='pumpwear', standalone_mode=False)
    except click.exceptions.Abort:
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except PipelineError as exc:
        click.echo(f'error: {exc}', err=True)
        return 1 if isinstance(exc.cause, (ConfigError, TraceFormatError)) else 2
    except (ConfigError, TraceFormatError) as exc:
        click.echo(f'error: {exc}', err=True)
        return 1
    except (PumpwearError, OSError) as exc:
        logger.error('%s', exc)
        click.echo(f'error: {exc}', err=True)
        return 2
    return result if isinstance(result, int) else 0


def run():
    sys.exit(main())
