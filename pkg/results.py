"""
Read-only results API over stored sweep runs
"""
import io
import json
import logging
from dataclasses import asdict

from flask import Blueprint, Response, jsonify, request, send_file

from app import db
from models import ReportRecord, SweepRun
from reports import render_sweep_pdf, rows_to_csv_text

logger = logging.getLogger(__name__)

results_bp = Blueprint('results', __name__)


def save_sweep(plan, outcome):
    """Persist a sweep outcome; failed cells are kept as records with status 'failed'"""
    run = SweepRun(
        label=plan.label,
        seed=plan.seed,
        plan_json=json.dumps({
            'workload': plan.workload,
            'strategies': list(plan.strategies),
            'policies': [p.label for p in plan.policies],
            'placements': [list(p) for p in plan.placements],
            'hardware': plan.overrides,
            'format': plan.fmt,
        }),
        row_count=len(outcome.rows),
        failure_count=len(outcome.failures),
    )
    db.session.add(run)

    position = 0
    for row in outcome.rows:
        run.records.append(ReportRecord(
            position=position, strategy=row.strategy, policy=row.policy, placement=row.placement,
            status='ok', metrics_json=json.dumps(asdict(row)),
        ))
        position += 1
    for failure in outcome.failures:
        run.records.append(ReportRecord(
            position=position, strategy=failure.strategy, policy=failure.policy,
            placement=failure.placement, status='failed',
            error=f'{failure.stage}: {failure.error}', metrics_json='{}',
        ))
        position += 1

    db.session.commit()
    logger.info('Stored sweep run %d (%d rows, %d failures)', run.id, run.row_count, run.failure_count)
    return run.id


def _ok_rows(run):
    return [r.row for r in run.records if r.status == 'ok']


@results_bp.route('/runs')
def list_runs():
    runs = SweepRun.query.order_by(SweepRun.created_at.desc(), SweepRun.id.desc()).all()
    return jsonify([run.summary() for run in runs])


@results_bp.route('/runs/<int:run_id>')
def get_run(run_id):
    run = db.get_or_404(SweepRun, run_id)
    data = run.summary()
    data['plan'] = json.loads(run.plan_json) if run.plan_json else None
    data['failures'] = [
        {'strategy': r.strategy, 'policy': r.policy, 'placement': r.placement, 'error': r.error}
        for r in run.records if r.status == 'failed'
    ]
    return jsonify(data)


@results_bp.route('/runs/<int:run_id>/rows')
def get_rows(run_id):
    run = db.get_or_404(SweepRun, run_id)
    fmt = request.args.get('format', 'json')
    rows = _ok_rows(run)

    if fmt == 'json':
        return jsonify(rows)
    if fmt == 'csv':
        if not rows:
            return jsonify({'error': 'Run has no successful rows'}), 404
        return Response(rows_to_csv_text(rows), mimetype='text/csv')
    return jsonify({'error': f'Unknown format {fmt}'}), 400


@results_bp.route('/runs/<int:run_id>/report.pdf')
def get_pdf(run_id):
    run = db.get_or_404(SweepRun, run_id)
    rows = _ok_rows(run)
    pdf = render_sweep_pdf(rows, meta={'Run': run.id, 'Label': run.label or '', 'Seed': run.seed,
                                       'Failed cells': run.failure_count})
    return send_file(
        io.BytesIO(pdf),
        as_attachment=True,
        download_name=f'sweep_run_{run.id}.pdf',
        mimetype='application/pdf'
    )
