from app import db
from datetime import datetime
from sqlalchemy import Text
import json


class SweepRun(db.Model):
    id = db.Column(db.Integer, primary_key=True)
    label = db.Column(db.String(200))
    seed = db.Column(db.Integer, nullable=False, default=0)
    plan_json = db.Column(Text)
    row_count = db.Column(db.Integer, default=0)
    failure_count = db.Column(db.Integer, default=0)
    created_at = db.Column(db.DateTime, default=datetime.utcnow)

    # Relationships
    records = db.relationship('ReportRecord', backref='run', lazy=True, cascade='all, delete-orphan',
                              order_by='ReportRecord.position')

    def __repr__(self):
        return f'<SweepRun {self.id} {self.label}>'

    def summary(self):
        return {
            'id': self.id,
            'label': self.label,
            'seed': self.seed,
            'rows': self.row_count,
            'failures': self.failure_count,
            'created_at': self.created_at.isoformat() if self.created_at else None,
        }


class ReportRecord(db.Model):
    id = db.Column(db.Integer, primary_key=True)
    position = db.Column(db.Integer, nullable=False)
    strategy = db.Column(db.String(50), nullable=False)
    policy = db.Column(db.String(50), nullable=False)
    placement = db.Column(db.String(50), nullable=False)
    status = db.Column(db.String(20), default='ok')  # ok, failed
    error = db.Column(Text)
    metrics_json = db.Column(Text, nullable=False)

    # Foreign keys
    run_id = db.Column(db.Integer, db.ForeignKey('sweep_run.id'), nullable=False)

    def __repr__(self):
        return f'<ReportRecord {self.strategy}/{self.policy}/{self.placement}>'

    @property
    def row(self):
        return json.loads(self.metrics_json)
