import os
import logging
from flask import Flask, jsonify
from flask_sqlalchemy import SQLAlchemy
from sqlalchemy.orm import DeclarativeBase
from werkzeug.middleware.proxy_fix import ProxyFix

LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'


class Base(DeclarativeBase):
    pass


db = SQLAlchemy(model_class=Base)


def configure_logging(level=None):
    """Configure root logging once from PUMPWEAR_LOG_LEVEL"""
    level = level or os.environ.get('PUMPWEAR_LOG_LEVEL', 'INFO')
    logging.basicConfig(level=getattr(logging, str(level).upper(), logging.INFO), format=LOG_FORMAT)


def database_url():
    # Use PostgreSQL when DATABASE_URL is set, SQLite otherwise
    url = os.environ.get('DATABASE_URL')
    if url and url.startswith('postgres://'):
        url = url.replace('postgres://', 'postgresql://', 1)
    return url or 'sqlite:///pumpwear.db'


def default_jobs():
    try:
        return max(1, int(os.environ.get('PUMPWEAR_JOBS', '1')))
    except ValueError:
        return 1


def create_app(db_url=None):
    """Results service: stored sweep runs behind a read-only JSON API"""
    app = Flask(__name__)
    app.wsgi_app = ProxyFix(app.wsgi_app, x_proto=1, x_host=1)
    app.config['SQLALCHEMY_DATABASE_URI'] = db_url or database_url()
    app.config['SQLALCHEMY_ENGINE_OPTIONS'] = {
        'pool_recycle': 300,
        'pool_pre_ping': True,
    }
    db.init_app(app)

    from results import results_bp
    app.register_blueprint(results_bp, url_prefix='/api')

    @app.errorhandler(404)
    def not_found(error):
        return jsonify({'error': 'Not found'}), 404

    @app.errorhandler(500)
    def internal_error(error):
        return jsonify({'error': 'Internal server error'}), 500

    # Create tables
    with app.app_context():
        import models  # noqa: F401
        db.create_all()

    return app
