import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from hardware import HardwareSpec, NbtiParams, contiguous_placement  # noqa: E402
from workload import Network, SpikeDb, Synapse, gen_network, gen_poisson  # noqa: E402


def make_network(neuron_count, edges, weight=0.5):
    return Network(neuron_count=neuron_count,
                   synapses=[Synapse(i, pre, post, weight) for i, (pre, post) in enumerate(edges)])


def make_spec(crossbars=6, pumps=2, rows=128, cols=128, **kwargs):
    return HardwareSpec(crossbar_count=crossbars, pump_count=pumps,
                        placement=contiguous_placement(crossbars, pumps),
                        crossbar_rows=rows, crossbar_cols=cols, **kwargs)


def motivating_train(count=11, isi=5.9):
    """Evenly spaced train with the given mean ISI"""
    return tuple(round(k * isi, 9) for k in range(count))


@pytest.fixture
def spec():
    return HardwareSpec()


@pytest.fixture
def params():
    return NbtiParams()


@pytest.fixture
def chain():
    """0 -> 1 -> 2 -> 3"""
    return make_network(4, [(0, 1), (1, 2), (2, 3)])


@pytest.fixture
def chain_db():
    return SpikeDb(horizon_ms=100.0, trains=[
        (1.0, 11.0, 21.0, 31.0),
        (2.0, 12.0, 22.0),
        (3.0, 13.0),
        (4.0,),
    ])


@pytest.fixture
def single_synapse():
    """One synapse carrying the evenly spaced motivating train, with a relay post-neuron"""
    net = make_network(2, [(0, 1)])
    train = motivating_train()
    db = SpikeDb(horizon_ms=60.0, trains=[train, tuple(round(t + 0.1, 9) for t in train)])
    return net, db


@pytest.fixture
def poisson_workload():
    net = gen_network([20, 30, 20], fan_in=10, seed=7)
    db = gen_poisson(net, 20.0, 1000.0, seed=7)
    return net, db


@pytest.fixture
def app(tmp_path):
    from app import create_app
    app = create_app(f'sqlite:///{tmp_path / "results.db"}')
    app.config['TESTING'] = True
    yield app


@pytest.fixture
def client(app):
    return app.test_client()
