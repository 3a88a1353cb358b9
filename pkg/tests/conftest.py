"""
Fixtures compartilhadas: grade pequena, rede mínima e stacks sintéticos
"""

import numpy as np
import pytest

from pabcnn.config import RunConfig
from pabcnn.losses import LossKind
from pabcnn.nn.training import TrainConfig
from pabcnn.nn.unet import NetConfig
from pabcnn.simulation.acoustics import ArrayGeometry
from pabcnn.simulation.phantom import GridSpec, SimulationConfig
from pabcnn.uncertainty import PredictConfig, SampleStack


def pytest_addoption(parser):
    parser.addoption('--runslow', action='store_true', default=False,
                     help='Executa os testes marcados como slow')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'):
        return
    skip_slow = pytest.mark.skip(reason='use --runslow para executar')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def small_grid():
    """16 x 16 pixels de 0.4 mm"""
    return GridSpec(nz=16, nx=16, dz=0.4, dx=0.4)


@pytest.fixture
def small_geometry():
    """4 elementos, janela de 256 amostras"""
    return ArrayGeometry(n_elem=4, pitch=0.4, n_samples=256)


@pytest.fixture
def tiny_net():
    return NetConfig(depth=1, base_channels=2)


@pytest.fixture
def tiny_config(small_grid, small_geometry, tiny_net, tmp_path):
    """Configuração completa em escala de teste"""
    return RunConfig(
        grid=small_grid,
        geometry=small_geometry,
        simulation=SimulationConfig(n_images=10, seed=3),
        net=tiny_net,
        train=TrainConfig(max_epochs=2, patience=1, batch_size=4),
        predict=PredictConfig(passes=4, seed=1),
        paths={'dataset': str(tmp_path / 'dataset'), 'checkpoints': str(tmp_path / 'ckpt'),
               'posteriors': str(tmp_path / 'post'), 'reports': str(tmp_path / 'reports')},
    )


def make_stack(mu2, sigma, mu1=None, passes=None, loss_kind=None):
    """Stack com os mesmos mapas repetidos em todos os passes (ou já empilhados)"""
    mu2 = np.asarray(mu2, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    if passes is not None:
        mu2 = np.repeat(mu2[None], passes, axis=0)
        sigma = np.repeat(sigma[None], passes, axis=0)
        if mu1 is not None:
            mu1 = np.repeat(np.asarray(mu1, dtype=np.float64)[None], passes, axis=0)
    return SampleStack(mu1=mu1, mu2=mu2, sigma=sigma, seeds=tuple(range(mu2.shape[0])),
                       loss_kind=loss_kind)


@pytest.fixture
def laplace_world():
    """
    Pixels com média e escala conhecidas e verdade sorteada da própria
    Laplace preditiva: um posterior calibrado por construção
    """
    rng = np.random.default_rng(42)
    shape = (400, 400)
    mu = rng.uniform(0.2, 3.0, shape)
    scale = np.full(shape, 0.3)
    truth = mu + rng.laplace(0.0, scale)
    stack = make_stack(mu, scale, mu1=np.full(shape, 0.9), passes=3, loss_kind=LossKind.HYBRID_LAPLACE)
    return stack, truth
