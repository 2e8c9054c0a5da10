import numpy as np
import pytest

from latentalign.aligner.pipeline import AlignerModels, ModalityModels
from latentalign.autodiff.tensor import GradGraph
from latentalign.config import TrainConfig, settings
from latentalign.diffusion.schedule import make_linear_schedule
from latentalign.models.autoencoder import fit_autoencoder
from latentalign.models.binder import BinderModel, train_binder
from latentalign.models.denoiser import DenoiserModel, train_denoiser
from latentalign.world import WorldSpec, generate_dataset, make_world

settings.progress = False


def gradient(f, x):
    """Reverse-mode gradient of the scalar ``f(watched x)`` with respect to ``x``."""
    with GradGraph() as graph:
        watched = graph.watch(np.asarray(x, dtype=np.float64))
        loss = f(watched)
        return graph.backward(loss)[watched.node_id]


@pytest.fixture(scope="session")
def small_spec():
    return WorldSpec(factor_dim=2, num_classes=3, dim_v=8, dim_a=6, hidden=8, noise_sigma=0.05, factor_jitter=0.1)


@pytest.fixture(scope="session")
def small_world(small_spec):
    return make_world(small_spec, seed=7)


@pytest.fixture(scope="session")
def small_data(small_world):
    return generate_dataset(small_world, 24, seed=11), generate_dataset(small_world, 6, seed=12)


@pytest.fixture(scope="session")
def small_models(small_spec, small_data):
    """Briefly trained models on the small world; quality is not the point, wiring is."""
    train, _ = small_data
    schedule = make_linear_schedule(50, 1e-4, 0.05)
    branches = {}
    for i, modality in enumerate(("v", "a")):
        x = train.modality(modality)
        autoencoder = fit_autoencoder(x, "affine", 4)
        denoiser = DenoiserModel.create(4, small_spec.num_classes, schedule, seed=20 + i, hidden_width=16, time_dim=8, prompt_dim=4)
        denoiser, _ = train_denoiser(denoiser, x, train.classes, autoencoder, TrainConfig(epochs=2, batch_size=32, learning_rate=1e-3, seed=3))
        branches[modality] = ModalityModels(denoiser=denoiser, autoencoder=autoencoder)
    binder = BinderModel.create(small_spec.dim_v, small_spec.dim_a, small_spec.num_classes, seed=5, embed_dim=8, hidden_width=16, n_frames=2)
    binder, _ = train_binder(binder, train.v, train.a, train.classes, TrainConfig(epochs=2, batch_size=32, learning_rate=1e-3, seed=4))
    return AlignerModels(**branches), binder
