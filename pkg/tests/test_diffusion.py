import numpy as np
import pytest

from latentalign.autodiff import ops
from latentalign.autodiff.tensor import Tensor
from latentalign.config import TrainConfig
from latentalign.diffusion.sampling import denoise_step, sample_vanilla, step_pairs
from latentalign.diffusion.schedule import NoiseSchedule, inference_timesteps, make_linear_schedule, predict_z0, q_sample
from latentalign.errors import EmptyDatasetError, ScheduleError, ShapeMismatchError, TimestepError, WidthMismatchError
from latentalign.models.autoencoder import Autoencoder, autoencode, fit_autoencoder, reconstruction_rms
from latentalign.models.denoiser import DenoiserModel, noise_prediction_loss, time_features, train_denoiser

from conftest import gradient


@pytest.fixture
def schedule():
    return make_linear_schedule(1000, 1e-4, 0.02)


def test_linear_schedule_examples(schedule):
    assert schedule.alpha_bar(1) == pytest.approx(0.9999, abs=1e-15)
    assert schedule.alpha_bar(1000) < schedule.alpha_bar(1)
    assert schedule.betas[0] == 1e-4 and schedule.betas[-1] == pytest.approx(0.02)
    two = NoiseSchedule.from_betas([0.1, 0.2])
    assert two.alpha_bar(2) == pytest.approx(0.72, abs=1e-12)


def test_schedule_identities(schedule):
    assert np.all(np.diff(schedule.alpha_bars) < 0)
    assert np.all((schedule.alpha_bars > 0) & (schedule.alpha_bars < 1))
    np.testing.assert_allclose(schedule.alpha_bars, np.cumprod(schedule.alphas), rtol=0, atol=1e-12)
    ratios = schedule.alpha_bars[1:] / schedule.alpha_bars[:-1]
    np.testing.assert_allclose(ratios, schedule.alphas[1:], rtol=0, atol=1e-12)
    assert schedule.alpha_bar(0) == 1.0


@pytest.mark.parametrize("T, start, end", [(1, 1e-4, 0.02), (10, 0.0, 0.02), (10, 0.03, 0.02), (10, 1e-4, 1.0)])
def test_schedule_range_errors(T, start, end):
    with pytest.raises(ScheduleError):
        make_linear_schedule(T, start, end)


def test_q_sample_examples():
    two = NoiseSchedule.from_betas([0.36, 0.5])
    np.testing.assert_allclose(q_sample([1.0, 0.0], 1, [0.0, 1.0], two).data, [0.8, 0.6])
    z0 = np.array([0.5, -1.0])
    np.testing.assert_allclose(q_sample(z0, 1, np.zeros(2), two).data, 0.8 * z0)
    with pytest.raises(TimestepError):
        q_sample(z0, 3, np.zeros(2), two)
    with pytest.raises(ShapeMismatchError):
        q_sample(z0, 1, np.zeros(3), two)


def test_predict_z0_examples():
    two = NoiseSchedule.from_betas([0.36, 0.5])
    np.testing.assert_allclose(predict_z0([0.8, 0.6], [0.0, 1.0], 1, two).data, [1.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(predict_z0([0.8, 0.6], [0.0, 0.0], 1, two).data, np.array([0.8, 0.6]) / 0.8)


def test_q_sample_predict_z0_round_trip(schedule):
    rng = np.random.default_rng(33)
    for _ in range(100):
        z0, eps = rng.normal(size=6), rng.normal(size=6)
        t = int(rng.integers(1, schedule.T + 1))
        recovered = predict_z0(q_sample(z0, t, eps, schedule), eps, t, schedule).data
        np.testing.assert_allclose(recovered, z0, rtol=0, atol=1e-9)


def test_predict_z0_rejects_vanishing_alpha_bar():
    long = NoiseSchedule.from_betas(np.full(400, 0.5))
    with pytest.raises(ScheduleError):
        predict_z0(np.ones(2), np.ones(2), 400, long)


def test_predict_z0_gradient_in_latent(schedule):
    t = 500
    a = schedule.alpha_bar(t)
    grad = gradient(lambda z: ops.sum(predict_z0(z, np.zeros((1, 3)), t, schedule)), np.ones((1, 3)))
    np.testing.assert_allclose(grad, np.full((1, 3), 1.0 / np.sqrt(a)))


def test_inference_timesteps(schedule):
    steps = inference_timesteps(schedule, 30)
    assert steps[0] == 1000 and steps[-1] == 1
    assert len(set(steps.tolist())) == 30 and np.all(np.diff(steps) < 0)
    assert step_pairs(schedule, 30)[-1] == (1, 0)
    with pytest.raises(ScheduleError):
        inference_timesteps(schedule, 1001)


def test_time_features_shape_and_range():
    feats = time_features([1, 500, 1000], 16)
    assert feats.shape == (3, 16)
    assert np.all(np.abs(feats) <= 1.0)


@pytest.fixture
def denoiser(schedule):
    return DenoiserModel.create(4, 3, schedule, seed=1, hidden_width=16, time_dim=8, prompt_dim=4)


def test_denoiser_forward_shape_and_determinism(denoiser):
    rng = np.random.default_rng(0)
    z = rng.normal(size=(5, 4))
    y = np.repeat(denoiser.prompt_embedding(1), 5, axis=0)
    first = denoiser.forward(z, 300, y).data
    assert first.shape == z.shape
    assert np.array_equal(first, denoiser.forward(z, 300, y).data)


def test_denoiser_width_checks(denoiser):
    with pytest.raises(WidthMismatchError):
        denoiser.forward(np.zeros((1, 5)), 10, denoiser.prompt_embedding(0))
    with pytest.raises(WidthMismatchError):
        denoiser.forward(np.zeros((1, 4)), 10, np.zeros((1, 3)))


def test_null_prompt_is_last_row(denoiser):
    np.testing.assert_array_equal(denoiser.prompt_embedding(None), denoiser.params["prompt.table"][3:4])


def test_untrained_loss_is_latent_width(denoiser):
    rng = np.random.default_rng(5)
    z0 = rng.normal(size=(4000, 4))
    loss = noise_prediction_loss(denoiser, z0, [0] * 4000, rng).item()
    assert loss == pytest.approx(4.0, rel=0.1)


def test_train_denoiser_reduces_loss_and_is_deterministic(schedule):
    rng = np.random.default_rng(9)
    classes = np.repeat(np.arange(2), 64)
    x = rng.normal(size=(128, 4)) + 2.0 * classes[:, None]
    ae = Autoencoder.identity(4)
    cfg = TrainConfig(epochs=30, batch_size=32, learning_rate=1e-2, seed=2)

    first, report = train_denoiser(DenoiserModel.create(4, 2, schedule, seed=3, hidden_width=32), x, classes, ae, cfg)
    second, _ = train_denoiser(DenoiserModel.create(4, 2, schedule, seed=3, hidden_width=32), x, classes, ae, cfg)
    assert report.final_loss < report.first_loss
    for name in first.params:
        assert np.array_equal(first.params[name], second.params[name])

    with pytest.raises(EmptyDatasetError):
        train_denoiser(first, np.zeros((0, 4)), classes[:0], ae, cfg)


def test_sampling_trajectory_and_determinism(denoiser, schedule):
    y = denoiser.prompt_embedding(2)
    one = sample_vanilla(denoiser, y, schedule, 30, "ddim", seed=4)
    two = sample_vanilla(denoiser, y, schedule, 30, "ddim", seed=4)
    assert len(one) == 31
    assert one.timesteps[0] == 1000 and one.timesteps[-1] == 0
    for a, b in zip(one.latents, two.latents):
        assert np.array_equal(a, b)
    other = sample_vanilla(denoiser, y, schedule, 30, "ddpm", seed=4)
    assert np.array_equal(other.latents[0], one.latents[0])
    assert not np.array_equal(other.final, one.final)
    with pytest.raises(ScheduleError):
        sample_vanilla(denoiser, y, schedule, 1001)


def test_ddim_step_with_exact_noise_recovers_clean_latent(schedule):
    class Oracle:
        latent_dim, prompt_dim = 2, 1

        def __init__(self, eps):
            self.eps = eps

        def forward(self, z_t, t, y):
            return Tensor(self.eps)

    z0, eps = np.array([[0.3, -0.7]]), np.array([[1.0, 0.5]])
    z_t = q_sample(z0, 700, eps, schedule).data
    rng = np.random.default_rng(0)
    for kind in ("ddim", "ddpm"):
        out = denoise_step(kind, Oracle(eps), z_t, 700, 0, np.zeros((1, 1)), schedule, rng)
        np.testing.assert_allclose(out, z0, atol=1e-9)


@pytest.fixture(scope="module")
def point_mass_model():
    # alpha_bar_T ~ 0.13 keeps the first z0 estimate well conditioned
    schedule = make_linear_schedule(100, 1e-4, 0.04)
    point = np.array([[1.0, -0.5]])
    x = np.repeat(point, 256, axis=0)
    model = DenoiserModel.create(2, 1, schedule, seed=0, hidden_width=32, time_dim=8, prompt_dim=2)
    cfg = TrainConfig(epochs=400, batch_size=64, learning_rate=3e-3, seed=1)
    model, _ = train_denoiser(model, x, np.zeros(256, dtype=int), Autoencoder.identity(2), cfg, cond_drop=0.0)
    return model, point


@pytest.mark.parametrize("seed", [3, 4, 5])
def test_point_mass_converges_to_data_point(point_mass_model, seed):
    model, point = point_mass_model
    final = sample_vanilla(model, model.prompt_embedding(0), model.schedule, 20, "ddim", seed=seed).final
    assert np.linalg.norm(final - point) < 0.1


def test_autoencoders():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(50, 6))
    ident = Autoencoder.identity(6)
    assert autoencode(ident, x, "encode").data is not None
    np.testing.assert_array_equal(ident.decode(ident.encode(x)).data, x)

    basis = rng.normal(size=(3, 6))
    low_rank = rng.normal(size=(400, 3)) @ basis + 0.5
    ae = fit_autoencoder(low_rank[:300], "affine", 3)
    assert reconstruction_rms(ae, low_rank[300:]) < 1e-8
    latents = ae.encode(low_rank[:300]).data
    np.testing.assert_allclose(latents.std(axis=0, ddof=1), 1.0, rtol=1e-6)

    zero_bias = Autoencoder("affine", 6, 3, {"enc.w": np.ones((6, 3)), "enc.b": np.zeros((1, 3)), "dec.w": np.ones((3, 6)), "dec.b": np.zeros((1, 6))})
    np.testing.assert_array_equal(zero_bias.decode(np.zeros((1, 3))).data, np.zeros((1, 6)))

    with pytest.raises(WidthMismatchError):
        ae.encode(np.zeros((1, 5)))
    with pytest.raises(ValueError):
        autoencode(ae, x, "sideways")
