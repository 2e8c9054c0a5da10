import numpy as np
import pytest

from latentalign.autodiff import ops
from latentalign.autodiff.gradcheck import check_gradient
from latentalign.autodiff.tensor import Tensor
from latentalign.config import TrainConfig
from latentalign.errors import EmptyDatasetError, EmptySetError, NonUnitEmbeddingError, WidthMismatchError
from latentalign.models.binder import BinderModel, contrastive_loss, embed, embedding_distance, retrieval_accuracy, train_binder

from conftest import gradient


@pytest.fixture
def binder():
    return BinderModel.create(dim_v=6, dim_a=5, num_classes=3, seed=2, embed_dim=8, hidden_width=16)


def test_embeddings_are_unit_norm(binder):
    rng = np.random.default_rng(0)
    for modality, x in (("v", rng.normal(size=(10, 6))), ("a", rng.normal(size=(10, 5))), ("p", binder.prompt_onehot([0, 1, 2]))):
        e = embed(binder, modality, x).data
        assert e.shape[1] == 8
        np.testing.assert_allclose(np.linalg.norm(e, axis=1), 1.0, atol=1e-9)
    x = rng.normal(size=6)
    assert np.array_equal(binder.embed_numpy("v", x), binder.embed_numpy("v", x))


def test_embed_rejects_bad_inputs(binder):
    with pytest.raises(WidthMismatchError):
        binder.embed("a", np.zeros((2, 6)))
    with pytest.raises(ValueError):
        binder.embed("t", np.zeros((2, 6)))


def test_embedding_distance_examples():
    e1 = np.array([1.0, 0.0])
    assert embedding_distance(e1, e1).item() == pytest.approx(0.0, abs=1e-15)
    assert embedding_distance(e1, [0.0, 1.0]).item() == pytest.approx(1.0)
    assert embedding_distance(e1, -e1).item() == pytest.approx(2.0)
    with pytest.raises(NonUnitEmbeddingError):
        embedding_distance(e1, [0.0, 2.0])


def test_embedding_distance_is_symmetric_and_bounded():
    rng = np.random.default_rng(4)
    a = rng.normal(size=(50, 8))
    b = rng.normal(size=(50, 8))
    a /= np.linalg.norm(a, axis=1, keepdims=True)
    b /= np.linalg.norm(b, axis=1, keepdims=True)
    d = embedding_distance(a, b).data
    np.testing.assert_allclose(d, embedding_distance(b, a).data)
    assert np.all(d >= 0) and np.all(d <= 2)


def test_contrastive_loss_examples():
    q = np.eye(2)
    expected = -np.log(np.e / (np.e + 1.0))
    assert contrastive_loss(q, q, 1.0).item() == pytest.approx(expected)
    assert expected == pytest.approx(0.3133, abs=1e-4)

    same = np.tile([[0.6, 0.8]], (5, 1))
    assert contrastive_loss(same, same, 0.5).item() == pytest.approx(np.log(5))

    assert contrastive_loss(np.eye(3), np.eye(3), 0.01).item() < 1e-20

    with pytest.raises(EmptySetError):
        contrastive_loss(np.eye(2)[:1], np.eye(2)[:1], 1.0)


def test_contrastive_loss_gradient():
    rng = np.random.default_rng(8)
    q0 = rng.normal(size=(4, 3))
    k = rng.normal(size=(4, 3))
    k /= np.linalg.norm(k, axis=1, keepdims=True)

    def loss(q):
        return contrastive_loss(ops.l2_normalize(q), k, 0.5)

    grad = gradient(loss, q0)
    assert check_gradient(lambda q: loss(Tensor(q)).item(), q0, grad) <= 1e-5


def test_train_binder_descends_and_is_deterministic(small_data):
    train, heldout = small_data
    cfg = TrainConfig(epochs=8, batch_size=24, learning_rate=3e-3, seed=6)

    def fit():
        model = BinderModel.create(8, 6, 3, seed=1, embed_dim=8, hidden_width=16)
        return train_binder(model, train.v, train.a, train.classes, cfg, heldout=(heldout.v, heldout.a, heldout.classes))

    first, report = fit()
    second, _ = fit()
    assert report.final_loss < report.epoch_losses[0]
    assert set(report.retrieval) == {"class_top1", "pair_top1", "matched_cosine", "mismatched_cosine", "cosine_gap"}
    for name in first.params:
        assert np.array_equal(first.params[name], second.params[name])


def test_train_binder_errors():
    model = BinderModel.create(2, 2, 2, seed=0)
    with pytest.raises(EmptyDatasetError):
        train_binder(model, np.zeros((0, 2)), np.zeros((0, 2)), np.zeros(0, dtype=int), TrainConfig())
    with pytest.raises(EmptySetError):
        train_binder(model, np.ones((4, 2)), np.ones((4, 2)), np.array([0, 1, 0, 1]), TrainConfig(batch_size=1))


def test_retrieval_accuracy_ranges(small_models, small_data):
    _, binder = small_models
    _, heldout = small_data
    scores = retrieval_accuracy(binder, heldout.v, heldout.a, heldout.classes)
    for key in ("class_top1", "pair_top1"):
        assert 0.0 <= scores[key] <= 1.0
    assert scores["cosine_gap"] == pytest.approx(scores["matched_cosine"] - scores["mismatched_cosine"])
