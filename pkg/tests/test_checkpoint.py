import numpy as np
import pytest

from latentalign.checkpoint import checkpoint_echo, load_checkpoint, save_checkpoint
from latentalign.errors import ChecksumError, FormatError, KindMismatchError, MissingArtifactError, TruncatedFileError


@pytest.fixture
def trained(small_models):
    models, binder = small_models
    return {"denoiser": models.v.denoiser, "autoencoder": models.a.autoencoder, "binder": binder}


@pytest.mark.parametrize("kind", ["denoiser", "autoencoder", "binder"])
def test_round_trip_is_bit_exact(trained, kind, tmp_path):
    model = trained[kind]
    path = save_checkpoint(model, tmp_path / f"{kind}.shla", echo={"seed": 33})
    loaded = load_checkpoint(path, expected_kind=kind)
    assert type(loaded) is type(model)
    assert loaded.attributes() == model.attributes()
    assert sorted(loaded.params) == sorted(model.params)
    for name, value in model.tensors().items():
        assert np.array_equal(loaded.tensors()[name], value)
    assert checkpoint_echo(path) == {"seed": 33}


def test_loaded_denoiser_predicts_identically(trained, tmp_path):
    model = trained["denoiser"]
    loaded = load_checkpoint(save_checkpoint(model, tmp_path / "d.shla"))
    z = np.random.default_rng(0).normal(size=(3, model.latent_dim))
    y = np.repeat(model.prompt_embedding(1), 3, axis=0)
    assert np.array_equal(loaded.predict_eps(z, 17, y), model.predict_eps(z, 17, y))
    assert loaded.schedule.same_grid(model.schedule)


def test_flipped_payload_byte_fails_the_checksum(trained, tmp_path):
    path = save_checkpoint(trained["binder"], tmp_path / "b.shla")
    raw = bytearray(path.read_bytes())
    raw[-20] ^= 0x01
    path.write_bytes(bytes(raw))
    with pytest.raises(ChecksumError):
        load_checkpoint(path)


def test_kind_mismatch(trained, tmp_path):
    path = save_checkpoint(trained["binder"], tmp_path / "b.shla")
    with pytest.raises(KindMismatchError):
        load_checkpoint(path, expected_kind="denoiser")


def test_truncated_and_foreign_files(trained, tmp_path):
    raw = save_checkpoint(trained["autoencoder"], tmp_path / "ae.shla").read_bytes()

    (tmp_path / "short.shla").write_bytes(raw[:-4])
    with pytest.raises(TruncatedFileError):
        load_checkpoint(tmp_path / "short.shla")

    (tmp_path / "foreign.shla").write_bytes(b"SHDS" + raw[4:])
    with pytest.raises(FormatError):
        load_checkpoint(tmp_path / "foreign.shla")

    (tmp_path / "padded.shla").write_bytes(raw + b"\0")
    with pytest.raises(FormatError):
        load_checkpoint(tmp_path / "padded.shla")

    with pytest.raises(MissingArtifactError):
        load_checkpoint(tmp_path / "absent.shla")
