import logging

from latentalign.artifacts import autoencoder_path, binder_path, denoiser_path, load_splits
from latentalign.checkpoint import save_checkpoint
from latentalign.config import ResolvedConfig
from latentalign.diffusion.schedule import make_linear_schedule
from latentalign.models.autoencoder import fit_autoencoder, reconstruction_rms
from latentalign.models.binder import BinderModel, train_binder
from latentalign.models.denoiser import DenoiserModel, train_denoiser
from latentalign.seeding import derive_seed

logger = logging.getLogger(__name__)


def run(resolved: ResolvedConfig) -> int:
    cfg = resolved.config
    echo = resolved.echo()
    train, heldout = load_splits(cfg)
    schedule = make_linear_schedule(cfg.diffusion_steps, cfg.beta_start, cfg.beta_end)
    summary = []

    for modality in ("v", "a"):
        x = train.modality(modality)
        autoencoder = fit_autoencoder(x, cfg.autoencoder_kind, cfg.latent_dim if cfg.autoencoder_kind == "affine" else None)
        rms = reconstruction_rms(autoencoder, heldout.modality(modality))
        logger.info("Autoencoder %s: %s, latent width %d, held-out RMS %.4f", modality, autoencoder.mode, autoencoder.latent_dim, rms)

        denoiser = DenoiserModel.create(
            autoencoder.latent_dim,
            cfg.num_classes,
            schedule,
            seed=derive_seed(cfg.seed, "denoiser", modality),
            hidden_width=cfg.hidden_width,
            time_dim=cfg.time_dim,
            prompt_dim=cfg.prompt_dim,
        )
        train_cfg = cfg.denoiser_train_config().model_copy(update={"seed": derive_seed(cfg.seed, "denoiser-train", modality)})
        denoiser, report = train_denoiser(denoiser, x, train.classes, autoencoder, train_cfg, cond_drop=cfg.cond_drop)

        save_checkpoint(autoencoder, autoencoder_path(cfg, modality), echo)
        print(f"✓ Saved autoencoder_{modality} to {autoencoder_path(cfg, modality)}")
        save_checkpoint(denoiser, denoiser_path(cfg, modality), echo)
        print(f"✓ Saved denoiser_{modality} to {denoiser_path(cfg, modality)}")
        summary.append(f"denoiser {modality}: loss {report.first_loss:.4f} -> {report.final_loss:.4f}   autoencoder RMS {rms:.4f}")

    binder = BinderModel.create(
        cfg.dim_v,
        cfg.dim_a,
        cfg.num_classes,
        seed=derive_seed(cfg.seed, "binder"),
        embed_dim=cfg.embed_dim,
        hidden_width=cfg.hidden_width,
        tau=cfg.tau,
        n_frames=cfg.n_frames,
    )
    binder_cfg = cfg.binder_train_config().model_copy(update={"seed": derive_seed(cfg.seed, "binder-train")})
    binder, binder_report = train_binder(
        binder, train.v, train.a, train.classes, binder_cfg, heldout=(heldout.v, heldout.a, heldout.classes)
    )
    save_checkpoint(binder, binder_path(cfg), echo)
    print(f"✓ Saved binder to {binder_path(cfg)}")
    retrieval = binder_report.retrieval or {}
    summary.append(
        f"binder: loss {binder_report.initial_loss:.4f} -> {binder_report.final_loss:.4f}   "
        f"retrieval {retrieval.get('class_top1', float('nan')):.3f}   cosine gap {retrieval.get('cosine_gap', float('nan')):.3f}"
    )

    print("\n" + "=" * 80)
    print("TRAINING SUMMARY")
    print("=" * 80)
    for line in summary:
        print(line)
    print("=" * 80)
    return 0
