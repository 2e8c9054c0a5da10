import logging

from latentalign.artifacts import dataset_paths
from latentalign.config import ResolvedConfig
from latentalign.seeding import derive_seed
from latentalign.world import WorldSpec, generate_dataset, make_world, save_dataset

logger = logging.getLogger(__name__)


def run(resolved: ResolvedConfig) -> int:
    cfg = resolved.config
    spec = WorldSpec.from_config(cfg)
    world = make_world(spec, derive_seed(cfg.seed, "world"))
    logger.info("World: k=%d, C=%d, d_v=%d, d_a=%d, sigma=%g", spec.factor_dim, spec.num_classes, spec.dim_v, spec.dim_a, spec.noise_sigma)

    train_path, heldout_path = dataset_paths(cfg)
    train = generate_dataset(world, cfg.train_per_class, derive_seed(cfg.seed, "train"))
    heldout = generate_dataset(world, cfg.heldout_per_class, derive_seed(cfg.seed, "heldout"))
    save_dataset(train, train_path)
    print(f"✓ Wrote {len(train)} training pairs to {train_path}")
    save_dataset(heldout, heldout_path)
    print(f"✓ Wrote {len(heldout)} held-out pairs to {heldout_path}")

    print("\n" + "=" * 80)
    print("DATASET SUMMARY")
    print("=" * 80)
    print(f"Classes: {spec.num_classes}   per class: {cfg.train_per_class} train / {cfg.heldout_per_class} held-out")
    print(f"Widths: v={spec.dim_v}  a={spec.dim_a}  factors={spec.factor_dim}")
    print("=" * 80)
    return 0
