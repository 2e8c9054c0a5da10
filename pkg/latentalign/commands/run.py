import logging
from typing import Any, Callable, List, Sequence

import numpy as np

from latentalign.artifacts import load_models, load_splits, store_path
from latentalign.config import CONDITION_MODALITY, ExperimentConfig, GuidanceConfig, ResolvedConfig
from latentalign.database import write_results
from latentalign.seeding import derive_seed
from latentalign.workers import RunJob, run_jobs
from latentalign.world import Dataset

logger = logging.getLogger(__name__)


def build_jobs(
    cfg: ExperimentConfig,
    heldout: Dataset,
    guidance_for: Callable[[int], GuidanceConfig],
    variants: Sequence[str] = ("vanilla", "guided"),
) -> List[RunJob]:
    """One job per (run index, variant); run r uses seed derive_seed(master, r)."""
    jobs = []
    for r in range(cfg.runs):
        gcfg = guidance_for(derive_seed(cfg.seed, r))
        if gcfg.task == "joint":
            fields: dict[str, Any] = {"class_id": r % cfg.num_classes}
        else:
            index = r % len(heldout)
            fields = {
                "condition": heldout.modality(CONDITION_MODALITY[gcfg.task])[index],
                "condition_index": index,
                "class_id": int(heldout.classes[index]),
            }
        jobs.extend(RunJob(run_index=r, variant=variant, cfg=gcfg, **fields) for variant in variants)
    return jobs


def run(resolved: ResolvedConfig) -> int:
    cfg = resolved.config
    _, heldout = load_splits(cfg)
    models, binder = load_models(cfg)

    base = cfg.guidance()
    logger.info(
        "Task %s: lambda1 v/a %g/%g, lambda2 %g, N=%d, %d steps from index %d, prompt tuning %s",
        base.task,
        base.lambda1_v,
        base.lambda1_a,
        base.lambda2,
        base.num_optim_steps,
        base.guided_step_count,
        base.first_guided_index,
        base.prompt_tuning,
    )
    jobs = build_jobs(cfg, heldout, lambda seed: cfg.guidance(seed=seed))
    results = run_jobs(jobs, models, binder)

    path = write_results(store_path(cfg), resolved.echo(), "run", results)
    print(f"✓ Wrote {len(results)} generation records to {path}")

    vanilla = [r.alignment for _, r in results if r.variant == "vanilla"]
    guided = [r.alignment for _, r in results if r.variant == "guided"]
    print("\n" + "=" * 80)
    print(f"RUN SUMMARY ({base.task}, {cfg.runs} runs)")
    print("=" * 80)
    print(f"Mean alignment  vanilla {np.mean(vanilla):+.4f}   guided {np.mean(guided):+.4f}")
    print("=" * 80)
    return 0
