"""Run many independent generations, in-process or on a process pool.

Each job carries its own GuidanceConfig (and so its own seed); the frozen
models are shipped once per worker through the pool initializer. Results are
returned sorted by run index whatever order the workers finish in.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from latentalign.aligner.pipeline import AlignerModels, GenerationResult, run_generation
from latentalign.config import GuidanceConfig, settings
from latentalign.models.binder import BinderModel

logger = logging.getLogger(__name__)


@dataclass
class RunJob:
    run_index: int
    variant: str
    cfg: GuidanceConfig
    condition: Optional[np.ndarray] = None
    condition_index: Optional[int] = None
    class_id: Optional[int] = None


_worker_models: Dict[str, object] = {}


def _init_worker(models: AlignerModels, binder: BinderModel) -> None:
    _worker_models["models"] = models
    _worker_models["binder"] = binder


def _execute(job: RunJob) -> Tuple[int, GenerationResult]:
    result = run_generation(
        job.variant,
        job.condition,
        job.class_id,
        _worker_models["models"],
        _worker_models["binder"],
        job.cfg,
        job.condition_index,
    )
    return job.run_index, result


def run_jobs(
    jobs: Sequence[RunJob],
    models: AlignerModels,
    binder: BinderModel,
    workers: Optional[int] = None,
    desc: str = "Generating",
) -> List[Tuple[int, GenerationResult]]:
    workers = settings.workers if workers is None else workers
    if workers <= 1:
        _init_worker(models, binder)
        results = [_execute(job) for job in tqdm(jobs, desc=desc, unit="run", disable=not settings.progress)]
    else:
        logger.info("Running %d generations on %d worker processes", len(jobs), workers)
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=(models, binder)) as pool:
            mapped = pool.map(_execute, jobs, chunksize=max(1, len(jobs) // (4 * workers)))
            results = list(tqdm(mapped, total=len(jobs), desc=desc, unit="run", disable=not settings.progress))
    return sorted(results, key=lambda item: (item[0], item[1].variant))
