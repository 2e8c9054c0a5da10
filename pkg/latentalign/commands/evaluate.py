import logging
from pathlib import Path

from latentalign.artifacts import REPORT_FILE, load_splits, reference_samples, store_path
from latentalign.config import ResolvedConfig
from latentalign.database import load_results
from latentalign.metrics import compare_runs

logger = logging.getLogger(__name__)


def run(resolved: ResolvedConfig) -> int:
    cfg = resolved.config
    run_echo, runs = load_results(store_path(cfg))
    _, heldout = load_splits(cfg)

    vanilla = [r for _, r in runs if r.variant == "vanilla"]
    guided = [r for _, r in runs if r.variant == "guided"]
    report = compare_runs(
        vanilla,
        guided,
        reference=reference_samples(heldout, guided[0].task if guided else cfg.task, cfg.n_frames),
        echo={"run": run_echo, "eval": resolved.echo()},
    )

    path = report.write_csv(Path(cfg.out_dir) / REPORT_FILE)
    print(f"✓ Wrote {len(report.rows)} paired rows to {path}")
    print()
    print(report.summary_text())
    return 0
