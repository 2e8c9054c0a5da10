"""Binder-space alignment, kernel two-sample discrepancy and guided-vs-vanilla comparison."""
from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, List, Literal, Mapping, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel
from scipy.spatial.distance import cdist
from scipy.stats import binomtest

from latentalign.aligner.pipeline import GenerationResult
from latentalign.config import GENERATED_MODALITY
from latentalign.errors import EmptySetError, UnpairedRunsError, WidthMismatchError
from latentalign.fileio import write_text_atomic
from latentalign.models.binder import BinderModel

logger = logging.getLogger(__name__)

CSV_COLUMNS = (
    "task",
    "seed",
    "lambda1",
    "lambda2",
    "inf_steps",
    "optim_start",
    "align_vanilla",
    "align_guided",
    "mmd_vanilla",
    "mmd_guided",
    "triangle_final_vanilla",
    "triangle_final_guided",
    "runtime_ms",
)
METRIC_KINDS = ("alignment", "mmd", "final_loss")
# Direction in which a metric improves under guidance.
IMPROVES: Dict[str, Literal["greater", "less"]] = {"alignment": "greater", "mmd": "less", "final_loss": "less"}


@dataclass
class AlignmentScore:
    mean: float
    std: float
    values: np.ndarray


def alignment_score(binder: BinderModel, gen_modality: str, generated: Any, ref_modality: str, references: Any) -> AlignmentScore:
    """Mean binder-space cosine between each generated row and its paired reference.

    ``ref_modality`` "p" takes class ids as references.
    """
    generated = np.atleast_2d(np.asarray(generated, dtype=np.float64))
    if generated.shape[0] == 0 or generated.size == 0:
        raise EmptySetError("alignment_score needs at least one generated sample")
    if ref_modality == "p":
        refs = binder.embed_classes(np.asarray(references).reshape(-1))
    else:
        refs = binder.embed_numpy(ref_modality, np.atleast_2d(np.asarray(references, dtype=np.float64)))
    if refs.shape[0] != generated.shape[0]:
        raise WidthMismatchError(f"{generated.shape[0]} generated samples paired with {refs.shape[0]} references")
    values = np.sum(binder.embed_numpy(gen_modality, generated) * refs, axis=1)
    return AlignmentScore(mean=float(np.mean(values)), std=float(np.std(values)), values=values)


def median_bandwidth(x: np.ndarray, y: np.ndarray) -> float:
    pooled = np.concatenate([x, y], axis=0)
    d = cdist(pooled, pooled, "euclidean")
    positive = d[np.triu_indices_from(d, k=1)]
    positive = positive[positive > 0]
    return float(np.median(positive)) if positive.size else 1.0


def mmd(set_a: Any, set_b: Any, bandwidth: Optional[float] = None) -> float:
    """Unbiased Gaussian-kernel MMD^2 (can be slightly negative); median-heuristic bandwidth by default."""
    x = np.atleast_2d(np.asarray(set_a, dtype=np.float64))
    y = np.atleast_2d(np.asarray(set_b, dtype=np.float64))
    if x.shape[1] != y.shape[1]:
        raise WidthMismatchError(f"mmd: widths {x.shape[1]} and {y.shape[1]} differ")
    m, n = len(x), len(y)
    if m < 2 or n < 2:
        raise EmptySetError("mmd needs at least two samples per set")
    bw = median_bandwidth(x, y) if bandwidth is None else float(bandwidth)
    if not np.isfinite(bw):
        return 0.0

    def kernel(p: np.ndarray, q: np.ndarray) -> np.ndarray:
        return np.exp(-0.5 * cdist(p, q, "sqeuclidean") / bw**2)

    kxx, kyy, kxy = kernel(x, x), kernel(y, y), kernel(x, y)
    a = (np.sum(kxx) - np.trace(kxx)) / (m * (m - 1))
    b = (np.sum(kyy) - np.trace(kyy)) / (n * (n - 1))
    return float(a + b - 2.0 * np.mean(kxy))


def sign_test(differences: Iterable[float], alternative: Literal["greater", "less", "two-sided"] = "greater") -> float:
    """Binomial sign test on non-zero differences; p = 1 when every difference is zero."""
    diffs = np.asarray(list(differences), dtype=np.float64)
    nonzero = diffs[diffs != 0]
    if nonzero.size == 0:
        return 1.0
    return float(binomtest(int(np.sum(nonzero > 0)), int(nonzero.size), 0.5, alternative=alternative).pvalue)


class MetricSummary(BaseModel):
    metric: str
    mean_vanilla: float
    mean_guided: float
    mean_difference: float
    improved: int
    worsened: int
    p_value: float

    @property
    def relative_improvement(self) -> float:
        if self.mean_vanilla == 0:
            return float("nan")
        return self.mean_difference / abs(self.mean_vanilla)


class EvalReport(BaseModel):
    task: str
    pairs: int
    rows: List[Dict[str, Any]]
    metric_rows: List[Dict[str, Any]]
    summaries: Dict[str, MetricSummary]
    mmd_raw: Dict[str, float]
    echo: Optional[Dict[str, Any]] = None

    def csv_text(self) -> str:
        buffer = io.StringIO()
        if self.echo is not None:
            buffer.write(f"# {json.dumps(self.echo, sort_keys=True)}\n")
        writer = csv.DictWriter(buffer, fieldnames=list(CSV_COLUMNS), lineterminator="\n")
        writer.writeheader()
        writer.writerows(self.rows)
        return buffer.getvalue()

    def write_csv(self, path: Path) -> Path:
        return write_text_atomic(path, self.csv_text())

    def summary_text(self) -> str:
        lines = ["=" * 80, f"GUIDED vs VANILLA ({self.task}, {self.pairs} paired runs)", "=" * 80]
        for name, s in self.summaries.items():
            lines.append(
                f"{name:<12} vanilla {s.mean_vanilla:+.4f}  guided {s.mean_guided:+.4f}  "
                f"diff {s.mean_difference:+.4f}  better/worse {s.improved}/{s.worsened}  p={s.p_value:.3g}"
            )
        lines.append(f"mmd (raw)    vanilla {self.mmd_raw.get('vanilla', float('nan')):+.5f}  guided {self.mmd_raw.get('guided', float('nan')):+.5f}")
        lines.append("=" * 80)
        return "\n".join(lines)


def pair_key(result: GenerationResult) -> Tuple[Any, ...]:
    return (result.task, result.seed, result.condition_index, result.class_id)


def pair_runs(vanilla: Sequence[GenerationResult], guided: Sequence[GenerationResult]) -> List[Tuple[GenerationResult, GenerationResult]]:
    """Match runs on (task, seed, condition, class); anything unmatched is an error."""
    if any(r.variant != "vanilla" for r in vanilla) or any(r.variant != "guided" for r in guided):
        raise UnpairedRunsError("compare_runs expects vanilla runs first and guided runs second")
    by_key = {}
    for r in vanilla:
        if pair_key(r) in by_key:
            raise UnpairedRunsError(f"duplicate vanilla run for {pair_key(r)}")
        by_key[pair_key(r)] = r
    pairs = []
    seen = set()
    for g in guided:
        key = pair_key(g)
        if key not in by_key or key in seen:
            raise UnpairedRunsError(f"guided run {key} has no unique vanilla partner")
        seen.add(key)
        pairs.append((by_key[key], g))
    if len(seen) != len(by_key):
        missing = sorted(set(by_key) - seen, key=str)
        raise UnpairedRunsError(f"{len(missing)} vanilla runs have no guided partner, e.g. {missing[0]}")
    return pairs


def set_mmd(results: Sequence[GenerationResult], reference: Mapping[str, np.ndarray]) -> float:
    """MMD^2 of generated samples against real samples, averaged over generated modalities."""
    modalities = sorted(results[0].samples)
    values = [mmd(np.stack([r.sample(m) for r in results]), reference[m]) for m in modalities]
    return float(np.mean(values))


def _lambda1_label(result: GenerationResult) -> str:
    if result.task == "joint":
        return f"{result.lambda1_v:g}&{result.lambda1_a:g}"
    return f"{result.lambda1_v if GENERATED_MODALITY[result.task] == 'v' else result.lambda1_a:g}"


def compare_runs(
    vanilla: Sequence[GenerationResult],
    guided: Sequence[GenerationResult],
    reference: Optional[Mapping[str, np.ndarray]] = None,
    echo: Optional[Dict[str, Any]] = None,
) -> EvalReport:
    pairs = pair_runs(vanilla, guided)
    if not pairs:
        raise EmptySetError("Nothing to compare")
    tasks = {g.task for _, g in pairs}
    if len(tasks) != 1:
        raise UnpairedRunsError(f"Runs from several tasks cannot be compared together: {sorted(tasks)}")

    if reference is not None and len(pairs) >= 2:
        mmd_raw = {"vanilla": set_mmd([v for v, _ in pairs], reference), "guided": set_mmd([g for _, g in pairs], reference)}
    else:
        mmd_raw = {"vanilla": float("nan"), "guided": float("nan")}
    mmd_report = {k: max(0.0, v) if np.isfinite(v) else v for k, v in mmd_raw.items()}

    rows: List[Dict[str, Any]] = []
    metric_rows: List[Dict[str, Any]] = []
    for v, g in pairs:
        rows.append(
            {
                "task": g.task,
                "seed": g.seed,
                "lambda1": _lambda1_label(g),
                "lambda2": g.lambda2,
                "inf_steps": g.inf_steps,
                "optim_start": g.optim_start,
                "align_vanilla": v.alignment,
                "align_guided": g.alignment,
                "mmd_vanilla": mmd_report["vanilla"],
                "mmd_guided": mmd_report["guided"],
                "triangle_final_vanilla": v.final_loss,
                "triangle_final_guided": g.final_loss,
                "runtime_ms": round(g.duration_ms, 3),
            }
        )
        values = {
            "alignment": (v.alignment, g.alignment),
            "mmd": (mmd_report["vanilla"], mmd_report["guided"]),
            "final_loss": (v.final_loss, g.final_loss),
        }
        for metric in METRIC_KINDS:
            a, b = values[metric]
            metric_rows.append(
                {"seed": g.seed, "condition_index": g.condition_index, "metric": metric, "vanilla": a, "guided": b, "difference": b - a}
            )

    summaries = {}
    for metric in ("alignment", "final_loss"):
        diffs = np.array([row["difference"] for row in metric_rows if row["metric"] == metric])
        signed = diffs if IMPROVES[metric] == "greater" else -diffs
        summaries[metric] = MetricSummary(
            metric=metric,
            mean_vanilla=float(np.mean([row["vanilla"] for row in metric_rows if row["metric"] == metric])),
            mean_guided=float(np.mean([row["guided"] for row in metric_rows if row["metric"] == metric])),
            mean_difference=float(np.mean(diffs)),
            improved=int(np.sum(signed > 0)),
            worsened=int(np.sum(signed < 0)),
            p_value=sign_test(diffs, IMPROVES[metric]),
        )

    report = EvalReport(
        task=tasks.pop(),
        pairs=len(pairs),
        rows=rows,
        metric_rows=metric_rows,
        summaries=summaries,
        mmd_raw=mmd_raw,
        echo=echo,
    )
    logger.info(
        "Compared %d pairs: alignment %+.4f (p=%.3g), final loss %+.4f (p=%.3g)",
        report.pairs,
        summaries["alignment"].mean_difference,
        summaries["alignment"].p_value,
        summaries["final_loss"].mean_difference,
        summaries["final_loss"].p_value,
    )
    return report
