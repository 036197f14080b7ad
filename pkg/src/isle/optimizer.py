"""Pick the smallest decomposition that a model can consume without a
significant AUROC drop on a validation set."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from .codestream import Codestream, DecompositionPlan, decode_partial
from .image_io import LabelTable
from .scorer import ScorerSpec, score
from .stats import (
    AurocResult,
    DegenerateTestError,
    TTestResult,
    auroc,
    auroc_summary,
    paired_t_test_one_tailed,
    shapiro_wilk,
)

__all__ = [
    "DecompositionTest",
    "EvalReport",
    "OptimizerError",
    "architecture_floor",
    "score_decompositions",
    "select_from_scores",
    "select_optimal",
]

log = logging.getLogger(__name__)

NORMALITY_ALPHA = 0.05


class OptimizerError(ValueError):
    pass


@dataclass(frozen=True)
class DecompositionTest:
    d: int
    auroc: AurocResult
    ttest: Optional[TTestResult]  # None when the differences were degenerate
    p_value: float  # the t-test p, or 1.0 / 0.0 for a degenerate pass / fail
    degenerate: bool
    shapiro_w: Optional[float]
    shapiro_p: Optional[float]
    passes: bool

    @property
    def normality_ok(self) -> Optional[bool]:
        if self.shapiro_p is None:
            return None
        return self.shapiro_p > NORMALITY_ALPHA


@dataclass
class EvalReport:
    plan: DecompositionPlan
    label_names: List[str]
    dropped_labels: List[str]
    significance: float
    reference: AurocResult
    tests: Dict[int, DecompositionTest]
    chosen_d: int
    d_min_architecture: int
    n_assets: int
    prefix_bytes: Dict[int, int] = field(default_factory=dict)

    @property
    def per_decomposition(self) -> Dict[int, AurocResult]:
        return {d: t.auroc for d, t in self.tests.items()}

    def to_dict(self) -> dict:
        def auroc_dict(a: AurocResult):
            return {"mean": a.mean, "per_label": list(a.per_label), "std": a.std}

        rows = []
        for d in sorted(self.tests):
            t = self.tests[d]
            rows.append({
                "auroc": auroc_dict(t.auroc),
                "d": d,
                "degenerate": t.degenerate,
                "dof": t.ttest.dof if t.ttest else len(self.label_names) - 1,
                "height": self.plan.dims(d)[1],
                "normality_ok": t.normality_ok,
                "p_value": t.p_value,
                "passes": t.passes,
                "prefix_bytes": self.prefix_bytes.get(d),
                "shapiro_p": t.shapiro_p,
                "shapiro_w": t.shapiro_w,
                "t_statistic": t.ttest.t_statistic if t.ttest else None,
                "width": self.plan.dims(d)[0],
            })
        return {
            "chosen_d": self.chosen_d,
            "d_min_architecture": self.d_min_architecture,
            "decompositions": rows,
            "dropped_labels": list(self.dropped_labels),
            "labels": list(self.label_names),
            "n_assets": self.n_assets,
            "plan": {
                "alpha": self.plan.alpha,
                "height": self.plan.height,
                "ladder": [list(r) for r in self.plan.ladder],
                "n_levels": self.plan.n_levels,
                "width": self.plan.width,
            },
            "reference": auroc_dict(self.reference),
            "significance": self.significance,
        }


def architecture_floor(plan: DecompositionPlan, input_size: int) -> int:
    """Smallest d whose ladder rung is at least ``input_size`` on its short side."""
    if input_size > plan.min_dim(plan.n_levels):
        raise OptimizerError(
            f"model input {input_size} exceeds the image's short side {plan.min_dim(plan.n_levels)}"
        )
    for d in range(plan.n_levels + 1):
        if plan.min_dim(d) >= input_size:
            return d
    return plan.n_levels


def _check_plan(streams: Mapping[str, Codestream], plan: DecompositionPlan):
    for aid, cs in streams.items():
        h = cs.header
        if (h.width, h.height, h.alpha) != (plan.width, plan.height, plan.alpha):
            raise OptimizerError(f"stream {aid!r} does not share the validation plan")


def score_decompositions(streams: Mapping[str, Codestream], spec: ScorerSpec,
                         plan: DecompositionPlan, ds: Sequence[int]) -> Dict[int, np.ndarray]:
    """(n_assets, n_labels) score matrices for each d, rows in ``streams`` order."""
    _check_plan(streams, plan)
    out = {}
    for d in ds:
        rows = []
        for aid, cs in streams.items():
            img = decode_partial(cs, d) if spec.needs_pixels else None
            rows.append(score(spec, img, asset_id=aid, d=d))
        out[d] = np.vstack(rows)
    return out


def _usable_labels(y: np.ndarray, names: Sequence[str]):
    keep, dropped = [], []
    for k, name in enumerate(names):
        col = y[:, k]
        if col.min() == col.max():
            dropped.append(name)
        else:
            keep.append(k)
    for name in dropped:
        msg = f"label {name!r} has a single class in the validation set; dropped"
        warnings.warn(msg, stacklevel=3)
        log.warning(msg)
    return keep, dropped


def _per_label_auroc(scores: np.ndarray, y: np.ndarray, keep: Sequence[int]) -> np.ndarray:
    return np.array([auroc(scores[:, k], y[:, k]) for k in keep])


def select_from_scores(scores: Mapping[int, np.ndarray], y: np.ndarray, label_names: Sequence[str],
                       plan: DecompositionPlan, input_size: int,
                       significance: float = 0.05) -> EvalReport:
    """Selection over already-computed per-d score matrices (``scores[N]`` is the reference)."""
    if not 0.0 <= significance <= 1.0:
        raise OptimizerError("significance must lie in [0, 1]")
    n = plan.n_levels
    floor = architecture_floor(plan, input_size)
    keep, dropped = _usable_labels(y, label_names)
    if len(keep) < 2:
        raise OptimizerError("need at least two labels with both classes present")

    ref = _per_label_auroc(scores[n], y, keep)
    tests = {}
    for d in range(floor, n + 1):
        cand = _per_label_auroc(scores[d], y, keep)
        diff = cand - ref
        try:
            tt = paired_t_test_one_tailed(cand, ref)
            p, degenerate = tt.p_value, False
        except DegenerateTestError:
            tt = None
            degenerate = True
            # undefined statistic: pass only if no label lost AUROC
            p = 1.0 if np.all(diff >= 0) else 0.0
        sw_w = sw_p = None
        if diff.size >= 3 and np.ptp(diff) > 0:
            sw_w, sw_p = shapiro_wilk(diff)
            if sw_p <= NORMALITY_ALPHA:
                log.info("d=%d: paired differences fail normality (Shapiro-Wilk p=%.3g)", d, sw_p)
        tests[d] = DecompositionTest(
            d, auroc_summary(cand), tt, p, degenerate, sw_w, sw_p, passes=p >= significance
        )

    chosen = next((d for d in range(floor, n + 1) if tests[d].passes), n)
    return EvalReport(
        plan=plan,
        label_names=[label_names[k] for k in keep],
        dropped_labels=dropped,
        significance=significance,
        reference=auroc_summary(ref),
        tests=tests,
        chosen_d=chosen,
        d_min_architecture=floor,
        n_assets=int(y.shape[0]),
    )


def select_optimal(streams: Mapping[str, Codestream], labels: LabelTable, spec: ScorerSpec,
                   plan: DecompositionPlan, significance: float = 0.05) -> EvalReport:
    """Evaluate every d from the architecture floor to N and pick the first
    whose one-tailed p-value is at least ``significance``."""
    missing = [aid for aid in streams if aid not in labels.asset_ids]
    if missing:
        raise OptimizerError(f"no labels for assets {missing[:5]}")
    y = np.array([labels.row(aid) for aid in streams], dtype=np.int64)
    floor = architecture_floor(plan, spec.input_size)
    ds = list(range(floor, plan.n_levels + 1))
    scores = score_decompositions(streams, spec, plan, ds)
    report = select_from_scores(scores, y, labels.label_names, plan, spec.input_size, significance)
    report.prefix_bytes = {
        d: sum(cs.prefix_size(d) for cs in streams.values()) for d in ds
    }
    return report
