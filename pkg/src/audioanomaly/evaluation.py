"""Clip-level scoring, ROC-AUC and the multi-seed experiment protocol.

Patch scores are mean-pooled into one score per clip; AUC is computed
from the Mann-Whitney U statistic with midrank tie handling; experiments
repeat the split/fit/score cycle over five seeds and report the mean AUC
per (extractor, model, machine, id) cell plus first/second rank counts.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from . import ingest
from .embedding import apply_standardizer, fit_standardizer
from .models import fit_model


class EvaluationError(Exception):
    pass


@dataclass(frozen=True)
class ClipScore:
    clip_id: str
    label: str  # "normal" | "anomalous"
    score: float
    n_patches: int


@dataclass(frozen=True)
class RocResult:
    auc: float
    n_pos: int
    n_neg: int


def pool_mean(patch_scores, clip_id="", label=""):
    """Mean-pool per-patch scores into one clip score."""
    scores = np.asarray(list(patch_scores), dtype=np.float64)
    if scores.size == 0:
        raise EvaluationError(f"no patch scores for clip {clip_id!r}")
    return ClipScore(
        clip_id=clip_id,
        label=label,
        score=float(scores.mean()),
        n_patches=scores.size,
    )


def _midranks(values):
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(len(values))
    sorted_vals = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # 1-based midrank
        i = j + 1
    return ranks


def roc_auc(clip_scores):
    """AUC = U / (n_pos * n_neg) with midrank tie handling: the
    probability that a random anomalous clip outscores a random normal
    clip, ties counted one half."""
    scores = np.asarray([c.score for c in clip_scores], dtype=np.float64)
    positive = np.asarray([c.label == "anomalous" for c in clip_scores])
    n_pos = int(positive.sum())
    n_neg = len(scores) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise EvaluationError("need at least one clip of each label")
    ranks = _midranks(scores)
    u = ranks[positive].sum() - n_pos * (n_pos + 1) / 2.0
    return RocResult(auc=float(u / (n_pos * n_neg)), n_pos=n_pos, n_neg=n_neg)


@dataclass
class ExperimentReport:
    cells: dict = field(default_factory=dict)
    # (extractor, model, machine_type, machine_id) -> {"seeds": {seed: auc}, "mean": float}
    config: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)

    def mean_grid(self):
        return {key: cell["mean"] for key, cell in self.cells.items()}

    def to_json(self):
        records = []
        for (extractor, model, machine, mid), cell in sorted(self.cells.items()):
            records.append(
                {
                    "extractor": extractor,
                    "model": model,
                    "machine_type": machine,
                    "machine_id": mid,
                    "mean_auc": cell["mean"],
                    "per_seed": {str(s): a for s, a in sorted(cell["seeds"].items())},
                }
            )
        return json.dumps(
            {"config": self.config, "cells": records, "failures": self.failures},
            indent=2,
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        report = cls(config=data.get("config", {}), failures=data.get("failures", []))
        for rec in data["cells"]:
            key = (rec["extractor"], rec["model"], rec["machine_type"], rec["machine_id"])
            report.cells[key] = {
                "mean": rec["mean_auc"],
                "seeds": {int(s): a for s, a in rec["per_seed"].items()},
            }
        return report


def score_test_clips(model, test_features, labels_by_clip):
    """Score each test clip: model scores per patch, mean-pooled."""
    clip_scores = []
    for clip_id in test_features.clip_ids():
        rows = test_features.rows_for_clip(clip_id)
        patch_scores = model.score(rows)
        clip_scores.append(
            pool_mean(patch_scores, clip_id=clip_id, label=labels_by_clip[clip_id])
        )
    return sorted(clip_scores, key=lambda c: c.clip_id)


def run_cell(features, group_index, model_kind, seed, n_test_normal=150, hyper=None):
    """One experiment cell for one seed: split, standardize on train,
    fit, score test clips, AUC. Returns (auc, clip_scores)."""
    train_idx, test_idx = ingest.split_train_test(
        group_index, seed=seed, n_test_normal=n_test_normal
    )
    train_clips = {e.path for e in train_idx.entries}
    test_clips = {e.path for e in test_idx.entries}
    if train_clips & test_clips:
        raise EvaluationError("train/test clip leakage detected")
    labels = {e.path: e.label for e in group_index.entries}

    sorted_feats = features.sorted_rows()
    train_rows = [i for i, (cid, _) in enumerate(sorted_feats.row_meta) if cid in train_clips]
    test_rows = [i for i, (cid, _) in enumerate(sorted_feats.row_meta) if cid in test_clips]
    if not train_rows or not test_rows:
        raise EvaluationError("split produced an empty feature selection")

    from dataclasses import replace

    train_m = replace(
        sorted_feats,
        values=sorted_feats.values[train_rows],
        row_meta=tuple(sorted_feats.row_meta[i] for i in train_rows),
    )
    test_m = replace(
        sorted_feats,
        values=sorted_feats.values[test_rows],
        row_meta=tuple(sorted_feats.row_meta[i] for i in test_rows),
    )

    standardizer = fit_standardizer(train_m)
    train_std = apply_standardizer(standardizer, train_m)
    test_std = apply_standardizer(standardizer, test_m)

    model = fit_model(model_kind, train_std.values, seed=seed, **(hyper or {}))
    clip_scores = score_test_clips(model, test_std, labels)
    return roc_auc(clip_scores).auc, clip_scores


def run_experiment(provider, extractors, model_kinds, machines, seeds=(0, 1, 2, 3, 4),
                   n_test_normal=150, hyper=None, config=None, on_cell=None,
                   existing_cells=None):
    """Full grid: for each (extractor, model, machine, id) and each seed,
    run the split/fit/score protocol and record per-seed AUC plus the
    mean. Failing cells are recorded and the run continues.

    `provider` supplies `index_for(machine_type, machine_id)` and
    `features_for(extractor_id, machine_type, machine_id)`.
    """
    report = ExperimentReport(config=dict(config or {}))
    existing_cells = existing_cells or {}
    for machine_type, machine_id in machines:
        pending = [
            (extractor, model_kind)
            for extractor in extractors
            for model_kind in model_kinds
            if (extractor, model_kind, machine_type, machine_id) not in existing_cells
        ]
        for extractor in extractors:
            for model_kind in model_kinds:
                key = (extractor, model_kind, machine_type, machine_id)
                if key in existing_cells:
                    report.cells[key] = existing_cells[key]
        if not pending:
            continue
        group_index = provider.index_for(machine_type, machine_id)
        features_by_extractor = {}
        for extractor, model_kind in pending:
            key = (extractor, model_kind, machine_type, machine_id)
            if extractor not in features_by_extractor:
                try:
                    features_by_extractor[extractor] = provider.features_for(
                        extractor, machine_type, machine_id
                    )
                except Exception as exc:
                    features_by_extractor[extractor] = exc
            features = features_by_extractor[extractor]
            if isinstance(features, Exception):
                report.failures.append({"cell": list(key), "error": str(features)})
                continue
            per_seed = {}
            try:
                for seed in seeds:
                    auc, _ = run_cell(
                        features, group_index, model_kind, seed,
                        n_test_normal=n_test_normal,
                        hyper=(hyper or {}).get(model_kind),
                    )
                    per_seed[seed] = auc
            except Exception as exc:
                report.failures.append({"cell": list(key), "error": str(exc)})
                continue
            report.cells[key] = {
                "seeds": per_seed,
                "mean": float(np.mean(list(per_seed.values()))),
            }
            if on_cell is not None:
                on_cell(key, report.cells[key])
    return report


@dataclass(frozen=True)
class RankSummary:
    counts: dict  # group -> (n_first, n_second)
    ties: tuple  # of (column, rank, groups involved)


def rank_tuples(values, groups):
    """Count, per column, which row group holds the highest and
    second-highest value. `values` maps (row, column) -> value; `groups`
    maps row -> group label. Ties award the rank to every tied entry and
    are flagged."""
    columns = sorted({col for _, col in values})
    firsts = {g: 0 for g in groups.values()}
    seconds = {g: 0 for g in groups.values()}
    ties = []
    for col in columns:
        col_rows = [(row, v) for (row, c), v in values.items() if c == col]
        if not col_rows:
            continue
        best = max(v for _, v in col_rows)
        best_rows = [row for row, v in col_rows if v == best]
        below = [v for _, v in col_rows if v < best]
        for row in best_rows:
            firsts[groups[row]] += 1
        if len(best_rows) > 1:
            ties.append((col, 1, tuple(sorted(groups[r] for r in best_rows))))
        if below:
            second = max(below)
            second_rows = [row for row, v in col_rows if v == second]
            for row in second_rows:
                seconds[groups[row]] += 1
            if len(second_rows) > 1:
                ties.append((col, 2, tuple(sorted(groups[r] for r in second_rows))))
    counts = {g: (firsts[g], seconds[g]) for g in firsts}
    return RankSummary(counts=counts, ties=tuple(ties))


def rank_summary(report, axis):
    """Rank extractors or models by first/second place counts over the
    (machine, id) columns of a complete report grid."""
    if axis not in ("extractor", "model"):
        raise EvaluationError(f"axis must be 'extractor' or 'model', got {axis!r}")
    values = {}
    groups = {}
    columns = set()
    for (extractor, model, machine, mid), cell in report.cells.items():
        row = (extractor, model)
        col = (machine, mid)
        values[(row, col)] = cell["mean"]
        groups[row] = extractor if axis == "extractor" else model
        columns.add(col)
    n_expected = len(groups) * len(columns)
    if len(values) != n_expected:
        raise EvaluationError(
            f"incomplete grid: {len(values)} cells, expected {n_expected}"
        )
    return rank_tuples(values, groups)


def render_table(report):
    """Plain-text table: one row per (extractor, model), one column per
    (machine, id), mean AUC in percent."""
    keys = sorted(report.cells)
    extractors = sorted({k[0] for k in keys})
    models = sorted({k[1] for k in keys})
    columns = sorted({(k[2], k[3]) for k in keys})
    header = ["extractor", "model"] + [f"{m}/{i}" for m, i in columns]
    widths = [max(10, len(h)) for h in header]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    for extractor in extractors:
        for model in models:
            row = [extractor, model]
            for machine, mid in columns:
                cell = report.cells.get((extractor, model, machine, mid))
                row.append("-" if cell is None else f"{100.0 * cell['mean']:.1f}")
            lines.append("  ".join(v.ljust(w) for v, w in zip(row, widths)))
    return "\n".join(lines) + "\n"


def render_rank_section(report):
    lines = []
    for axis in ("extractor", "model"):
        try:
            summary = rank_summary(report, axis)
        except EvaluationError:
            continue
        ranked = sorted(
            summary.counts.items(), key=lambda kv: (kv[1][0], kv[1][1]), reverse=True
        )
        lines.append(f"{axis} ranking (1st, 2nd):")
        for group, (first, second) in ranked:
            lines.append(f"  {group}: ({first}, {second})")
        for col, rank, tied in summary.ties:
            lines.append(f"  tie for rank {rank} at {col[0]}/{col[1]}: {', '.join(tied)}")
    return "\n".join(lines) + "\n" if lines else ""
