"""Prediction metrics and the leave-one-out cross-validation harness."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .models import DivergenceError, TrainConfig, predict, train
from .util import fmt17

LOGGER = logging.getLogger(__name__)


@dataclass
class MetricReport:
    """Held-out metrics for one piece; ``error`` marks a failed fold."""

    piece_id: str
    model: str
    r_squared: float
    pearson_r: float
    error: str | None = None


def r_squared(pred, target) -> float:
    """Coefficient of determination, 1 - SS_res / SS_tot.

    SS_tot is taken about the target mean, so a constant prediction at
    that mean scores 0 and predictions worse than it score negative.
    """
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape or len(pred) < 2:
        raise ValueError("need two equal-length curves of length >= 2")
    ss_tot = float(np.sum((target - target.mean()) ** 2))
    if ss_tot == 0:
        raise ValueError("zero target variance")
    ss_res = float(np.sum((pred - target) ** 2))
    return 1.0 - ss_res / ss_tot


def pearson_r(pred, target) -> float:
    """Correlation coefficient (population moments throughout)."""
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape or len(pred) < 2:
        raise ValueError("need two equal-length curves of length >= 2")
    pred_std = pred.std()
    target_std = target.std()
    if pred_std == 0 or target_std == 0:
        raise ValueError("zero variance input")
    cov = float(np.mean((pred - pred.mean()) * (target - target.mean())))
    return float(cov / (pred_std * target_std))


def fold_splits(n_pieces: int, seed: int, validation_count: int):
    """Deterministic fold layout for leave-one-out evaluation.

    Yields (test_index, train_indices, validation_indices, fold_seed).
    Validation pieces are drawn per fold from a generator seeded by
    (seed, fold index), so results do not depend on scheduling.
    """
    for i in range(n_pieces):
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        rest = [j for j in range(n_pieces) if j != i]
        chosen = sorted(rng.choice(len(rest), size=validation_count,
                                   replace=False)) if validation_count else []
        val_idx = [rest[k] for k in chosen]
        train_idx = [j for j in rest if j not in set(val_idx)]
        fold_seed = int(rng.integers(0, 2 ** 31 - 1))
        yield i, train_idx, val_idx, fold_seed


def loo_cross_validation(pieces, kind: str, config: TrainConfig,
                         validation_count: int = 4,
                         jobs: int = 1) -> list:
    """Leave-one-out evaluation over a list of (id, matrix, target).

    Each fold holds one piece out for testing, draws
    ``validation_count`` of the remaining pieces for early stopping,
    trains on the rest and reports held-out metrics.  A diverging fold
    is reported with its error instead of being dropped.  Reports are
    ordered by piece id regardless of ``jobs``.
    """
    if len(pieces) < 3:
        raise ValueError(f"need at least 3 pieces, got {len(pieces)}")
    if validation_count >= len(pieces) - 1:
        raise ValueError(f"validation_count {validation_count} leaves no "
                         f"training pieces for {len(pieces)} pieces")
    ordered = sorted(pieces, key=lambda p: p[0])
    splits = list(fold_splits(len(ordered), config.seed, validation_count))

    def run_fold(split):
        i, train_idx, val_idx, fold_seed = split
        piece_id, test_matrix, test_target = ordered[i]
        train_data = [(ordered[j][1], ordered[j][2]) for j in train_idx]
        val_data = [(ordered[j][1], ordered[j][2]) for j in val_idx]
        fold_config = replace(config, seed=fold_seed)
        try:
            params, vocab, _ = train(kind, train_data, val_data, fold_config)
            pred = predict(params, vocab.transform(test_matrix))
        except (DivergenceError, FloatingPointError,
                np.linalg.LinAlgError) as exc:
            LOGGER.warning("fold for piece %s failed: %s", piece_id, exc)
            return MetricReport(piece_id, kind, float("nan"), float("nan"),
                                error=str(exc))
        try:
            r2 = r_squared(pred, test_target.values)
            r = pearson_r(pred, test_target.values)
        except ValueError as exc:
            return MetricReport(piece_id, kind, float("nan"), float("nan"),
                                error=str(exc))
        return MetricReport(piece_id, kind, r2, r)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(run_fold, splits))
    return [run_fold(split) for split in splits]


def report_csv(reports) -> str:
    lines = ["piece_id,model,r2,r"]
    for rep in reports:
        lines.append(f"{rep.piece_id},{rep.model},"
                     f"{fmt17(rep.r_squared)},{fmt17(rep.pearson_r)}")
    return "\n".join(lines) + "\n"


def report_table(reports) -> str:
    """Aligned human-readable metrics table."""
    rows = [("piece", "model", "R2", "r")]
    for rep in reports:
        if rep.error:
            rows.append((rep.piece_id, rep.model, "failed", rep.error))
        else:
            rows.append((rep.piece_id, rep.model,
                         f"{rep.r_squared:.4f}", f"{rep.pearson_r:.4f}"))
    widths = [max(len(row[c]) for row in rows) for c in range(4)]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip()
             for row in rows]
    lines.insert(1, "-" * len(lines[0]))
    return "\n".join(lines) + "\n"
