"""Static report rendering: fitted curves as SVG plus a CSV of the curves.

Output is deterministic byte-for-byte for identical inputs (fixed SVG hash
salt, no embedded timestamps). Model predictions are clamped to [-1, 1] only
when drawn; the CSV carries raw values.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib
import numpy as np
from matplotlib.figure import Figure

from .dataset import FEW_SHOT, FINETUNED, Observation
from .forms import EmergenceLawParams, ReluParams, eval_full_model
from .uncertainty import UncertaintySummary

CURVE_POINTS = 201
RANGE_MARGIN = 0.1
_SVG_HASHSALT = "emergelaw"


def law_view_of_relu(params: ReluParams) -> EmergenceLawParams:
    """A ReLU fit as a degenerate law (no data shift), for shared rendering."""
    return EmergenceLawParams(
        slope=params.slope,
        floor=params.floor,
        finetune_shift=0.0,
        data_coef=0.0,
        data_power=1.0,
        elbow_base=params.elbow,
    )


def loss_axis(observations) -> np.ndarray:
    """Uniform loss grid spanning the observed range +- 10% (kept positive)."""
    losses = [o.loss for o in observations]
    lo, hi = min(losses), max(losses)
    span = max(hi - lo, 1e-6)
    return np.linspace(max(lo - RANGE_MARGIN * span, 1e-6), hi + RANGE_MARGIN * span, CURVE_POINTS)


def curve_rows(law: EmergenceLawParams, d0: int, observations) -> list[tuple[str, float, float, float]]:
    """(series_label, d, loss, predicted_perf) rows: one series per finetuned
    data amount (descending) plus the extrapolated few-shot series at d0."""
    axis = loss_axis(observations)
    amounts = sorted({o.condition.data_amount for o in observations if o.condition.kind == FINETUNED}, reverse=True)
    rows = []
    for amount in amounts:
        label = f"finetuned-{amount}"
        rows.extend((label, float(amount), float(loss), eval_full_model(law, loss, amount, True)) for loss in axis)
    label = f"few-shot-extrapolated-d0-{d0}"
    rows.extend((label, float(d0), float(loss), eval_full_model(law, loss, d0, False)) for loss in axis)
    return rows


def write_curves_csv(rows, path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["series_label", "d", "loss", "predicted_perf"])
        writer.writerows(rows)


def render_svg(
    observations: list[Observation],
    rows,
    e_hat: float | None,
    path,
    uncertainty: UncertaintySummary | None = None,
    title: str = "",
) -> None:
    """Fit panel (curves + observations) with an optional CDF panel."""
    matplotlib.rcParams["svg.hashsalt"] = _SVG_HASHSALT
    n_panels = 2 if uncertainty is not None else 1
    fig = Figure(figsize=(6.0 * n_panels, 4.2))
    axes = fig.subplots(1, n_panels)
    ax = axes[0] if n_panels == 2 else axes

    series: dict[str, list[tuple[float, float]]] = {}
    for label, _, loss, pred in rows:
        series.setdefault(label, []).append((loss, pred))
    for i, (label, points) in enumerate(series.items()):
        xs = np.array([p[0] for p in points])
        ys = np.clip(np.array([p[1] for p in points]), -1.0, 1.0)
        if label.startswith("few-shot"):
            ax.plot(xs, ys, color="0.45", linewidth=2.6, label=label, zorder=3)
        else:
            ax.plot(xs, ys, color=f"C{i % 10}", linewidth=1.2, label=label)

    finetuned = [o for o in observations if o.condition.kind == FINETUNED]
    few_shot = [o for o in observations if o.condition.kind == FEW_SHOT]
    if finetuned:
        ax.scatter(
            [o.loss for o in finetuned], [o.performance for o in finetuned], s=12, c="C0", alpha=0.55, label="finetuned obs"
        )
    if few_shot:
        ax.scatter(
            [o.loss for o in few_shot], [o.performance for o in few_shot], s=46, c="black", marker="*", label="few-shot obs"
        )
    if e_hat is not None:
        ax.axvline(e_hat, color="0.45", linestyle="--", linewidth=1.0)
    ax.invert_xaxis()  # training progress runs right-to-left in loss
    basis = observations[0].loss_basis if observations else "loss"
    ax.set_xlabel(f"loss ({basis}, nats)")
    ax.set_ylabel("performance")
    ax.legend(fontsize=6, loc="upper left")
    if title:
        ax.set_title(title, fontsize=9)

    if uncertainty is not None:
        cax = axes[1]
        xs, ys = uncertainty.cdf_curve()
        cax.step(xs, ys, where="post", color="C0")
        if e_hat is not None:
            cax.axvline(e_hat, color="0.45", linestyle="--", linewidth=1.0)
        cax.set_xlabel("emergence point (nats)")
        cax.set_ylabel("cumulative probability")
        cax.set_ylim(0.0, 1.0)
        cax.set_title(f"{uncertainty.method} CDF", fontsize=9)

    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
