"""Dual-axis benchmark figures rendered from harness CSV files.

Rendering is deterministic: the same CSV bytes produce the same image bytes.
That takes a pinned svg hashsalt, no embedded timestamps, and stable row and
series ordering regardless of how the CSV rows were shuffled on disk.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import pandas as pd

FIGURE_KINDS = ("freq", "qc", "timeout", "fl")

SWEEP_COLUMNS = ("config_id", "axis_value", "repetition", "tasks_per_second", "timeouts")
FL_COLUMNS = ("round", "agreed_score", "accepted", "heldout_loss")

AXIS_LABELS = {
    "freq": "inference requests per task",
    "qc": "commit quorum size",
    "timeout": "queue timeout (blocks)",
}


class MissingColumnError(ValueError):
    pass


@dataclass
class FigureSpec:
    kind: str
    csv_path: str
    out_path: str
    axis_col: str = "axis_value"
    line_col: str = "tasks_per_second"
    bar_col: str = "timeouts"
    title: str | None = None


def spec_for(kind, csv_path, out_path, title=None):
    if kind not in FIGURE_KINDS:
        raise ValueError(f"unknown figure kind {kind!r}; expected one of {FIGURE_KINDS}")
    if kind == "fl":
        return FigureSpec(
            kind, csv_path, out_path,
            axis_col="round", line_col="heldout_loss", bar_col="agreed_score",
            title=title,
        )
    return FigureSpec(kind, csv_path, out_path, title=title)


def _require(df, columns, path):
    missing = [c for c in columns if c not in df.columns]
    if missing:
        raise MissingColumnError(f"{path}: missing column(s) {', '.join(missing)}")


def _fmt(v):
    return f"{v:g}"


def sweep_stats(df, spec):
    """Mean and sample-std of the line/bar columns per (series, axis value).

    Prefers the per-repetition rows; falls back to the precomputed mean/std
    aggregate rows when a CSV carries only those.
    """
    reps = df[pd.to_numeric(df["repetition"], errors="coerce").notna()]
    if len(reps):
        grouped = reps.groupby(["config_id", spec.axis_col])
        stats = grouped.agg(
            line_mean=(spec.line_col, "mean"),
            line_std=(spec.line_col, "std"),
            bar_mean=(spec.bar_col, "mean"),
            bar_std=(spec.bar_col, "std"),
        ).reset_index()
        return stats.fillna({"line_std": 0.0, "bar_std": 0.0})

    keys = ["config_id", spec.axis_col]
    means = df[df["repetition"] == "mean"]
    stds = df[df["repetition"] == "std"]
    if means.empty:
        raise ValueError(f"no per-repetition or aggregate rows found for {spec.csv_path}")
    stats = means[keys + [spec.line_col, spec.bar_col]].rename(
        columns={spec.line_col: "line_mean", spec.bar_col: "bar_mean"}
    )
    stats = stats.merge(
        stds[keys + [spec.line_col, spec.bar_col]].rename(
            columns={spec.line_col: "line_std", spec.bar_col: "bar_std"}
        ),
        on=keys,
        how="left",
    )
    return stats.fillna({"line_std": 0.0, "bar_std": 0.0})


def _series_labels(config_ids):
    # config_id looks like "label:axis=value"; the part before the colon names
    # the series.  Fall back to the full id if two configs share a prefix.
    prefixes = [cid.split(":", 1)[0] for cid in config_ids]
    if len(set(prefixes)) == len(config_ids):
        return dict(zip(config_ids, prefixes))
    return {cid: cid for cid in config_ids}


def _render_sweep(spec, df):
    _require(df, SWEEP_COLUMNS, spec.csv_path)
    stats = sweep_stats(df, spec).sort_values(["config_id", spec.axis_col])

    xs = sorted(stats[spec.axis_col].unique())
    pos = {v: i for i, v in enumerate(xs)}
    series = sorted(stats["config_id"].unique())
    labels = _series_labels(series)
    width = 0.8 / len(series)

    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    ax_bars = ax.twinx()
    handles = []
    for k, cid in enumerate(series):
        sub = stats[stats["config_id"] == cid]
        x = [pos[v] for v in sub[spec.axis_col]]
        offset = (k - (len(series) - 1) / 2) * width
        ax_bars.bar(
            [p + offset for p in x],
            sub["bar_mean"],
            width=width,
            yerr=sub["bar_std"],
            color=f"C{k}",
            alpha=0.25,
            capsize=2,
        )
        (line,) = ax.plot(x, sub["line_mean"], marker="o", color=f"C{k}", label=labels[cid])
        ax.errorbar(x, sub["line_mean"], yerr=sub["line_std"], fmt="none", color=f"C{k}", capsize=3)
        handles.append(line)

    ax.set_xticks(range(len(xs)))
    ax.set_xticklabels([_fmt(v) for v in xs])
    ax.set_xlabel(AXIS_LABELS.get(spec.kind, spec.axis_col))
    ax.set_ylabel("tasks per second")
    ax.set_ylim(bottom=0)
    ax_bars.set_ylabel("timed-out requests (bars)")
    ax_bars.set_ylim(bottom=0)
    ax.set_zorder(ax_bars.get_zorder() + 1)  # lines draw over the bars
    ax.patch.set_visible(False)
    ax.legend(handles=handles, loc="upper right")
    ax.set_title(spec.title or f"throughput and timeouts vs {spec.kind}")
    return _save(fig, spec.out_path)


def _render_fl(spec, df):
    _require(df, FL_COLUMNS, spec.csv_path)
    d = df.sort_values("round")

    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    ax_bars = ax.twinx()
    accepted = d[d["accepted"] == 1]
    rejected = d[d["accepted"] == 0]
    ax_bars.bar(accepted["round"], accepted["agreed_score"], color="C2", alpha=0.25,
                label="agreed score (accepted)")
    if len(rejected):
        ax_bars.bar(rejected["round"], rejected["agreed_score"], color="C3", alpha=0.35,
                    label="agreed score (rejected)")
    loss = d[d["heldout_loss"].notna()]
    ax.plot(loss["round"], loss["heldout_loss"], marker=".", color="C0", label="held-out loss")

    ax.set_xlabel("training round")
    ax.set_ylabel("held-out loss")
    ax.set_ylim(bottom=0)
    ax_bars.set_ylabel("agreed score (bars)")
    ax_bars.set_ylim(0, 10_000)
    ax.set_zorder(ax_bars.get_zorder() + 1)
    ax.patch.set_visible(False)
    lines, line_labels = ax.get_legend_handles_labels()
    bars, bar_labels = ax_bars.get_legend_handles_labels()
    ax.legend(lines + bars, line_labels + bar_labels, loc="upper right")
    ax.set_title(spec.title or "federated training progress")
    return _save(fig, spec.out_path)


def _save(fig, out_path):
    ext = Path(out_path).suffix.lower()
    metadata = None
    if ext == ".svg":
        metadata = {"Date": None}
    elif ext == ".pdf":
        metadata = {"CreationDate": None}
    fig.savefig(out_path, metadata=metadata)
    plt.close(fig)
    return out_path


def render(spec: FigureSpec) -> str:
    """Render the figure described by `spec`; returns the output path."""
    with plt.rc_context({"svg.hashsalt": "crplots", "figure.dpi": 100}):
        df = pd.read_csv(spec.csv_path)
        if spec.kind == "fl":
            return _render_fl(spec, df)
        return _render_sweep(spec, df)
