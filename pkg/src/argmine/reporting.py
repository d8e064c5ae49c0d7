"""Artifact writing: delimited tables with metadata headers, plus figures.

Every file an invocation produces carries the same four-line header
(tool version, subcommand, config hash, seed), so any table or figure
can be traced back to the exact run that made it.  Figures embed the
header in PNG metadata since pixels have no comment lines.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from . import __version__
from .evaluation import ConfusionMatrix
from .importance import RankedWeight

PathLike = Union[str, Path]


def config_hash(payload) -> str:
    """Stable digest of the effective run configuration."""

    def default(o):
        if isinstance(o, Path):
            return str(o)
        if isinstance(o, (set, frozenset)):
            return sorted(o)
        return str(o)

    blob = json.dumps(payload, sort_keys=True, default=default)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def artifact_header(subcommand: str, config, seed: Optional[int] = None) -> List[str]:
    lines = [f"tool: argmine {__version__}",
             f"subcommand: {subcommand}",
             f"config: sha256:{config_hash(config)}"]
    if seed is not None:
        lines.append(f"seed: {seed}")
    return lines


def write_table(path: PathLike, lines: Iterable[str], header: Sequence[str]) -> None:
    """Delimited rows preceded by '#'-prefixed metadata lines."""
    out = [f"# {h}" for h in header]
    out.extend(lines)
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


def _png_metadata(header: Sequence[str]) -> dict:
    return {"Software": f"argmine {__version__}",
            "Comment": "; ".join(header)}


def save_confusion_heatmap(matrix: ConfusionMatrix, path: PathLike,
                           header: Sequence[str], title: str = "Confusion") -> None:
    """Row-normalized heat map; gold rows without support are dropped."""
    row_labels, mat = matrix.normalized()
    if mat.size == 0:
        raise ValueError("confusion matrix has no populated rows")
    n_rows, n_cols = mat.shape
    fig_w = max(4.0, 0.45 * n_cols + 2.0)
    fig_h = max(3.2, 0.45 * n_rows + 1.6)
    fig, ax = plt.subplots(figsize=(fig_w, fig_h))
    im = ax.imshow(mat, cmap="viridis", vmin=0.0, vmax=1.0, aspect="auto")
    ax.set_xticks(range(n_cols))
    ax.set_xticklabels(matrix.labels, rotation=90, fontsize=7)
    ax.set_yticks(range(n_rows))
    ax.set_yticklabels(row_labels, fontsize=7)
    ax.set_xlabel("predicted")
    ax.set_ylabel("gold")
    ax.set_title(title)
    if n_rows * n_cols <= 400:
        for i in range(n_rows):
            for j in range(n_cols):
                if mat[i, j] >= 0.005:
                    ax.text(j, i, f"{mat[i, j]:.2f}", ha="center", va="center",
                            fontsize=6,
                            color="white" if mat[i, j] < 0.6 else "black")
    fig.colorbar(im, ax=ax, fraction=0.04)
    fig.tight_layout()
    fig.savefig(path, dpi=150, metadata=_png_metadata(header))
    plt.close(fig)


def save_weights_chart(ranked: Sequence[RankedWeight], path: PathLike,
                       header: Sequence[str], title: str = "Feature weights",
                       top_n: int = 26) -> None:
    """Horizontal bars of signed weights, largest magnitude on top."""
    rows = list(ranked[:top_n])
    if not rows:
        raise ValueError("no weights to plot")
    names = [r.feature for r in rows][::-1]
    values = [r.weight for r in rows][::-1]
    colors = ["#2166ac" if v >= 0 else "#b2182b" for v in values]
    fig_h = max(3.0, 0.3 * len(rows) + 1.2)
    fig, ax = plt.subplots(figsize=(7.5, fig_h))
    ax.barh(range(len(rows)), values, color=colors)
    ax.set_yticks(range(len(rows)))
    ax.set_yticklabels(names, fontsize=7)
    ax.axvline(0.0, color="black", linewidth=0.8)
    ax.set_xlabel("weight on standardized feature")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150, metadata=_png_metadata(header))
    plt.close(fig)
