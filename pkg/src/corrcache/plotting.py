"""Render sweep curves to an image file next to the CSV output."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

_STYLES = {
    "p_lb": dict(color="black", ls="-", marker="", label="lower bound"),
    "p_ub": dict(color="tab:blue", ls="--", marker="o", label="superposition"),
    "p_pb": dict(color="tab:green", ls="-.", marker="s", label="piggyback"),
    "p_ign": dict(color="tab:red", ls=":", marker="^", label="correlation-ignorant"),
}


def render_curves(points: Sequence, cfg, path: Union[str, Path]) -> Path:
    """Plot every populated curve of a sweep and save the figure."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    xs = [p.sweep for p in points]
    for field, style in _STYLES.items():
        series = [(x, getattr(p, field)) for x, p in zip(xs, points)]
        series = [(x, y) for x, y in series if y is not None]
        if not series:
            continue
        ax.plot(*zip(*series), markersize=3, linewidth=1.3, **style)
    if cfg.sweep == "M":
        ax.set_xlabel("normalized cache capacity M")
    else:
        ax.set_xlabel(f"file-length fraction at commonness level {cfg.sweep_index}")
    ax.set_ylabel("transmit power")
    ax.set_title(cfg.label)
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
