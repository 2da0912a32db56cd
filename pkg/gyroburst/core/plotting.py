from __future__ import annotations

from pathlib import Path
from typing import Any, Mapping, Sequence, Union

import matplotlib

# Use non-interactive backend for headless environments (tests/CI)
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

PathLike = Union[str, Path]


def save_steady_error_plot(reports: Sequence[Any], threshold: float, path: PathLike = "steady_error.png") -> Path:
    """Bar chart of per-frame steady error; unmeasurable frames are drawn at the top of the axis."""
    ids = [r.frame_id for r in reports]
    errors = [float(r.steady_error) for r in reports]
    finite = [e for e in errors if e != float("inf")]
    ceiling = max(finite + [threshold]) * 1.2
    heights = [e if e != float("inf") else ceiling for e in errors]
    colors = ["tab:green" if r.valid else "tab:red" for r in reports]

    fig, ax = plt.subplots()
    ax.bar(ids, heights, color=colors)
    ax.axhline(threshold, color="black", linestyle="--", label=f"threshold {threshold:g} px")
    ax.set_ylim(0, ceiling)
    ax.set_xlabel("Frame")
    ax.set_ylabel("Steady error (px)")
    ax.set_title("Frame selection")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return Path(path)


def save_convergence_plot(
    errors: Union[Sequence[float], Mapping[str, Sequence[float]]],
    path: PathLike = "convergence.png",
) -> Path:
    series = errors if isinstance(errors, Mapping) else {"error": errors}
    fig, ax = plt.subplots()
    for label, values in series.items():
        ax.plot(list(range(len(values))), list(values), marker="o", label=label)
    ax.set_xlabel("Iteration")
    ax.set_ylabel("Mean reprojection error (px)")
    ax.set_title("UKF convergence")
    if len(series) > 1:
        ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return Path(path)
