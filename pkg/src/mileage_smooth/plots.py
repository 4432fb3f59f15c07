"""SVG line charts of step-record series.

Figures are built on a bare ``Figure`` (no pyplot state) and written with a
fixed hash salt and no date stamp, so identical input gives identical bytes.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping

import matplotlib
from matplotlib.backends.backend_svg import FigureCanvasSVG
from matplotlib.figure import Figure
import numpy as np

_STYLE = {
    "svg.hashsalt": "mileage-smooth",
    "svg.fonttype": "none",
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.1,
}

Series = Mapping[str, np.ndarray]


def _turbine_sum(records: Series, prefix: str) -> np.ndarray:
    cols = sorted((k for k in records if k.startswith(prefix + "_t")), key=lambda k: int(k.rsplit("_t", 1)[1]))
    if not cols:
        raise KeyError(f"no '{prefix}_t*' columns in step records")
    return np.sum([records[c] for c in cols], axis=0)


def farm_figure(records: Series, baseline: Series | None = None) -> Figure:
    """Farm output, summed command and schedule (top); AGC dispatch (bottom)."""
    for key in ("t", "farm_p_e", "schedule", "net_imbalance"):
        if key not in records:
            raise KeyError(f"step records lack column '{key}'")
    t_min = records["t"] / 60.0
    with matplotlib.rc_context(_STYLE):
        fig = Figure(figsize=(7.0, 5.0))
        FigureCanvasSVG(fig)
        top, bottom = fig.subplots(2, 1, sharex=True)

        if baseline is not None:
            top.plot(baseline["t"] / 60.0, baseline["farm_p_e"] / 1e6, color="0.6", label="MPPT baseline")
        top.plot(t_min, records["farm_p_e"] / 1e6, color="C0", label="farm output")
        top.plot(t_min, _turbine_sum(records, "command") / 1e6, color="C1", ls="--", label="command")
        top.plot(t_min, records["schedule"] / 1e6, color="k", ls=":", label="schedule")
        top.set_ylabel("power (MW)")
        top.legend(loc="best", fontsize=7)

        g_cols = sorted(k for k in records if k.startswith("g_u"))
        for k in g_cols:
            bottom.plot(t_min, records[k], label=k.replace("g_u", "unit "))
        bottom.plot(t_min, records["net_imbalance"], color="k", lw=0.8, label="net imbalance")
        bottom.set_ylabel("regulation (MW)")
        bottom.set_xlabel("time (min)")
        bottom.legend(loc="best", fontsize=7)
        fig.tight_layout()
    return fig


def write_svg(fig: Figure, path: Path | str) -> None:
    with matplotlib.rc_context(_STYLE):
        fig.savefig(path, format="svg", metadata={"Date": None})


def plot_records(records: Series, path: Path | str, baseline: Series | None = None) -> None:
    write_svg(farm_figure(records, baseline), path)
