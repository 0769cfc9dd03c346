from __future__ import annotations

from datetime import datetime, timezone
from typing import TYPE_CHECKING

import numpy as np

from soft_swim.core.dynamics.model import Regime
from soft_swim.utils.logging import Logger

if TYPE_CHECKING:
    from pathlib import Path

    import pandas as pd

FLOAT_FORMAT = "%.12g"
PROVENANCE_PREFIX = "# provenance"
CREATED_PREFIX = "# created"
COLORMAP = "Blues"
HATCHES = {
    Regime.SELF_CONTACT: "xx",
    Regime.COILING: "//",
    Regime.FLOPPY: "..",
    Regime.NOT_CONVERGED: "++",
}


def write_table(path: Path, frame: pd.DataFrame) -> None:
    """Plain CSV with a one-line column header."""
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    Logger.info(f"Wrote {len(frame)} rows to {path}")


def start_table(
    path: Path, columns: list[str], config_hash: str, code_version: str
) -> None:
    """Creates a provenance CSV: hash line, timestamp line, column header."""
    path.parent.mkdir(parents=True, exist_ok=True)
    created = datetime.now(timezone.utc).isoformat(timespec="seconds")
    with path.open("w") as file:
        file.write(
            f"{PROVENANCE_PREFIX} config_hash={config_hash} "
            f"code_version={code_version}\n"
        )
        file.write(f"{CREATED_PREFIX} {created}\n")
        file.write(",".join(columns) + "\n")


def append_rows(path: Path, frame: pd.DataFrame) -> None:
    frame.to_csv(
        path, mode="a", header=False, index=False, float_format=FLOAT_FORMAT
    )


def read_provenance(path: Path) -> dict[str, str]:
    with path.open() as file:
        first = file.readline().strip()
    if not first.startswith(PROVENANCE_PREFIX):
        return {}
    fields = first.removeprefix(PROVENANCE_PREFIX).split()
    return dict(field.split("=", 1) for field in fields)


def read_table(path: Path) -> pd.DataFrame:
    import pandas as pd

    return pd.read_csv(path, comment="#")


def heatmap_svg(
    frame: pd.DataFrame,
    x: str,
    y: str,
    path: Path,
    value: str = "blpc",
    title: str | None = None,
) -> None:
    """Writes a cell heatmap of a sweep table.

    Every grid cell is one rectangle with the SVG id "cell-<i>-<j>", i
    indexing x and j indexing y. Non-OK regimes are hatched. The colormap
    spans the finite values of the figure and its range is printed in the
    legend.

    Args:
        frame: Table with the x, y, value and "regime" columns.
        x: Column along the horizontal axis.
        y: Column along the vertical axis.
        path: Output SVG.
        value: Colored column.
        title: Figure title.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    from matplotlib.cm import ScalarMappable
    from matplotlib.colors import Normalize
    from matplotlib.patches import Patch, Rectangle

    plt.rcParams["svg.hashsalt"] = "soft-swim"
    plt.rcParams["hatch.linewidth"] = 0.8

    xs = sorted(frame[x].unique())
    ys = sorted(frame[y].unique())
    values = frame[value].to_numpy(dtype=float)
    finite = values[np.isfinite(values)]
    lo, hi = (finite.min(), finite.max()) if finite.size else (0.0, 1.0)
    norm = Normalize(vmin=lo, vmax=hi)
    cmap = plt.get_cmap(COLORMAP)

    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    for record in frame.to_dict("records"):
        i, j = xs.index(record[x]), ys.index(record[y])
        cell = float(record[value])
        hatch = HATCHES.get(Regime(record["regime"]))
        ax.add_patch(
            Rectangle(
                (i - 0.5, j - 0.5),
                1.0,
                1.0,
                facecolor=cmap(norm(cell)) if np.isfinite(cell) else "0.85",
                edgecolor="white" if hatch is None else "0.2",
                linewidth=0.5,
                hatch=hatch,
                gid=f"cell-{i}-{j}",
            )
        )

    ax.set_xlim(-0.5, len(xs) - 0.5)
    ax.set_ylim(-0.5, len(ys) - 0.5)
    ax.set_xticks(range(len(xs)), [f"{v:g}" for v in xs])
    ax.set_yticks(range(len(ys)), [f"{v:g}" for v in ys])
    ax.set_xlabel(x)
    ax.set_ylabel(y)
    if title:
        ax.set_title(title)

    fig.colorbar(ScalarMappable(norm=norm, cmap=cmap), ax=ax, label=value)
    handles = [
        Patch(facecolor="white", edgecolor="0.2", hatch=h, label=r.value)
        for r, h in HATCHES.items()
    ]
    handles.append(
        Patch(facecolor="none", label=f"{value} range [{lo:.4g}, {hi:.4g}]")
    )
    ax.legend(
        handles=handles,
        loc="upper left",
        bbox_to_anchor=(1.3, 1.0),
        fontsize="small",
        frameon=False,
    )

    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(
        path, format="svg", metadata={"Date": None}, bbox_inches="tight"
    )
    plt.close(fig)
    Logger.info(f"Wrote heatmap {path}")
