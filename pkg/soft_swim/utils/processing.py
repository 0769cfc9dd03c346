from __future__ import annotations

from typing import TYPE_CHECKING

if TYPE_CHECKING:
    import pandas as pd

    from soft_swim.core.dynamics.model import Trajectory

TRAJECTORY_COLUMNS = [
    "t",
    "com_x",
    "com_y",
    "com_z",
    "Qx",
    "Qy",
    "Qz",
    "regime",
]
CYCLE_COLUMNS = [
    "cycle",
    "dx",
    "dy",
    "dz",
    "blpc",
    "Qx",
    "Qy",
    "Qz",
    "Qtotal",
    "max_twist",
    "min_self_distance",
]
COMPARE_COLUMNS = [
    "design",
    "peak_blpc",
    "peak_at",
    "reverses_on_the_fly",
    "reverses_after_reorientation",
    "bidirectional",
    "stable",
    "weak_axes",
    "worst_deviation",
]


def trajectory_frame(traj: Trajectory) -> pd.DataFrame:
    import numpy as np
    import pandas as pd

    nan = float("nan")
    rows = [
        [
            sample.t,
            *sample.com,
            *(
                (sample.flow.Qx, sample.flow.Qy, sample.flow.Qz)
                if sample.flow
                else (nan, nan, nan)
            ),
            traj.regime.value,
        ]
        for sample in traj.samples
    ]
    data = pd.DataFrame(rows, columns=TRAJECTORY_COLUMNS)
    return data.astype({"t": np.float64})


def cycles_frame(traj: Trajectory) -> pd.DataFrame:
    import pandas as pd

    rows = [
        [
            cycle.index + 1,
            *cycle.displacement,
            cycle.blpc,
            cycle.Qx,
            cycle.Qy,
            cycle.Qz,
            cycle.Qtotal,
            cycle.max_twist,
            cycle.min_self_distance,
        ]
        for cycle in traj.cycles
    ]
    return pd.DataFrame(rows, columns=CYCLE_COLUMNS)


def flowrate_frame(traj: Trajectory) -> pd.DataFrame:
    """Normalized flowrate traces against t/T."""
    import pandas as pd

    rows = [
        [
            sample.t_local / traj.period,
            sample.flow.Qx,
            sample.flow.Qy,
            sample.flow.Qz,
            sample.flow.Qtotal,
        ]
        for sample in traj.samples
        if sample.flow is not None
    ]
    return pd.DataFrame(rows, columns=["t_over_T", "Qx", "Qy", "Qz", "Qtotal"])


def sweep_grid(
    data: pd.DataFrame, rows: str, columns: str, value: str = "blpc"
) -> pd.DataFrame:
    """Sweep table as a rows x columns grid of one result column."""
    return data.pivot(index=rows, columns=columns, values=value).sort_index()


def sweep_peak(data: pd.DataFrame, value: str = "blpc") -> pd.Series | None:
    """Sweep row of the fastest cell that swims in regime OK."""
    ok = data[(data["regime"] == "OK") & data[value].notna()]
    if ok.empty:
        return None
    return ok.loc[ok[value].abs().idxmax()]


def stability_table(
    data: pd.DataFrame, tolerance: float = 0.2
) -> pd.DataFrame:
    """Last-cycle blpc per tilt angle against the untilted run.

    An angle holds when its run stays in regime OK and its blpc is within
    ``tolerance`` of the 0 degree blpc.
    """
    angle = next(name for name in data.columns if name.startswith("tilt_"))
    last = data[data["cycle_index"] == data["cycle_index"].max()]
    last = last.set_index(angle).sort_index()
    if 0.0 not in last.index:
        raise ValueError(f"Stability table without a 0 degree {angle} run")

    baseline = last.at[0.0, "blpc"]
    deviation = (last["blpc"] - baseline).abs() / abs(baseline)
    table = last[["blpc", "regime"]].assign(
        axis=angle.removeprefix("tilt_"),
        deviation=deviation,
        holds=(last["regime"] == "OK") & (deviation <= tolerance),
    )
    return table.rename_axis("angle").reset_index()
