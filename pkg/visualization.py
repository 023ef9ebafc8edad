import plotly.express as px
import plotly.graph_objects as go
import pandas as pd
import numpy as np

NORM_LABELS = {
    "h_norm": "|y|_H",
    "v_norm": "|y|_V",
    "vprime_norm": "|y|_V'",
}


def _require(df, columns):
    missing = [c for c in columns if c not in df.columns]
    if missing:
        raise ValueError(f"Missing columns: {', '.join(missing)}")


def plot_norm_history(df, columns=("vprime_norm",), log_scale=True):
    """
    Plot state norms over time

    Args:
        df: pandas.DataFrame with a ``t`` column and norm columns
        columns: Norm columns to draw
        log_scale: Use a logarithmic y-axis

    Returns:
        plotly.graph_objects.Figure: Line chart figure
    """
    columns = list(columns)
    _require(df, ["t"] + columns)

    long_df = df.melt(id_vars="t", value_vars=columns, var_name="norm", value_name="value")
    long_df["norm"] = long_df["norm"].map(lambda c: NORM_LABELS.get(c, c))

    fig = px.line(
        long_df,
        x="t",
        y="value",
        color="norm",
        log_y=log_scale,
        title="State norm over time",
        template="plotly_white"
    )
    fig.update_layout(xaxis_title="t", yaxis_title="norm")
    return fig


def plot_switching_pattern(df):
    """
    Plot the index of the active actuator as a step function

    Args:
        df: pandas.DataFrame with ``t`` and ``active_index`` (0 = none)

    Returns:
        plotly.graph_objects.Figure: Step chart figure
    """
    _require(df, ["t", "active_index"])

    fig = go.Figure()
    fig.add_trace(go.Scatter(
        x=df["t"],
        y=df["active_index"],
        mode="lines",
        line_shape="hv",
        name="active actuator"
    ))

    max_index = int(df["active_index"].max()) if len(df) else 0
    fig.update_layout(
        title="Switching pattern",
        xaxis_title="t",
        yaxis_title="active actuator",
        yaxis=dict(tickmode="array", tickvals=list(range(0, max_index + 1))),
        template="plotly_white"
    )
    return fig


def plot_control_magnitude(df):
    """
    Plot the magnitude of the applied control

    Args:
        df: pandas.DataFrame with ``t`` and ``magnitude``; ``active_index``
            colors the segments when present

    Returns:
        plotly.graph_objects.Figure: Bar chart figure
    """
    _require(df, ["t", "magnitude"])

    if "active_index" in df.columns:
        plot_df = df.assign(actuator=df["active_index"].astype(int).astype(str))
        fig = px.bar(
            plot_df,
            x="t",
            y="magnitude",
            color="actuator",
            title="Control magnitude",
            template="plotly_white"
        )
    else:
        fig = px.bar(df, x="t", y="magnitude", title="Control magnitude", template="plotly_white")

    fig.update_layout(bargap=0, xaxis_title="t", yaxis_title="|u(t)|")
    return fig


def plot_state_snapshot(df, t=None, actuator_points=None):
    """
    Heatmap of the state at one snapshot time

    Args:
        df: pandas.DataFrame in the snapshots.csv layout (t, x1, x2, y)
        t: Snapshot time; the first one when omitted
        actuator_points: Optional (x1, x2) pairs to mark

    Returns:
        plotly.graph_objects.Figure: Heatmap figure
    """
    _require(df, ["t", "x1", "x2", "y"])
    times = np.sort(df["t"].unique())
    if len(times) == 0:
        raise ValueError("No snapshots available")
    if t is None:
        t = times[0]
    t = times[np.argmin(np.abs(times - t))]

    grid = df[df["t"] == t].pivot_table(index="x2", columns="x1", values="y")

    fig = go.Figure(go.Heatmap(
        x=grid.columns.to_numpy(),
        y=grid.index.to_numpy(),
        z=grid.to_numpy(),
        colorscale="RdBu_r",
        zmid=0,
        colorbar=dict(title="y")
    ))

    if actuator_points:
        points = np.asarray(actuator_points, dtype=float)
        fig.add_trace(go.Scatter(
            x=points[:, 0],
            y=points[:, 1],
            mode="markers+text",
            text=[str(i + 1) for i in range(len(points))],
            textposition="top center",
            marker=dict(symbol="x", size=10, color="black"),
            name="actuators"
        ))

    fig.update_layout(
        title=f"State at t = {t:g}",
        xaxis_title="x1",
        yaxis_title="x2",
        yaxis=dict(scaleanchor="x", scaleratio=1),
        template="plotly_white"
    )
    return fig


def plot_run_comparison(histories, column="vprime_norm", log_scale=True):
    """
    Overlay one norm of several runs

    Args:
        histories: Mapping of run name to norm history DataFrame
        column: Norm column to compare
        log_scale: Use a logarithmic y-axis

    Returns:
        plotly.graph_objects.Figure: Line chart figure
    """
    frames = []
    for name, df in histories.items():
        _require(df, ["t", column])
        frames.append(pd.DataFrame({"t": df["t"], "value": df[column], "run": name}))
    if not frames:
        raise ValueError("No runs to compare")

    fig = px.line(
        pd.concat(frames, ignore_index=True),
        x="t",
        y="value",
        color="run",
        log_y=log_scale,
        title=f"{NORM_LABELS.get(column, column)} by run",
        template="plotly_white"
    )
    fig.update_layout(xaxis_title="t", yaxis_title=NORM_LABELS.get(column, column))
    return fig
