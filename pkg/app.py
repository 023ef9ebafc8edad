import os
from dataclasses import replace

import streamlit as st

from experiments import PRESETS, compare_runs, preset_config, run_experiment
from placements import default_placement
from visualization import (
    plot_norm_history,
    plot_switching_pattern,
    plot_control_magnitude,
    plot_state_snapshot,
    plot_run_comparison
)
from utils import get_download_link, load_run, list_runs

RUNS_ROOT = os.environ.get("SWITCHING_RHC_RUNS_DIR", "runs")

# Set page config
st.set_page_config(
    page_title="Switching Control Runs",
    page_icon="🎛️",
    layout="wide",
    initial_sidebar_state="expanded"
)

# Initialize session state variables
if 'runs_root' not in st.session_state:
    st.session_state.runs_root = RUNS_ROOT
if 'selected_run' not in st.session_state:
    st.session_state.selected_run = None


def main():
    st.title("🎛️ Switching Receding Horizon Control")

    # Sidebar for navigation
    st.sidebar.title("Navigation")
    st.session_state.runs_root = st.sidebar.text_input("Runs folder:", st.session_state.runs_root)
    page = st.sidebar.radio(
        "Select a page:",
        ["📂 Run Viewer", "📊 Compare Runs", "▶️ Launch Preset"]
    )

    # Show the selected page
    if page == "📂 Run Viewer":
        show_run_viewer_page()
    elif page == "📊 Compare Runs":
        show_compare_page()
    elif page == "▶️ Launch Preset":
        show_launch_page()

    # Footer
    st.sidebar.markdown("---")
    st.sidebar.info(
        "Browse the artifacts written by `switching-rhc run`: norm decay, "
        "switching pattern and state snapshots."
    )


def show_run_viewer_page():
    st.header("📂 Run Viewer")

    runs = list_runs(st.session_state.runs_root)
    if not runs:
        st.warning(f"No runs found under {st.session_state.runs_root}.")
        return

    labels = [str(path) for path in runs]
    selected = st.selectbox("Select a run:", labels)
    st.session_state.selected_run = selected

    try:
        run = load_run(selected)
    except Exception as e:
        st.error(f"Error loading the run: {str(e)}")
        return

    summary = run["summary"]
    if run["failed"]:
        st.error(f"Run failed: {summary.get('failure_message')}")

    col1, col2, col3, col4 = st.columns(4)
    with col1:
        st.metric("Mode", summary.get("mode"))
    with col2:
        st.metric("Actuators", summary.get("actuator_count"))
    with col3:
        cost = summary.get("accumulated_cost")
        st.metric("Accumulated cost", "n/a" if cost is None else f"{cost:.4e}")
    with col4:
        rate = summary.get("decay_rate")
        st.metric("Decay rate", "n/a" if rate is None else f"{rate:.3f}")

    norms = run["norms"]
    st.subheader("Norm history")
    columns = st.multiselect(
        "Norms:",
        options=["h_norm", "v_norm", "vprime_norm"],
        default=["vprime_norm"]
    )
    if columns:
        st.plotly_chart(plot_norm_history(norms, columns), use_container_width=True)
    st.markdown(get_download_link(norms, "norms.csv", "Download norms"), unsafe_allow_html=True)

    switching = run["switching"]
    if switching is not None and len(switching) and summary.get("mode") != "free":
        st.subheader("Control")
        col1, col2 = st.columns(2)
        with col1:
            st.plotly_chart(plot_switching_pattern(switching), use_container_width=True)
        with col2:
            st.plotly_chart(plot_control_magnitude(switching), use_container_width=True)

    snapshots = run["snapshots"]
    if snapshots is not None and len(snapshots):
        st.subheader("State snapshots")
        times = sorted(snapshots["t"].unique())
        t = st.select_slider("Time:", options=times)
        points = None
        if run["config"] is not None:
            points = run["config"].get("actuator_points")
            count = run["config"].get("actuator_count")
            if points is None and count and summary.get("mode") != "free":
                points = default_placement(count)
        st.plotly_chart(plot_state_snapshot(snapshots, t, points), use_container_width=True)

    if run["windows"] is not None:
        with st.expander("Window diagnostics"):
            st.dataframe(run["windows"])


def show_compare_page():
    st.header("📊 Compare Runs")

    runs = list_runs(st.session_state.runs_root)
    if len(runs) < 2:
        st.warning("At least two runs are needed for a comparison.")
        return

    labels = [str(path) for path in runs]
    selected = st.multiselect("Select runs:", labels, default=labels[:2])
    if not selected:
        return

    table = compare_runs(selected)
    st.dataframe(table)
    st.markdown(get_download_link(table, "comparison.csv", "Download table"), unsafe_allow_html=True)

    histories = {label: load_run(label)["norms"] for label in selected}
    st.plotly_chart(plot_run_comparison(histories), use_container_width=True)


def show_launch_page():
    st.header("▶️ Launch Preset")

    st.write("""
    Run a benchmark preset on a short horizon. Full length runs take long;
    start them from the command line instead.
    """)

    col1, col2 = st.columns(2)
    with col1:
        name = st.selectbox("Preset:", sorted(PRESETS))
        n_cells = st.selectbox("Mesh cells per side:", [8, 16, 32], index=1)
    with col2:
        t_infinity = st.number_input("Final time:", min_value=0.25, max_value=10.0, value=1.0, step=0.25)
        max_iters = st.number_input("Optimizer iterations per window:", min_value=1, max_value=500, value=50)

    if st.button("Run"):
        try:
            config = preset_config(name, n_cells=int(n_cells), t_infinity=float(t_infinity))
            config = replace(config, optimizer=replace(config.optimizer, max_iters=int(max_iters)))
            out = os.path.join(st.session_state.runs_root, f"{name}_n{n_cells}_T{t_infinity:g}")
            with st.spinner("Running..."):
                artifacts = run_experiment(config, out)
            if artifacts.failed:
                st.error(f"Run failed; partial artifacts in {out}")
            else:
                st.success(f"Artifacts written to {out}")
        except Exception as e:
            st.error(f"Error running the preset: {str(e)}")


if __name__ == "__main__":
    main()
