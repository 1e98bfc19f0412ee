from pathlib import Path

import streamlit as st

from backend.config import Config
from backend.services.report_service import (
    checks_frame,
    latency_frame,
    list_runs,
    load_run,
    notarization_frame,
    timing_frame,
)

# =========================================================
# PAGE CONFIG
# =========================================================
st.set_page_config(
    page_title="Threshold Relay Runs",
    page_icon="🔗",
    layout="wide"
)

# =========================================================
# RUN SELECTION
# =========================================================
st.title("🔗 Threshold Relay Simulator")
st.caption("Round timing, notarizations, finality and the theorem report of stored runs")

base_dir = st.sidebar.text_input("Runs directory", str(Config.OUTPUT_DIR))
runs = list_runs(base_dir)
if not runs:
    st.warning(f"⚠️ No runs found in {base_dir}. Create one with: python -m backend.cli run --scenario FILE")
    st.stop()

run_id = st.sidebar.selectbox("Run", runs)


@st.cache_data
def load(path: str):
    return load_run(path)


data = load(str(Path(base_dir) / run_id))
metrics, report = data["metrics"], data["report"]
summary = metrics.summary

st.divider()

# =========================================================
# SUMMARY
# =========================================================
col1, col2, col3, col4 = st.columns(4)
col1.metric("Scenario", summary["name"])
col2.metric("Rounds completed", summary["min_honest_round"] - 1)
col3.metric("Byzantine replicas", len(summary["byzantine"]))
if report:
    col4.metric("Safety", "✅ passed" if report["safety_passed"] else "❌ failed")

# =========================================================
# CHARTS
# =========================================================
st.subheader("⏱️ Round entry times")
timing = timing_frame(metrics)
st.line_chart(timing[["entered_first", "entered_last", "beacon_first"]])

st.subheader("📏 Round duration")
st.bar_chart(timing["duration"].dropna())

st.subheader("🧾 Notarized blocks per round")
st.bar_chart(notarization_frame(metrics))

latency = latency_frame(metrics)
if not latency.empty:
    st.subheader("🔒 Finalization latency after first notarization")
    st.line_chart(latency.pivot_table(index="round", columns="observer", values="latency"))

# =========================================================
# THEOREM REPORT
# =========================================================
st.subheader("📋 Theorem report")
if report:
    st.dataframe(checks_frame(report), use_container_width=True)
else:
    st.info("No report.json in this run; run `python -m backend.cli check --metrics DIR`")

with st.expander("Observers"):
    st.json(summary.get("observers", {}))
