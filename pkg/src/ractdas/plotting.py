"""Figure rendering for bench and trace output. Files only, no GUI backend."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .simworld import EventTrace  # noqa: E402


def render_aloha_figure(first_round_successes: list[int], expected: float,
                        path: str | Path):
    """Histogram of first-round reads across trials vs the analytic mean."""
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.hist(first_round_successes,
            bins=range(0, max(first_round_successes) + 2), align="left",
            color="#4878a8", edgecolor="white")
    ax.axvline(expected, color="#c44e52", linestyle="--",
               label=f"analytic mean = {expected:.2f}")
    ax.set_xlabel("tags read in round 1")
    ax.set_ylabel("trials")
    ax.set_title("Slotted Aloha first-round throughput")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_tree_figure(sizes: list[int], queries: list[int], path: str | Path):
    """Probe count vs field size for the prefix-tree walk."""
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.scatter(sizes, queries, s=12, alpha=0.6, color="#4878a8")
    ax.set_xlabel("tags in field")
    ax.set_ylabel("prefix probes")
    ax.set_title("Binary tree singulation query cost")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_trace_figure(trace: EventTrace, path: str | Path):
    """Per-vehicle timeline of stops/resumes/exits plus gate events."""
    fig, ax = plt.subplots(figsize=(9, 5))
    vehicles = sorted({r.payload["vehicle"] for r in trace
                       if "vehicle" in r.payload})
    lane = {v: i for i, v in enumerate(vehicles)}
    markers = {"vehicle_stop": ("v", "#c44e52"),
               "vehicle_resume": ("^", "#55a868"),
               "vehicle_exit": ("s", "#4878a8"),
               "zone_enter": ("o", "#8172b2")}
    for kind, (marker, color) in markers.items():
        records = trace.by_kind(kind)
        if records:
            ax.scatter([r.t for r in records],
                       [lane[r.payload["vehicle"]] for r in records],
                       marker=marker, color=color, label=kind, s=30)
    for r in trace.by_kind("gate_close"):
        ax.axvline(r.t, color="#c44e52", alpha=0.3)
    for r in trace.by_kind("gate_open"):
        ax.axvline(r.t, color="#55a868", alpha=0.3)
    ax.set_yticks(range(len(vehicles)))
    ax.set_yticklabels(vehicles)
    ax.set_xlabel("simulated time (s)")
    ax.set_title("Scenario timeline")
    if vehicles:
        ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
