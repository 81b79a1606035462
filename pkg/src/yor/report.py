"""Metrics serialization and report figures.

The metrics file is tab-separated text: `key<TAB>value` lines followed by
one `loop` row per tally loop. All values except wall_time_s are pure
functions of (scenario, seed, config), so two runs with identical inputs
produce identical bytes once wall_time_s lines are dropped.
"""

from __future__ import annotations

from pathlib import Path

from .scenarios import MetricsReport

METRICS_VERSION = 1


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, bool):
        return "1" if v else "0"
    return str(v)


def metrics_lines(report: MetricsReport) -> list[str]:
    lines = [f"metrics_version\t{METRICS_VERSION}"]
    lines.append(f"scenario\t{report.scenario}")
    lines.append(f"seed\t{report.seed}")
    lines.append(f"success\t{_fmt(report.success)}")
    lines.append(f"sim_time_s\t{_fmt(report.sim_time)}")
    lines.append(f"collisions\t{report.collision_count}")
    if report.scatter_radius is not None:
        lines.append(f"scatter_radius_m\t{_fmt(report.scatter_radius)}")
    if report.max_ee_deviation is not None:
        lines.append(f"max_ee_deviation_m\t{_fmt(report.max_ee_deviation)}")
    if report.replan_count:
        lines.append(f"replan_count\t{report.replan_count}")
    if report.replan_latency is not None:
        lines.append(f"replan_latency_s\t{_fmt(report.replan_latency)}")
    if report.plan_compute_max is not None:
        # wall-clock measurement, excluded from determinism comparisons
        lines.append(f"wall_time_plan_max_s\t{_fmt(report.plan_compute_max)}")
    if report.goal_reached is not None:
        lines.append(f"goal_reached\t{_fmt(report.goal_reached)}")
    if report.no_path:
        lines.append("no_path\t1")
    for rec in report.loops:
        lines.append(
            "loop\t{}\t{}\t{}\t{}\t{}".format(
                rec.index, _fmt(rec.dx), _fmt(rec.dz), _fmt(rec.yaw_error),
                "1" if rec.ok else "0",
            )
        )
    for note in report.notes:
        lines.append(f"note\t{note}")
    lines.append(f"wall_time_s\t{_fmt(report.wall_time)}")
    return lines


def write_metrics(report: MetricsReport, path: str | Path) -> None:
    Path(path).write_text("\n".join(metrics_lines(report)) + "\n", encoding="utf-8")


def strip_wall_time(text: str) -> str:
    """Drop wall-clock lines so byte comparison checks sim-time determinism."""
    return "\n".join(
        l for l in text.splitlines() if not l.startswith(("wall_time", "note"))
    )


# --- figures -----------------------------------------------------------------


def render_figures(report: MetricsReport, out_dir: str | Path) -> list[Path]:
    """Render the scenario's summary figures as PNG files; returns paths."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    if report.scenario == "tally" and report.marks:
        fig, ax = plt.subplots(figsize=(5, 5))
        mx0, mz0 = report.marks[0]
        xs = [(x - mx0) * 1000.0 for x, _ in report.marks[1:]]
        zs = [(z - mz0) * 1000.0 for _, z in report.marks[1:]]
        ax.scatter(xs, zs, c="tab:blue", s=25, label="return marks")
        ax.scatter([0.0], [0.0], c="k", marker="+", s=80, label="initial mark")
        circle = plt.Circle((0, 0), 12.0, fill=False, color="tab:red", ls="--",
                            label="12 mm radius")
        ax.add_patch(circle)
        lim = max(15.0, *(abs(v) for v in xs + zs + [1.0])) * 1.2
        ax.set_xlim(-lim, lim)
        ax.set_ylim(-lim, lim)
        ax.set_aspect("equal")
        ax.set_xlabel("dx (mm)")
        ax.set_ylabel("dz (mm)")
        ax.set_title(f"mark scatter, seed {report.seed}")
        ax.legend(loc="upper right", fontsize=8)
        p = out / "tally_scatter.png"
        fig.savefig(p, dpi=120, bbox_inches="tight")
        plt.close(fig)
        written.append(p)

    if report.scenario == "wholebody" and report.deviation_trace:
        fig, ax = plt.subplots(figsize=(6, 3))
        ts = [t for t, _ in report.deviation_trace]
        ds = [d * 1000.0 for _, d in report.deviation_trace]
        ax.plot(ts, ds, lw=1.0)
        ax.axhline(16.0, color="tab:red", ls="--", lw=0.8, label="16 mm")
        ax.set_xlabel("sim time (s)")
        ax.set_ylabel("EE deviation (mm)")
        ax.set_title(f"world-frame EE hold, seed {report.seed}")
        ax.legend(fontsize=8)
        p = out / "wholebody_deviation.png"
        fig.savefig(p, dpi=120, bbox_inches="tight")
        plt.close(fig)
        written.append(p)

    if report.scenario in ("obstacle", "freeplay") and report.trajectory:
        fig, ax = plt.subplots(figsize=(5, 5))
        xs = [x for x, _ in report.trajectory]
        zs = [z for _, z in report.trajectory]
        ax.plot(xs, zs, lw=1.2, label="trajectory")
        ax.scatter([xs[0]], [zs[0]], marker="o", c="tab:green", label="start")
        ax.scatter([xs[-1]], [zs[-1]], marker="*", c="tab:red", s=80, label="end")
        ax.set_aspect("equal")
        ax.set_xlabel("x (m)")
        ax.set_ylabel("z (m)")
        title = f"{report.scenario}, seed {report.seed}"
        if report.replan_count:
            title += f" ({report.replan_count} replans)"
        ax.set_title(title)
        ax.legend(fontsize=8)
        p = out / f"{report.scenario}_trajectory.png"
        fig.savefig(p, dpi=120, bbox_inches="tight")
        plt.close(fig)
        written.append(p)

    return written
