"""Figure rendering for study reports.

Every study's delimited output can be accompanied by matplotlib figures;
rendering is file-based (Agg backend) and never required for the numeric
results.
"""

from __future__ import annotations

import os

import numpy as np

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

from . import geometry as geo


def _save(fig, outdir, name):
    path = os.path.join(outdir, name)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_decay(series, outdir, name="decay.png", title="refinement decay"):
    """Log-log decay plot: series = {label: [(r, value), ...]}."""
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for label, pts in series.items():
        pts = [(r, v) for r, v in pts if v > 0]
        if not pts:
            continue
        r = np.array([p[0] for p in pts])
        v = np.array([p[1] for p in pts])
        ax.loglog(r, v, "o-", label=label)
        if len(pts) >= 2:
            slope = np.polyfit(np.log(r), np.log(v), 1)[0]
            ax.annotate(f"slope {slope:.2f}", (r[-1], v[-1]), fontsize=8,
                        textcoords="offset points", xytext=(5, -10))
    ax.set_xlabel("mesh size r")
    ax.set_ylabel("defect")
    ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    return _save(fig, outdir, name)


def plot_flow_history(energy, tension, outdir, name="flow.png"):
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    ax1.plot(energy)
    ax1.set_xlabel("iteration")
    ax1.set_ylabel("discrete energy")
    ax1.grid(alpha=0.3)
    ax2.semilogy(tension)
    ax2.set_xlabel("iteration")
    ax2.set_ylabel("tension L2 norm")
    ax2.grid(alpha=0.3)
    fig.suptitle("discrete heat flow")
    return _save(fig, outdir, name)


def plot_disk_mesh(mesh, outdir, name="mesh.png", values=None, group=None):
    """Poincare-disk rendering of a hyperbolic mesh (edges as segments)."""
    fig, ax = plt.subplots(figsize=(6, 6))
    circle = plt.Circle((0, 0), 1.0, fill=False, color="black", lw=1.0)
    ax.add_patch(circle)
    ends = mesh.edge_endpoints
    a = geo.to_disk(ends[:, 0])
    b = geo.to_disk(ends[:, 1])
    segs = np.stack([a, b], axis=1)
    from matplotlib.collections import LineCollection
    ax.add_collection(LineCollection(segs, colors="steelblue", lw=0.5))
    if values is not None:
        pts = geo.to_disk(mesh.vertices)
        sc = ax.scatter(pts[:, 0], pts[:, 1], c=values, s=6, cmap="viridis")
        fig.colorbar(sc, ax=ax, shrink=0.8)
    if group is not None:
        for ch in "abcd":
            try:
                p, u, _ = geo.axis_of(group.matrix(ch))
                ts = np.linspace(-3, 3, 60)
                pts = np.array([geo.exp_map(geo.HYPERBOLIC, p, t * u) for t in ts])
                d = geo.to_disk(pts)
                ax.plot(d[:, 0], d[:, 1], color="crimson", lw=0.8, alpha=0.7)
            except Exception:
                pass
    ax.set_xlim(-1.05, 1.05)
    ax.set_ylim(-1.05, 1.05)
    ax.set_aspect("equal")
    ax.axis("off")
    return _save(fig, outdir, name)


def render_study(result, outdir):
    """Figures for a StudyResult; returns the list of written paths."""
    written = []
    cols = result.columns
    if result.kind == "flat_convergence":
        idx_r = cols.index("r")
        series = {}
        for key in ("energy_gap", "tension_defect", "density_defect",
                    "measure_defect"):
            idx = cols.index(key)
            series[key] = [(row[idx_r], row[idx]) for row in result.rows]
        written.append(plot_decay(series, outdir, "flat_convergence.png",
                                  "flat torus convergence"))
    elif result.kind == "defect_table":
        by_key = {}
        for level, r, klass, order, vmax, vrms in result.rows:
            by_key.setdefault(f"V{klass} order {order} (sup)", []).append((r, vmax))
            by_key.setdefault(f"V{klass} order {order} (rms)", []).append((r, vrms))
        sup = {k: v for k, v in by_key.items() if "sup" in k}
        rms = {k: v for k, v in by_key.items() if "rms" in k}
        written.append(plot_decay(sup, outdir, "defect_sup.png",
                                  "Laplacian defects (sup)"))
        written.append(plot_decay(rms, outdir, "defect_rms.png",
                                  "Laplacian defects (mass-weighted rms)"))
    elif result.kind == "hyperbolic_flow":
        cauchy = result.extras.get("cauchy", [])
        if cauchy:
            rs = [row[1] for row in result.rows[:len(cauchy)]]
            written.append(plot_decay(
                {"d(v_n, v_{n+1})": list(zip(rs, cauchy))}, outdir,
                "cauchy.png", "Cauchy distances of minimizers"))
    elif result.kind == "cfl_double_limit":
        rs = [row[1] for row in result.rows]
        ds = [row[3] for row in result.rows]
        written.append(plot_decay({"distance to reference": list(zip(rs, ds))},
                                  outdir, "cfl.png", "CFL double limit"))
    return written
