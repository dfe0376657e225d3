"""SVG figures for solver outputs.

All figures go through :func:`save_svg`, which fixes the SVG id salt and
drops the creation date so that identical inputs give byte-identical files.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .laminate import LaminateConstruction, StudyResult  # noqa: E402
from .michell import TrussSolution, extract_limit_shape  # noqa: E402
from .mollify import MollifiedField  # noqa: E402

TENSION = "#c0392b"
COMPRESSION = "#2c5aa0"
IDLE = "#c8c8c8"


def save_svg(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with plt.rc_context({"svg.hashsalt": "vanishing-mass", "svg.fonttype": "path"}):
        fig.savefig(path, format="svg", metadata={"Date": None}, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_truss(sol: TrussSolution, path, *, max_width: float = 6.0) -> Path:
    """Bars drawn with width proportional to their mass share.

    Tension is red, compression blue; bars without force are thin grey.
    Loads are drawn as arrows at their nodes.
    """
    gs = sol.structure
    if gs.dim != 2:
        raise ValueError("truss plots are 2D only")
    shape = extract_limit_shape(sol)
    w = shape.mu_weights
    wmax = max(float(w.max()), 1e-300)
    fig, ax = plt.subplots(figsize=(5, 4))
    pos = gs.positions
    for bar, wi, qi in zip(gs.bars, w, sol.q):
        xy = pos[[bar.a, bar.b]]
        if wi <= 1e-12 * wmax:
            ax.plot(xy[:, 0], xy[:, 1], color=IDLE, lw=0.5, ls="--", zorder=1)
        else:
            ax.plot(xy[:, 0], xy[:, 1], color=TENSION if qi > 0 else COMPRESSION,
                    lw=0.8 + max_width * wi / wmax, solid_capstyle="round", zorder=2)
    ax.scatter(pos[:, 0], pos[:, 1], s=10, color="k", zorder=3)
    span = float(np.ptp(pos, axis=0).max()) or 1.0
    fmax = max((np.linalg.norm(v) for v in sol.loads.loads.values()), default=1.0)
    pts = [pos]
    for j, v in sol.loads.loads.items():
        v = np.asarray(v, dtype=float) * 0.25 * span / fmax
        ax.annotate("", xy=pos[j] + v, xytext=pos[j], annotation_clip=False,
                    arrowprops=dict(arrowstyle="->", color="k", lw=1.0), zorder=4)
        pts.append((pos[j] + v)[None])
    pts = np.concatenate(pts)
    pad = 0.08 * span
    ax.set_xlim(pts[:, 0].min() - pad, pts[:, 0].max() + pad)
    ax.set_ylim(pts[:, 1].min() - pad, pts[:, 1].max() + pad)
    ax.set_aspect("equal")
    for sp in ax.spines.values():
        sp.set_visible(False)
    ax.set_title(f"kappa = {sol.objective:.6g}")
    ax.set_xticks([])
    ax.set_yticks([])
    return save_svg(fig, path)


def plot_laminate(c: LaminateConstruction, path, *, n: int = 400, level: float = 0.5) -> Path:
    """Cross-section ``x_3 = level`` (3D) or the unit square (2D) colored by Venn region."""
    g = (np.arange(n) + 0.5) / n
    xx, yy = np.meshgrid(g, g, indexing="ij")
    pts = np.stack([xx, yy] + ([np.full_like(xx, level)] if c.dim == 3 else []), -1)
    code = np.zeros(xx.shape, dtype=int)
    for i, fam in enumerate(c.families):
        code |= fam.indicator(pts).astype(int) << i
    fig, ax = plt.subplots(figsize=(4, 4))
    cmap = plt.get_cmap("viridis", 2 ** len(c.families))
    ax.imshow(code.T, origin="lower", extent=(0, 1, 0, 1), cmap=cmap,
              vmin=-0.5, vmax=2 ** len(c.families) - 0.5, interpolation="nearest")
    ax.set_title(f"{c.case}, eps = {c.eps:g}, k = {c.periods}")
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    return save_svg(fig, path)


def plot_convergence(study: StudyResult, path) -> Path:
    """Energy error against ``eps`` on log axes, with the overlap bound."""
    eps = np.array([r.eps for r in study.rows])
    err = np.array([r.error for r in study.rows])
    bound = np.array([r.bound for r in study.rows])
    fig, ax = plt.subplots(figsize=(4.5, 3.5))
    if np.all(err > 0):
        ax.loglog(eps, err, "o-", label="|E_eps - E_0|")
        ax.loglog(eps, bound, "s--", label="bound", alpha=0.7)
    else:
        ax.semilogx(eps, err, "o-", label="|E_eps - E_0|")
    ax.set_xlabel("eps")
    ax.set_ylabel("error")
    title = f"alphas = {tuple(study.alphas)}"
    if study.slope is not None:
        title += f", slope {study.slope:.3f}"
    ax.set_title(title)
    ax.legend(frameon=False)
    return save_svg(fig, path)


def plot_mollified(f: MollifiedField, path, *, n: int = 201, extent: float = 1.1) -> Path:
    """Heatmap of ``|lambda^delta|`` (Frobenius) with the domain boundary."""
    g = np.linspace(-extent, extent, n)
    xx, yy = np.meshgrid(g, g, indexing="ij")
    vals = f(np.stack([xx, yy], -1).reshape(-1, 2))
    mag = np.sqrt(np.sum(vals.reshape(len(vals), -1) ** 2, axis=-1)).reshape(n, n)
    fig, ax = plt.subplots(figsize=(4.5, 4))
    im = ax.imshow(mag.T, origin="lower", extent=(-extent, extent, -extent, extent),
                   cmap="magma")
    th = np.linspace(0.0, 2.0 * np.pi, 361)
    ax.plot(np.cos(th), np.sin(th), color="w", lw=0.6)
    fig.colorbar(im, ax=ax, shrink=0.8)
    ax.set_title(f"delta = {f.delta:g}")
    ax.set_aspect("equal")
    return save_svg(fig, path)
