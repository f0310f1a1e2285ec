"""Figure builders. Pure functions of the parsed files: same inputs,
same pixels, so rendered output is reproducible run to run."""

import math
import os

import numpy as np

from plotkit.files import AxisMismatch


def _stem(path):
    return os.path.splitext(os.path.basename(path))[0]


def _grid_label(g):
    if g.degree >= 0:
        return f"{_stem(g.path)} ({g.mode} d{g.degree})"
    return _stem(g.path)


def plot_trajectories(trajs, var=None):
    """One time-series curve per file; non-finite tails are cut off."""
    import matplotlib.pyplot as plt

    if not trajs:
        raise ValueError("no trajectory files")
    if var is None:
        var = trajs[0].columns[1]
    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    for tr in trajs:
        y = tr.state(var)
        finite = np.isfinite(tr.times) & np.isfinite(y)
        # blown-up runs end with non-finite samples; keep the finite prefix
        last = len(y) if finite.all() else int(np.argmin(finite))
        ax.plot(tr.times[:last], y[:last],
                label=f"{_stem(tr.path)} ({tr.status})")
    ax.set_xlabel("t")
    ax.set_ylabel(var)
    ax.axhline(0.0, color="0.8", lw=0.8, zorder=0)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    return fig


def _draw_levelset(ax, g, color):
    import matplotlib.pyplot as plt

    if len(g.axes) == 1:
        x = g.axis_values(g.axes[0])
        ax.plot(x, g.margins, color=color)
        ax.axhline(0.0, color="0.6", lw=0.8)
        ax.set_xlabel(g.axes[0])
        ax.set_ylabel("margin")
        return
    a0 = g.axis_values(g.axes[0])
    a1 = g.axis_values(g.axes[1])
    X, Y = np.meshgrid(a0, a1, indexing="ij")
    if len(g.axes) == 2:
        Z = g.margins
        if float(Z.max()) >= 0.0:
            upper = max(float(Z.max()), 1e-30)
            ax.contourf(X, Y, Z, levels=[0.0, upper], colors=[color],
                        alpha=0.25)
        ax.contour(X, Y, Z, levels=[0.0], colors=[color], linewidths=1.5)
    else:
        # stacked slices: one zero contour per value of the third axis
        vals = g.axis_values(g.axes[2])
        cmap = plt.get_cmap("viridis")
        for k in range(len(vals)):
            col = cmap(k / max(len(vals) - 1, 1))
            ax.contour(X, Y, g.margins[:, :, k], levels=[0.0],
                       colors=[col], linewidths=1.0)
    ax.set_xlabel(g.axes[0])
    ax.set_ylabel(g.axes[1])


def plot_levelsets(grids):
    """Zero-margin contours: overlaid when every file shares the same
    axes, otherwise one subplot per file, row-major."""
    import matplotlib.lines as mlines
    import matplotlib.pyplot as plt

    if not grids:
        raise ValueError("no grid files")
    dims = sorted({len(g.axes) for g in grids})
    if len(dims) > 1:
        raise AxisMismatch(
            f"cannot overlay grids with {dims} free axes in one figure: "
            + ", ".join(f"{g.path} {g.axes}" for g in grids))
    shared = all(g.axes == grids[0].axes for g in grids)
    cycle = plt.rcParams["axes.prop_cycle"].by_key()["color"]
    if shared:
        fig, ax = plt.subplots(figsize=(6.0, 5.0))
        handles = []
        for i, g in enumerate(grids):
            color = cycle[i % len(cycle)]
            _draw_levelset(ax, g, color)
            handles.append(mlines.Line2D([], [], color=color,
                                         label=_grid_label(g)))
        ax.legend(handles=handles, loc="upper right", fontsize=8)
    else:
        ncols = math.ceil(math.sqrt(len(grids)))
        nrows = math.ceil(len(grids) / ncols)
        fig, axes = plt.subplots(nrows, ncols,
                                 figsize=(3.2 * ncols, 2.8 * nrows),
                                 squeeze=False)
        flat = axes.reshape(-1)
        for i, g in enumerate(grids):
            _draw_levelset(flat[i], g, cycle[i % len(cycle)])
            flat[i].set_title(_grid_label(g), fontsize=8)
        for ax in flat[len(grids):]:
            ax.set_axis_off()
    fig.tight_layout()
    return fig
