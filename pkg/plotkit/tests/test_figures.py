"""Rendering acceptance: the exported-figure guarantees live here."""

import io
import os

import matplotlib

matplotlib.use("Agg")

import numpy as np
import pytest
from matplotlib.contour import ContourSet

from plotkit.cli import main
from plotkit.figures import plot_levelsets, plot_trajectories
from plotkit.files import (AxisMismatch, FileFormatError, load_grid,
                           load_trajectory)
from test_files import grid_text

DATA = os.path.join(os.path.dirname(__file__), "data")

TRAJ_FILES = ["stable.txt", "unstable_a.txt", "unstable_b.txt"]
VDP_FILES = [f"vdp_clique_{j}.txt" for j in range(1, 10)]


def zero_contour_vertices(ax):
    chunks = []
    for art in ax.get_children():
        if (isinstance(art, ContourSet) and not art.filled
                and len(art.levels) == 1 and float(art.levels[0]) == 0.0):
            for path in art.get_paths():
                if len(path.vertices):
                    chunks.append(path.vertices)
    if not chunks:
        return np.zeros((0, 2))
    return np.concatenate(chunks)


def filled_sets(ax):
    return [art for art in ax.get_children()
            if isinstance(art, ContourSet) and art.filled]


def render_bytes(fig):
    buf = io.BytesIO()
    fig.savefig(buf, format="png", dpi=120)
    return buf.getvalue()


def test_c10_three_trajectories_render():
    trajs = [load_trajectory(os.path.join(DATA, f)) for f in TRAJ_FILES]
    fig = plot_trajectories(trajs, var="x1")
    assert len(fig.axes) == 1
    labels = [t.get_text() for t in fig.axes[0].get_legend().get_texts()]
    assert len(labels) == 3
    assert sum("reached_target" in ln for ln in labels) == 1
    assert sum("left_state_box" in ln for ln in labels) == 2
    assert len(render_bytes(fig)) > 0


def test_c10_vdp_clique_panel_is_three_by_three():
    grids = [load_grid(os.path.join(DATA, f)) for f in VDP_FILES]
    assert [g.axes for g in grids] == [
        (f"x{2 * j - 1}", f"x{2 * j}") for j in range(1, 10)]
    fig = plot_levelsets(grids)
    # nine distinct-axes grids: one subplot per file, row-major 3x3
    assert len(fig.axes) == 9
    for ax, g in zip(fig.axes, grids):
        assert g.path.endswith(ax.get_title().split(" ")[0] + ".txt")
        assert ax.get_xlabel() == g.axes[0]
    assert len(render_bytes(fig)) > 0


def test_c10_analytic_circle_contour_within_one_cell(tmp_path):
    # margin of {x1^2 + x2^2 <= 0.25} on a 201x201 grid over [-1, 1]^2
    n = 201
    x = np.linspace(-1.0, 1.0, n)
    margin = 0.25 - x[:, None] ** 2 - x[None, :] ** 2
    p = tmp_path / "circle.txt"
    p.write_text(grid_text(("x1", "x2"), [(-1, 1, n), (-1, 1, n)], margin))
    g = load_grid(str(p))
    fig = plot_levelsets([g])
    verts = zero_contour_vertices(fig.axes[0])
    assert len(verts) > 0
    radii = np.hypot(verts[:, 0], verts[:, 1])
    cell = g.cell("x1")
    assert np.abs(radii - 0.5).max() <= cell


def test_trajectory_blowup_truncated_and_flat_zero(tmp_path):
    blow = tmp_path / "blow.txt"
    blow.write_text("# chainroa-trajectory/1\n# columns: time y\n"
                    "0.0 1.0\n0.1 5.0\n0.2 inf\n0.3 nan\n"
                    "# status: blowup\n")
    flat = tmp_path / "flat.txt"
    flat.write_text("# chainroa-trajectory/1\n# columns: time y\n"
                    "0.0 0.0\n0.1 0.0\n0.2 0.0\n"
                    "# status: reached_target\n")
    fig = plot_trajectories([load_trajectory(str(blow)),
                             load_trajectory(str(flat))])
    drawn = [ln for ln in fig.axes[0].get_lines()
             if str(ln.get_label()).endswith(")")]
    assert len(drawn) == 2
    # non-finite tail cut: only the two finite samples survive
    assert len(drawn[0].get_xdata()) == 2
    assert np.isfinite(drawn[0].get_ydata()).all()
    # constant trajectory renders as a flat line at zero
    assert np.array_equal(drawn[1].get_ydata(), [0.0, 0.0, 0.0])


def test_levelset_overlay_shares_axes_with_legend(tmp_path):
    n = 41
    x = np.linspace(-1.0, 1.0, n)
    inner = 0.09 - x[:, None] ** 2 - x[None, :] ** 2
    outer = 0.49 - x[:, None] ** 2 - x[None, :] ** 2
    pa = tmp_path / "inner.txt"
    pb = tmp_path / "outer.txt"
    pa.write_text(grid_text(("x1", "x2"), [(-1, 1, n), (-1, 1, n)], inner,
                            mode="sparse", degree=6))
    pb.write_text(grid_text(("x1", "x2"), [(-1, 1, n), (-1, 1, n)], outer,
                            mode="dense", degree=8))
    fig = plot_levelsets([load_grid(str(pa)), load_grid(str(pb))])
    assert len(fig.axes) == 1
    labels = [t.get_text() for t in fig.axes[0].get_legend().get_texts()]
    assert labels == ["inner (sparse d6)", "outer (dense d8)"]


def test_levelset_constant_positive_shades_whole_frame(tmp_path):
    n = 11
    p = tmp_path / "ones.txt"
    p.write_text(grid_text(("x1", "x2"), [(-1, 1, n), (-1, 1, n)],
                           np.ones((n, n))))
    fig = plot_levelsets([load_grid(str(p))])
    ax = fig.axes[0]
    assert len(zero_contour_vertices(ax)) == 0
    fills = filled_sets(ax)
    assert len(fills) == 1
    verts = np.concatenate([q.vertices for q in fills[0].get_paths()])
    # the filled band spans the full frame
    assert verts[:, 0].min() == -1.0 and verts[:, 0].max() == 1.0
    assert verts[:, 1].min() == -1.0 and verts[:, 1].max() == 1.0


def test_levelset_axis_count_mismatch_is_diagnosed(tmp_path):
    flat = tmp_path / "flat2.txt"
    flat.write_text(grid_text(("a", "b"), [(-1, 1, 3), (-1, 1, 3)],
                              np.zeros((3, 3))))
    vol = tmp_path / "vol3.txt"
    vol.write_text(grid_text(("a", "b", "c"),
                             [(-1, 1, 3)] * 3, np.zeros((3, 3, 3))))
    with pytest.raises(AxisMismatch, match="vol3"):
        plot_levelsets([load_grid(str(flat)), load_grid(str(vol))])


def test_three_axis_grid_renders_stacked_slices(tmp_path):
    n = 21
    x = np.linspace(-1.0, 1.0, n)
    margin = (0.25 - x[:, None, None] ** 2 - x[None, :, None] ** 2
              + 0.0 * x[None, None, :])
    p = tmp_path / "stack.txt"
    p.write_text(grid_text(("a", "b", "c"), [(-1, 1, n)] * 3, margin))
    fig = plot_levelsets([load_grid(str(p))])
    sets = [art for art in fig.axes[0].get_children()
            if isinstance(art, ContourSet) and not art.filled]
    assert len(sets) == n  # one zero contour per slice of the third axis


def test_rendering_is_deterministic():
    trajs = [load_trajectory(os.path.join(DATA, f)) for f in TRAJ_FILES]
    a = render_bytes(plot_trajectories(trajs, var="x2"))
    b = render_bytes(plot_trajectories(trajs, var="x2"))
    assert a == b


def test_cli_renders_and_diagnoses(tmp_path, capsys):
    out = tmp_path / "fig.png"
    rc = main(["trajectory", os.path.join(DATA, "stable.txt"),
               "--var", "x3", "--out", str(out)])
    assert rc == 0 and out.exists()
    bad = tmp_path / "bad.txt"
    bad.write_text("not a known file\n")
    rc = main(["levelset", str(bad), "--out", str(tmp_path / "no.png")])
    assert rc == 2
    assert "bad.txt" in capsys.readouterr().err
