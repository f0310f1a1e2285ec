"""plot: render exported trajectory and grid files to PNG."""

import argparse
import sys


def build_parser():
    ap = argparse.ArgumentParser(
        prog="plot",
        description="Figures from exported ROA trajectory and grid files")
    sub = ap.add_subparsers(dest="cmd", required=True)

    tp = sub.add_parser("trajectory", help="time series from trajectory files")
    tp.add_argument("files", nargs="+", help="chainroa-trajectory/1 files")
    tp.add_argument("--var", default=None,
                    help="state column to plot (default: first state)")
    tp.add_argument("--out", default="trajectory.png", help="output PNG")
    tp.add_argument("--dpi", type=int, default=150)

    lp = sub.add_parser("levelset", help="zero-margin contours from grids")
    lp.add_argument("files", nargs="+", help="chainroa-grid/1 files")
    lp.add_argument("--out", default="levelset.png", help="output PNG")
    lp.add_argument("--dpi", type=int, default=150)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    import matplotlib
    matplotlib.use("Agg")
    from plotkit.figures import plot_levelsets, plot_trajectories
    from plotkit.files import (AxisMismatch, FileFormatError, load_grid,
                               load_trajectory)
    try:
        if args.cmd == "trajectory":
            fig = plot_trajectories([load_trajectory(f) for f in args.files],
                                    var=args.var)
        else:
            fig = plot_levelsets([load_grid(f) for f in args.files])
    except (FileFormatError, AxisMismatch) as exc:
        print(f"plot: {exc}", file=sys.stderr)
        return 2
    fig.savefig(args.out, dpi=args.dpi)
    print(args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
