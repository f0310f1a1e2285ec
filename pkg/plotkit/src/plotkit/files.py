"""Readers for the two text formats the solver toolkit exports.

Parsing is reimplemented here on purpose: this package must work from
the files alone, with no import of their producer.
"""

from dataclasses import dataclass, field

import numpy as np

TRAJECTORY_MAGIC = "# chainroa-trajectory/1"
GRID_MAGIC = "# chainroa-grid/1"


class FileFormatError(ValueError):
    """Malformed input file; the message names the file and the reason."""


class AxisMismatch(ValueError):
    """Grids passed to one figure do not share a compatible axis layout."""


@dataclass
class TrajectoryFile:
    path: str
    columns: tuple        # ("time", state names...)
    times: np.ndarray
    states: np.ndarray    # (n_samples, n_states)
    status: str

    def state(self, name: str) -> np.ndarray:
        try:
            idx = self.columns.index(name)
        except ValueError:
            raise FileFormatError(
                f"{self.path}: no column {name!r}, have {self.columns}")
        if idx == 0:
            raise FileFormatError(f"{self.path}: {name!r} is the time column")
        return self.states[:, idx - 1]


@dataclass
class GridFile:
    path: str
    mode: str
    degree: int
    axes: tuple           # free axis names, first is the slowest row index
    ranges: dict          # name -> (lo, hi, resolution)
    slices: dict = field(default_factory=dict)
    margins: np.ndarray = None   # shaped (res_0, ..., res_{k-1})

    def axis_values(self, name: str) -> np.ndarray:
        lo, hi, r = self.ranges[name]
        return np.linspace(lo, hi, r)

    def cell(self, name: str) -> float:
        lo, hi, r = self.ranges[name]
        return (hi - lo) / (r - 1)


def _fail(path, reason):
    raise FileFormatError(f"{path}: {reason}")


def load_trajectory(path: str) -> TrajectoryFile:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != TRAJECTORY_MAGIC:
        _fail(path, f"missing {TRAJECTORY_MAGIC!r} header")
    columns = None
    status = None
    rows = []
    for ln in lines[1:]:
        if ln.startswith("# columns: "):
            columns = tuple(ln.split(": ", 1)[1].split())
        elif ln.startswith("# status: "):
            status = ln.split(": ", 1)[1].strip()
        elif ln.startswith("#") or not ln.strip():
            continue
        else:
            try:
                rows.append([float(v) for v in ln.split()])
            except ValueError:
                _fail(path, f"non-numeric sample line {ln!r}")
    if columns is None or columns[:1] != ("time",):
        _fail(path, "missing '# columns: time ...' line")
    if status is None:
        _fail(path, "missing '# status: ...' footer")
    if not rows:
        _fail(path, "no samples")
    data = np.array(rows, dtype=float)
    if data.shape[1] != len(columns):
        _fail(path, f"{data.shape[1]} values per row, "
                    f"{len(columns)} columns declared")
    return TrajectoryFile(path, columns, data[:, 0], data[:, 1:], status)


def load_grid(path: str) -> GridFile:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != GRID_MAGIC:
        _fail(path, f"missing {GRID_MAGIC!r} header")
    mode = degree = None
    axes = ()
    ranges = {}
    slices = {}
    rows = []
    for ln in lines[1:]:
        if ln.startswith("# mode: "):
            mode = ln.split(": ", 1)[1].strip()
        elif ln.startswith("# degree: "):
            degree = int(ln.split(": ", 1)[1])
        elif ln.startswith("# axes: "):
            axes = tuple(ln.split(": ", 1)[1].split())
        elif ln.startswith("# axis: "):
            parts = ln.split(": ", 1)[1].split()
            if len(parts) != 4:
                _fail(path, f"bad axis line {ln!r}")
            ranges[parts[0]] = (float(parts[1]), float(parts[2]),
                                int(parts[3]))
        elif ln.startswith("# slice: "):
            name, val = ln.split(": ", 1)[1].split()
            slices[name] = float(val)
        elif ln.startswith("#") or not ln.strip():
            continue
        else:
            try:
                rows.append([float(v) for v in ln.split()])
            except ValueError:
                _fail(path, f"non-numeric grid line {ln!r}")
    if not axes:
        _fail(path, "missing '# axes: ...' line")
    if set(axes) != set(ranges):
        _fail(path, f"axes {axes} do not match axis lines {tuple(ranges)}")
    shape = tuple(ranges[a][2] for a in axes)
    want = int(np.prod(shape))
    data = np.array(rows, dtype=float)
    if data.shape != (want, len(axes) + 1):
        _fail(path, f"grid data shape {data.shape}, expected "
                    f"({want}, {len(axes) + 1})")
    # rows are C ordered, first axis slowest
    margins = data[:, -1].reshape(shape)
    return GridFile(path, mode or "?", -1 if degree is None else degree,
                    axes, ranges, slices, margins)
