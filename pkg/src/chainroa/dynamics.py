"""Numerical integration of chain systems and trajectory classification.

Fixed-step RK4 keeps classifications reproducible across platforms;
adaptive stepping would trade that away for speed we do not need.  A
trajectory is classified by what happens first: it leaves the state
box, a coordinate exceeds the blowup threshold (or goes non-finite),
or it survives to the horizon, where landing in the target box decides
between reached_target and horizon_in_X_missed_target.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .poly import StructureError
from .system import ChainSystem

TRAJECTORY_FORMAT = "chainroa-trajectory/1"

# normalized coordinates; only needs to separate escape from convergence
BLOWUP_LIMIT = 1.0e6
DEFAULT_STEPS = 10_000

STATUSES = ("reached_target", "left_state_box", "blowup",
            "horizon_in_X_missed_target")


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    status: str

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]


class CompiledDynamics:
    """Batched vector-field evaluator with precomputed exponent tables.

    All monomials of all coordinate polynomials are stacked into one
    exponent matrix; a scatter matrix with the coefficients folded in
    turns the monomial values into the derivative vector, so one call
    costs a single power-product plus a matmul.
    """

    def __init__(self, sys: ChainSystem):
        self.dim = sys.dim
        tables = [f.exponent_arrays() for f in sys.flat_dynamics()]
        self._E = np.concatenate([E for E, _ in tables], axis=0)
        n_terms = self._E.shape[0]
        self._S = np.zeros((n_terms, self.dim))
        row = 0
        for i, (_, C) in enumerate(tables):
            self._S[row:row + len(C), i] = C
            row += len(C)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        # overflow past the blowup limit is expected and handled by the caller;
        # the reduction is per-row elementwise (not a BLAS matmul) so results
        # are bit-identical whether a state is integrated alone or in a batch
        with np.errstate(over="ignore", invalid="ignore"):
            mono = (x[:, None, :] ** self._E[None, :, :]).prod(axis=2)
            return (mono[:, :, None] * self._S[None, :, :]).sum(axis=1)


def _rk4_step(f, x, h):
    k1 = f(x)
    k2 = f(x + (0.5 * h) * k1)
    k3 = f(x + (0.5 * h) * k2)
    k4 = f(x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)


def _step_sizes(horizon: float, h: float) -> np.ndarray:
    if h <= 0:
        raise StructureError("step size must be positive")
    n = int(np.floor(horizon / h + 1e-9))
    sizes = np.full(max(n, 0), h)
    rem = horizon - n * h
    if rem > 1e-12 * max(horizon, 1.0):
        sizes = np.append(sizes, rem)
    return sizes


def _bad_rows(x: np.ndarray) -> np.ndarray:
    finite = np.isfinite(x).all(axis=1)
    big = np.zeros(len(x), dtype=bool)
    big[finite] = np.abs(x[finite]).max(axis=1) > BLOWUP_LIMIT
    return ~finite | big


def integrate(sys: ChainSystem, x0, h: float | None = None) -> Trajectory:
    """Integrate one initial condition; all failure modes are statuses."""
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (sys.dim,):
        raise StructureError(f"initial state of dim {x0.size}, system dim {sys.dim}")
    if h is None:
        h = sys.horizon / DEFAULT_STEPS
    sizes = _step_sizes(sys.horizon, h)
    times = np.concatenate([[0.0], np.cumsum(sizes)])
    # the sizes cover [0, T] by construction; snap away cumsum drift
    times[-1] = sys.horizon

    rows = [x0.copy()]
    if not sys.state_box.contains(x0):
        return Trajectory(times[:1], np.array(rows), "left_state_box")

    f = CompiledDynamics(sys)
    x = x0[None, :]
    for k, hk in enumerate(sizes):
        x = _rk4_step(f, x, hk)
        rows.append(x[0].copy())
        if _bad_rows(x)[0]:
            return Trajectory(times[:k + 2], np.array(rows), "blowup")
        if not sys.state_box.contains(x[0]):
            return Trajectory(times[:k + 2], np.array(rows), "left_state_box")
    status = ("reached_target" if sys.target_box.contains(rows[-1])
              else "horizon_in_X_missed_target")
    return Trajectory(times, np.array(rows), status)


def classify_many(sys: ChainSystem, points, h: float | None = None):
    """(statuses, terminal states) for a batch, without storing paths.

    Same stepping and classification as integrate; rows that terminate
    drop out of the active set so the rest of the batch keeps moving.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != sys.dim:
        raise StructureError(f"points have dim {pts.shape[1]}, system dim {sys.dim}")
    if h is None:
        h = sys.horizon / DEFAULT_STEPS
    sizes = _step_sizes(sys.horizon, h)

    status = np.full(pts.shape[0], "", dtype=object)
    terminal = pts.copy()
    inside0 = sys.state_box.contains(pts)
    status[~inside0] = "left_state_box"
    idx = np.flatnonzero(inside0)
    x = pts[idx]

    f = CompiledDynamics(sys)
    for hk in sizes:
        if not len(idx):
            break
        x = _rk4_step(f, x, hk)
        bad = _bad_rows(x)
        left = ~bad & ~sys.state_box.contains(x)
        done = bad | left
        if done.any():
            rows = idx[done]
            terminal[rows] = x[done]
            status[rows] = np.where(bad[done], "blowup", "left_state_box")
            x, idx = x[~done], idx[~done]
    if len(idx):
        terminal[idx] = x
        reached = sys.target_box.contains(x)
        status[idx] = np.where(reached, "reached_target",
                               "horizon_in_X_missed_target")
    return list(status), terminal


def in_roa(sys: ChainSystem, x0, h: float | None = None) -> bool:
    """True iff the trajectory stays in X and lands in the target box.

    The region-of-attraction definition constrains the whole trajectory
    to X, so an initial state outside X is a domain error rather than
    silently out-of-ROA.
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (sys.dim,):
        raise StructureError(f"initial state of dim {x0.size}, system dim {sys.dim}")
    if not sys.state_box.contains(x0):
        raise StructureError("initial state outside the state box")
    return integrate(sys, x0, h).status == "reached_target"


# -- tabular export --------------------------------------------------------


def save_trajectory(traj: Trajectory, var_names, path: str):
    """Tabular text: time column + state columns, status footer."""
    with open(path, "w") as fh:
        fh.write(f"# {TRAJECTORY_FORMAT}\n")
        fh.write("# columns: time " + " ".join(var_names) + "\n")
        for t, row in zip(traj.times, traj.states):
            fh.write(" ".join(repr(float(v)) for v in (t, *row)) + "\n")
        fh.write(f"# status: {traj.status}\n")


def load_trajectory(path: str):
    """Inverse of save_trajectory; returns (Trajectory, var_names)."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != f"# {TRAJECTORY_FORMAT}":
        raise StructureError(f"not a {TRAJECTORY_FORMAT} file: {path}")
    if len(lines) < 3 or not lines[1].startswith("# columns: time"):
        raise StructureError(f"missing columns header in {path}")
    var_names = tuple(lines[1].split()[3:])
    footer = lines[-1]
    if not footer.startswith("# status: "):
        raise StructureError(f"missing status footer in {path}")
    status = footer[len("# status: "):]
    if status not in STATUSES:
        raise StructureError(f"unknown trajectory status {status!r}")
    data = np.array([[float(v) for v in ln.split()] for ln in lines[2:-1]])
    if data.ndim != 2 or data.shape[1] != len(var_names) + 1:
        raise StructureError(f"bad row width in {path}")
    return Trajectory(data[:, 0], data[:, 1:], status), var_names
