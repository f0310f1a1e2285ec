"""Chain-sparse polynomial ODE systems.

A system is an ordered list of state blocks with per-block state and
target boxes, block dynamics whose variables may only touch the block
itself and its successor (the chain pattern), and a finite horizon.
Includes the two benchmark systems and the normalization that maps
state boxes to [-1,1]^n and time to [0,1] for SDP conditioning.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .poly import AffineMap, Box, Polynomial, StructureError, parse_poly


@dataclass(frozen=True)
class Block:
    name: str
    var_names: tuple
    box: Box
    target: Box

    def __post_init__(self):
        object.__setattr__(self, "var_names", tuple(self.var_names))
        d = len(self.var_names)
        if self.box.dim != d or self.target.dim != d:
            raise StructureError(f"block {self.name}: box dims do not match vars")
        if not self.box.contains_box(self.target):
            raise StructureError(f"block {self.name}: target box not inside state box")

    @property
    def dim(self) -> int:
        return len(self.var_names)


@dataclass(frozen=True)
class Clique:
    """Consecutive block pair Y_j = X_j x X_{j+1}; j is 1-based."""

    index: int
    var_names: tuple
    var_indices: tuple
    box: Box
    target: Box

    @property
    def dim(self) -> int:
        return len(self.var_names)


class ChainSystem:
    """Polynomial ODE split into blocks with chain-limited coupling."""

    def __init__(self, blocks, dynamics, horizon):
        self.blocks = tuple(blocks)
        self.dynamics = tuple(tuple(fs) for fs in dynamics)
        self.horizon = float(horizon)
        if self.horizon <= 0:
            raise StructureError("horizon must be positive")
        if len(self.dynamics) != len(self.blocks):
            raise StructureError("one dynamics vector per block required")
        names = [v for b in self.blocks for v in b.var_names]
        if len(set(names)) != len(names):
            raise StructureError("duplicate variable names across blocks")
        self.var_names = tuple(names)
        for b, fs in zip(self.blocks, self.dynamics):
            if len(fs) != b.dim:
                raise StructureError(
                    f"block {b.name}: {len(fs)} equations for {b.dim} coordinates")
            for f in fs:
                if f.vars != self.var_names:
                    raise StructureError(
                        f"dynamics of block {b.name} not over the global variable list")

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    @property
    def dim(self) -> int:
        return len(self.var_names)

    @property
    def state_box(self) -> Box:
        b = self.blocks[0].box
        for blk in self.blocks[1:]:
            b = b.concat(blk.box)
        return b

    @property
    def target_box(self) -> Box:
        b = self.blocks[0].target
        for blk in self.blocks[1:]:
            b = b.concat(blk.target)
        return b

    def block_slice(self, i: int) -> slice:
        """Global coordinate slice of 0-based block i."""
        start = sum(b.dim for b in self.blocks[:i])
        return slice(start, start + self.blocks[i].dim)

    def flat_dynamics(self) -> tuple:
        return tuple(f for fs in self.dynamics for f in fs)

    def __eq__(self, other):
        return (isinstance(other, ChainSystem)
                and len(self.blocks) == len(other.blocks)
                and all(a.name == b.name and a.var_names == b.var_names
                        and np.array_equal(a.box.lower, b.box.lower)
                        and np.array_equal(a.box.upper, b.box.upper)
                        and np.array_equal(a.target.lower, b.target.lower)
                        and np.array_equal(a.target.upper, b.target.upper)
                        for a, b in zip(self.blocks, other.blocks))
                and self.dynamics == other.dynamics
                and self.horizon == other.horizon)


def validate_chain(sys: ChainSystem) -> list:
    """Check the chain pattern and return the K = N-1 cliques.

    Block i dynamics may reference blocks i and i+1; the last block may
    reference blocks N-1 and N.  Violations are reported with the
    offending term and block.
    """
    N = sys.n_blocks
    if N < 2:
        raise StructureError("chain needs at least 2 blocks")
    block_vars = [set(b.var_names) for b in sys.blocks]
    for i, (b, fs) in enumerate(zip(sys.blocks, sys.dynamics)):
        if i < N - 1:
            allowed = block_vars[i] | block_vars[i + 1]
            partner = sys.blocks[i + 1].name
        else:
            allowed = block_vars[i - 1] | block_vars[i]
            partner = sys.blocks[i - 1].name
        for ci, f in enumerate(fs):
            bad = f.support() - allowed
            if bad:
                for expo in sorted(f.terms, key=lambda e: -abs(f.terms[e])):
                    term_poly = Polynomial(sys.var_names, {expo: f.terms[expo]})
                    if term_poly.support() - allowed:
                        raise StructureError(
                            f"chain violation in block {b.name} (equation {ci}): "
                            f"term {term_poly.to_str()} uses {sorted(bad)} outside "
                            f"blocks {{{b.name}, {partner}}}")
    cliques = []
    for j in range(N - 1):
        a, b = sys.blocks[j], sys.blocks[j + 1]
        lo = sum(blk.dim for blk in sys.blocks[:j])
        idx = tuple(range(lo, lo + a.dim + b.dim))
        cliques.append(Clique(index=j + 1,
                              var_names=a.var_names + b.var_names,
                              var_indices=idx,
                              box=a.box.concat(b.box),
                              target=a.target.concat(b.target)))
    return cliques


def _cube(dim, half):
    return Box([-half] * dim, [half] * dim)


def bicylinder() -> ChainSystem:
    """Three scalar blocks; the ROA of 0 contains the bicylinder
    {x1^2+x2^2 <= 0.25, x2^2+x3^2 <= 0.25} but is not sparsely describable."""
    v = ("x1", "x2", "x3")
    x1, x2, x3 = (Polynomial.var(v, n) for n in v)
    blocks = [Block(f"block{i+1}", (v[i],), _cube(1, 1.0), _cube(1, 0.1))
              for i in range(3)]
    dynamics = [
        ((x1 * x1 + x2 * x2 - 0.25) * x1,),
        ((x2 * x2 + x3 * x3 - 0.25) * x2,),
        ((x2 * x2 + x3 * x3 - 0.25) * x3,),
    ]
    return ChainSystem(blocks, dynamics, horizon=100.0)


def vdp_chain(K: int, seed: int) -> ChainSystem:
    """Chain of K Van der Pol oscillators with random couplings.

    Oscillator j has position y_j and velocity z_j; oscillators 1..K-1
    are 2-dim blocks and the last one is split into two scalar blocks so
    that the coupling eps_j z_{j+1} y_j always lands in the successor
    block: block K holds z_K (referenced by oscillator K-1) and block
    K+1 holds y_K.  N = K+1 blocks, n = 2K states.  Couplings eps_j are
    i.i.d. uniform on [-0.5, 0.5] from a seeded generator.
    """
    if K < 2:
        raise StructureError("vdp chain needs K >= 2")
    eps = np.random.default_rng(int(seed)).uniform(-0.5, 0.5, K - 1)
    v = tuple(f"x{i+1}" for i in range(2 * K))

    def y(j):  # position of oscillator j (1-based)
        return Polynomial.var(v, v[2 * j - 2] if j < K else v[2 * K - 1])

    def z(j):  # velocity of oscillator j
        return Polynomial.var(v, v[2 * j - 1] if j < K else v[2 * K - 2])

    blocks, dynamics = [], []
    for j in range(1, K):
        blocks.append(Block(f"block{j}", (v[2 * j - 2], v[2 * j - 1]),
                            _cube(2, 1.0), _cube(2, 0.1)))
        dy = -2.0 * z(j)
        dz = (0.8 * y(j) + 10.0 * (1.44 * y(j) * y(j) - 0.21) * z(j)
              + float(eps[j - 1]) * z(j + 1) * y(j))
        dynamics.append((dy, dz))
    blocks.append(Block(f"block{K}", (v[2 * K - 2],), _cube(1, 1.0), _cube(1, 0.1)))
    dynamics.append(((0.8 * y(K) + 10.0 * (1.44 * y(K) * y(K) - 0.21) * z(K)),))
    blocks.append(Block(f"block{K+1}", (v[2 * K - 1],), _cube(1, 1.0), _cube(1, 0.1)))
    dynamics.append(((-2.0 * z(K)),))
    return ChainSystem(blocks, dynamics, horizon=30.0)


def normalize(sys: ChainSystem):
    """Equivalent system on [-1,1]^n state boxes and [0,1] time.

    Returns (normalized system, per-block AffineMap with
    original = map(normalized), time scale T).  Dynamics transform by
    the chain rule and pick up the factor T.
    """
    T = sys.horizon
    gmap = sys.state_box.unit_map()
    blocks, dynamics, maps = [], [], []
    for i, (b, fs) in enumerate(zip(sys.blocks, sys.dynamics)):
        sl = sys.block_slice(i)
        bmap = AffineMap(gmap.scale[sl], gmap.offset[sl])
        maps.append(bmap)
        tgt = Box((b.target.lower - bmap.offset) / bmap.scale,
                  (b.target.upper - bmap.offset) / bmap.scale)
        blocks.append(Block(b.name, b.var_names, _cube(b.dim, 1.0), tgt))
        sub = [f.substitute_affine(gmap) for f in fs]
        dynamics.append(tuple((T / gmap.scale[sl][c]) * sub[c]
                              for c in range(b.dim)))
    return ChainSystem(blocks, dynamics, horizon=1.0), maps, T


def denormalize(nsys: ChainSystem, maps, T: float) -> ChainSystem:
    """Inverse of normalize; round-trips dynamics coefficients."""
    scale = np.concatenate([m.scale for m in maps])
    offset = np.concatenate([m.offset for m in maps])
    gmap = AffineMap(scale, offset)
    inv = gmap.inverse()
    blocks, dynamics = [], []
    for i, (b, fs) in enumerate(zip(nsys.blocks, nsys.dynamics)):
        sl = nsys.block_slice(i)
        box = Box(b.box.lower * scale[sl] + offset[sl],
                  b.box.upper * scale[sl] + offset[sl])
        tgt = Box(b.target.lower * scale[sl] + offset[sl],
                  b.target.upper * scale[sl] + offset[sl])
        blocks.append(Block(b.name, b.var_names, box, tgt))
        sub = [f.substitute_affine(inv) for f in fs]
        dynamics.append(tuple((scale[sl][c] / T) * sub[c] for c in range(b.dim)))
    return ChainSystem(blocks, dynamics, horizon=T)


# -- config files ---------------------------------------------------------

CONFIG_FORMAT = "chainroa-system/1"


def system_to_json(sys: ChainSystem) -> dict:
    return {
        "format": CONFIG_FORMAT,
        "horizon": sys.horizon,
        "blocks": [
            {
                "name": b.name,
                "vars": list(b.var_names),
                "lower": [float(x) for x in b.box.lower],
                "upper": [float(x) for x in b.box.upper],
                "target_lower": [float(x) for x in b.target.lower],
                "target_upper": [float(x) for x in b.target.upper],
            }
            for b in sys.blocks
        ],
        "dynamics": [[f.to_str() for f in fs] for fs in sys.dynamics],
    }


def system_from_json(doc: dict) -> ChainSystem:
    if doc.get("format") != CONFIG_FORMAT:
        raise StructureError(f"unsupported system config format {doc.get('format')!r}")
    blocks = [Block(b["name"], tuple(b["vars"]),
                    Box(b["lower"], b["upper"]),
                    Box(b["target_lower"], b["target_upper"]))
              for b in doc["blocks"]]
    var_names = tuple(v for b in blocks for v in b.var_names)
    if "t" in var_names:
        raise StructureError("variable name 't' is reserved for time")
    dynamics = [tuple(parse_poly(s, var_names) for s in fs)
                for fs in doc["dynamics"]]
    return ChainSystem(blocks, dynamics, doc["horizon"])


def save_config(sys: ChainSystem, path: str):
    with open(path, "w") as fh:
        json.dump(system_to_json(sys), fh, indent=2)
        fh.write("\n")


def load_config(path: str) -> ChainSystem:
    with open(path) as fh:
        return system_from_json(json.load(fh))
