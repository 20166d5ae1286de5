"""Bernoulli random-walk lattices and their interpolations.

A lattice carries a d-dimensional random walk with increments +-sqrt(dt) per
component over a uniform time grid t_i = i*T/N.  Two layouts are supported:

* full-path mode: nodes at time index i are the 2**(d*i) sign prefixes,
  ordered lexicographically with + before -.  Node k at slice i has its
  step-j choice in the base-2**d digit of weight (2**d)**(i-j), so the
  children of node k are the contiguous block k*2**d .. k*2**d + 2**d - 1
  and the parent of node k is k // 2**d.

* recombining mode: nodes at time index i are the lattice points reached,
  keyed by per-component down-step counts m_c in 0..i (flat index in mixed
  radix, component 0 most significant; index 0 is the all-up point).  Only
  meaningful for Markov data; per-path quantities are unresolvable here.

Values attached to a slice are numpy arrays in node order; code elsewhere
relies on the contiguous child blocks of full-path mode for vectorized
conditional expectations.  Nodes are referred to by plain (time_index,
node_index) pairs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BudgetError,
    GridError,
    StructuralError,
    TimeDomainError,
)

DEFAULT_LEAF_BUDGET = 2 ** 20
_PATH_ARRAY_MAX_ENTRIES = 2 ** 23


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_i = i * horizon / steps, i = 0..steps."""

    horizon: float
    steps: int

    def __post_init__(self):
        if self.steps < 1:
            raise GridError("steps must be >= 1, got %r" % (self.steps,))
        if not (self.horizon > 0.0 and math.isfinite(self.horizon)):
            raise GridError("horizon must be a finite positive real, got %r" % (self.horizon,))

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    @property
    def sqrt_dt(self) -> float:
        return math.sqrt(self.dt)

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.steps + 1)

    def time(self, i: int) -> float:
        if not 0 <= i <= self.steps:
            raise TimeDomainError("time index %d outside 0..%d" % (i, self.steps))
        return i * self.horizon / self.steps


def sign_matrix(dim: int) -> np.ndarray:
    """(2**dim, dim) array of increment signs, lexicographic with + (=+1) first.

    Row c encodes choice c: component k is -1 iff bit (dim-1-k) of c is set,
    so row 0 is all +1 and row 2**dim - 1 is all -1.
    """
    k = np.arange(2 ** dim)[:, None]
    bits = (k >> np.arange(dim - 1, -1, -1)[None, :]) & 1
    return 1.0 - 2.0 * bits


class PathLattice:
    """Random-walk lattice over a TimeGrid; see the module docstring for layout.

    Construct through build_lattice, which enforces the node budget.  Treat
    instances as immutable after construction; slice arrays returned by the
    accessors are cached and shared.
    """

    def __init__(self, grid: TimeGrid, dim: int, mode: str, leaf_budget: int):
        if dim < 1:
            raise GridError("dimension must be >= 1, got %r" % (dim,))
        if mode not in ("full", "recombining"):
            raise GridError("mode must be 'full' or 'recombining', got %r" % (mode,))
        self.grid = grid
        self.dim = dim
        self.mode = mode
        self.leaf_budget = leaf_budget
        self.n_choices = 2 ** dim
        self.signs = sign_matrix(dim)
        self.signs.setflags(write=False)
        self._walk_cache: dict = {}
        self._prob_cache: dict = {}
        self._child_cache: dict = {}
        self._leaf_paths = None

    # -- sizes ---------------------------------------------------------------

    @property
    def steps(self) -> int:
        return self.grid.steps

    def node_count(self, i: int) -> int:
        if not 0 <= i <= self.steps:
            raise TimeDomainError("slice index %d outside 0..%d" % (i, self.steps))
        if self.mode == "full":
            return self.n_choices ** i
        return (i + 1) ** self.dim

    def total_nodes(self) -> int:
        return sum(self.node_count(i) for i in range(self.steps + 1))

    # -- structure -----------------------------------------------------------

    def step_increments(self) -> np.ndarray:
        """(2**d, d) increments of one step: signs * sqrt(dt)."""
        return self.signs * self.grid.sqrt_dt

    def child_indices(self, i: int) -> np.ndarray:
        """(n_i, 2**d) indices into slice i+1: child of node k under choice c.

        Column order follows the sign matrix rows.
        """
        if not 0 <= i < self.steps:
            raise TimeDomainError("step from slice %d has no children" % (i,))
        if self.mode == "full":
            n = self.node_count(i)
            return np.arange(n * self.n_choices).reshape(n, self.n_choices)
        cached = self._child_cache.get(i)
        if cached is None:
            n = self.node_count(i)
            downs = (self.signs < 0).astype(np.int64)
            m = np.array(np.unravel_index(np.arange(n), (i + 1,) * self.dim)).T
            cols = []
            for c in range(self.n_choices):
                child_multi = m + downs[c][None, :]
                cols.append(np.ravel_multi_index(tuple(child_multi.T), (i + 2,) * self.dim))
            cached = np.stack(cols, axis=1)
            cached.setflags(write=False)
            self._child_cache[i] = cached
        return cached

    def parent_index(self, i: int, k: int) -> int:
        if self.mode != "full":
            raise StructuralError("parents are not unique on a recombining lattice")
        if i < 1:
            raise StructuralError("the root has no parent")
        return k // self.n_choices

    def prefix_index(self, i: int, k: int, j: int) -> int:
        """Index at slice j (<= i) of the path prefix of full-path node (i, k)."""
        if self.mode != "full":
            raise StructuralError("path prefixes are not resolvable on a recombining lattice")
        if not 0 <= j <= i:
            raise StructuralError("prefix slice %d outside 0..%d" % (j, i))
        return k // self.n_choices ** (i - j)

    def sign_label(self, i: int, k: int) -> str:
        """Human-readable sign prefix of full-path node (i, k), e.g. '(+-,++)'."""
        if self.mode != "full":
            return "point[%d]@%d" % (k, i)
        digits = []
        for j in range(i):
            c = (k // self.n_choices ** (i - 1 - j)) % self.n_choices
            bits = [(c >> (self.dim - 1 - b)) & 1 for b in range(self.dim)]
            digits.append("".join("-" if b else "+" for b in bits))
        return "(" + ",".join(digits) + ")"

    # -- values --------------------------------------------------------------

    def walk_slice(self, i: int) -> np.ndarray:
        """(n_i, d) walk values at time index i, in node order.  Cached."""
        if not 0 <= i <= self.steps:
            raise TimeDomainError("slice index %d outside 0..%d" % (i, self.steps))
        cached = self._walk_cache.get(i)
        if cached is not None:
            return cached
        if self.mode == "full":
            start = max(j for j in range(i + 1) if j in self._walk_cache or j == 0)
            w = self._walk_cache.get(start)
            if w is None:
                w = np.zeros((1, self.dim))
                w.setflags(write=False)
                self._walk_cache[0] = w
            inc = self.step_increments()
            for j in range(start, i):
                nxt = np.repeat(w, self.n_choices, axis=0)
                nxt.reshape(-1, self.n_choices, self.dim)[...] += inc[None, :, :]
                nxt.setflags(write=False)
                self._walk_cache[j + 1] = nxt
                w = nxt
            return w
        n = self.node_count(i)
        m = np.array(np.unravel_index(np.arange(n), (i + 1,) * self.dim)).T
        w = (i - 2.0 * m) * self.grid.sqrt_dt
        w.setflags(write=False)
        self._walk_cache[i] = w
        return w

    def slice_probabilities(self, i: int) -> np.ndarray:
        """(n_i,) node probabilities at time index i.  Cached."""
        cached = self._prob_cache.get(i)
        if cached is not None:
            return cached
        if self.mode == "full":
            n = self.node_count(i)
            p = np.full(n, 1.0 / n)
        else:
            p = np.ones(1)
            for _ in range(self.dim):
                p = np.multiply.outer(p, _binomial_weights(i)).ravel()
        self._prob_cache[i] = p
        return p

    def leaf_paths(self) -> np.ndarray:
        """(n_N, N+1, d) full walk paths at grid times, one row per leaf.

        Full-path mode only; refuses to materialize beyond a fixed entry
        budget since the array grows like leaves * (N+1) * d.
        """
        if self.mode != "full":
            raise StructuralError("leaf paths are not resolvable on a recombining lattice")
        if self._leaf_paths is not None:
            return self._leaf_paths
        entries = self.node_count(self.steps) * (self.steps + 1) * self.dim
        if entries > _PATH_ARRAY_MAX_ENTRIES:
            raise BudgetError(
                "materializing leaf paths needs %d entries, over the %d-entry budget"
                % (entries, _PATH_ARRAY_MAX_ENTRIES)
            )
        paths = np.empty((self.node_count(self.steps), self.steps + 1, self.dim))
        for j in range(self.steps + 1):
            block = self.n_choices ** (self.steps - j)
            paths[:, j, :] = np.repeat(self.walk_slice(j), block, axis=0)
        paths.setflags(write=False)
        self._leaf_paths = paths
        return paths


def _binomial_weights(i: int) -> np.ndarray:
    """C(i, m) * 2**-i for m = 0..i, by the scaled recurrence (no overflow)."""
    w = np.empty(i + 1)
    w[0] = 0.5 ** i
    for m in range(i):
        w[m + 1] = w[m] * (i - m) / (m + 1.0)
    return w


def build_lattice(
    steps: int,
    dim: int = 1,
    horizon: float = 1.0,
    mode: str = "full",
    leaf_budget: int = DEFAULT_LEAF_BUDGET,
) -> PathLattice:
    """Build a random-walk lattice over the uniform grid with the given shape.

    Full-path mode requires 2**(dim*steps) <= leaf_budget (default 2**20);
    pass a larger budget explicitly to go beyond it.
    """
    grid = TimeGrid(horizon=float(horizon), steps=int(steps))
    lattice = PathLattice(grid, int(dim), mode, int(leaf_budget))
    leaves = lattice.node_count(lattice.steps)
    if leaves > lattice.leaf_budget:
        raise BudgetError(
            "lattice with steps=%d dim=%d mode=%s has %d leaf nodes; "
            "needs leaf_budget >= %d (default %d)"
            % (steps, dim, mode, leaves, leaves, DEFAULT_LEAF_BUDGET)
        )
    return lattice


# -- interpolations ----------------------------------------------------------


def _covering_step(grid: TimeGrid, t: float) -> int:
    j = int(math.ceil(t / grid.dt - 1e-12))
    return min(max(j, 1), grid.steps)


def interpolate_linear(lattice: PathLattice, node, t: float) -> np.ndarray:
    """Piecewise-linear interpolation of the walk along a node's path.

    node is a (time_index, node_index) pair on a full-path lattice whose
    depth covers the interval [t_{j-1}, t_j] containing t.
    """
    i, k = node
    if lattice.mode != "full":
        raise StructuralError("path values are not resolvable on a recombining lattice")
    if not 0 <= i <= lattice.steps or not 0 <= k < lattice.node_count(i):
        raise StructuralError("node (%r, %r) is not on the lattice" % (i, k))
    T = lattice.grid.horizon
    if not (-1e-12 <= t <= T + 1e-12):
        raise TimeDomainError("t=%r outside [0, %r]" % (t, T))
    t = min(max(t, 0.0), T)
    if t == 0.0:
        return np.zeros(lattice.dim)
    j = _covering_step(lattice.grid, t)
    if j > i:
        raise StructuralError(
            "node at time index %d does not determine the walk on step %d" % (i, j)
        )
    kj = lattice.prefix_index(i, k, j)
    w1 = lattice.walk_slice(j)[kj]
    w0 = lattice.walk_slice(j - 1)[kj // lattice.n_choices]
    theta = (t - lattice.grid.time(j - 1)) / lattice.grid.dt
    return w0 + theta * (w1 - w0)


def interpolate_shifted(lattice: PathLattice, node, t: float) -> np.ndarray:
    """Adapted shift of the linear interpolation: 0 for t <= dt, else value at t - dt.

    The result depends only on increments up to index ceil((t - dt)/dt), so it
    is known one step ahead of t; drivers are fed this path.
    """
    h = lattice.grid.dt
    T = lattice.grid.horizon
    if not (-1e-12 <= t <= T + 1e-12):
        raise TimeDomainError("t=%r outside [0, %r]" % (t, T))
    if t <= h:
        i, k = node
        if not 0 <= i <= lattice.steps or not 0 <= k < lattice.node_count(i):
            raise StructuralError("node (%r, %r) is not on the lattice" % (i, k))
        return np.zeros(lattice.dim)
    return interpolate_linear(lattice, node, t - h)


def shifted_grid_samples(path: np.ndarray) -> np.ndarray:
    """Shifted path sampled at grid times: out[..., j, :] = path[..., j-1, :], 0 first.

    On the uniform grid the shifted interpolation at t_j equals the walk at
    t_{j-1}; this is the w argument handed to drivers.
    """
    out = np.zeros_like(path)
    out[..., 1:, :] = path[..., :-1, :]
    return out


# -- walk-condition report ---------------------------------------------------


@dataclass
class ConditionCheck:
    name: str
    passed: object  # True/False, or None for conditions deferred to other suites
    detail: str
    deviation: float = 0.0


@dataclass
class WalkConditionReport:
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if c.passed is not None)

    def failures(self):
        return [c for c in self.checks if c.passed is False]

    def __str__(self):
        lines = []
        for c in self.checks:
            status = {True: "pass", False: "FAIL", None: "n/a "}[c.passed]
            lines.append("%s %-10s %s" % (status, c.name, c.detail))
        return "\n".join(lines)


def verify_walk_conditions(lattice: PathLattice, tol: float = 1e-12) -> WalkConditionReport:
    """Check the walk-structure conditions on the lattice and report per condition.

    Increment moments are recomputed from the stored slice probabilities, so a
    corrupted lattice fails here.  The vanishing-mesh limit condition cannot be
    checked at fixed N and is reported as deferred to the convergence suite.
    """
    grid = lattice.grid
    rep = WalkConditionReport()
    times = grid.times

    dt_ok = grid.dt > 0 and np.all(np.diff(times) > 0)
    end_ok = times[0] == 0.0 and abs(times[-1] - grid.horizon) <= tol
    rep.checks.append(
        ConditionCheck(
            "grid",
            bool(dt_ok and end_ok),
            "uniform dt=%.6g over [0, %g], %d steps" % (grid.dt, grid.horizon, grid.steps),
        )
    )

    rep.checks.append(
        ConditionCheck(
            "mesh-limit",
            None,
            "limit condition (N -> infinity); exercised by the convergence sweeps",
        )
    )

    inc = lattice.step_increments()
    support_ok = all(len(np.unique(inc[:, k])) == 2 for k in range(lattice.dim))
    rep.checks.append(
        ConditionCheck(
            "support",
            bool(support_ok),
            "each component takes the 2 values +-sqrt(dt)",
        )
    )

    worst = 0.0
    for i in range(lattice.steps + 1):
        p = lattice.slice_probabilities(i)
        worst = max(worst, abs(float(p.sum()) - 1.0))
        if np.any(p < 0):
            worst = max(worst, float(-p.min()))
    for i in range(lattice.steps):
        p = lattice.slice_probabilities(i)
        if lattice.mode == "full":
            q = lattice.slice_probabilities(i + 1).reshape(-1, lattice.n_choices)
        else:
            # transition form: each parent spreads its mass evenly over choices
            q = np.outer(p, np.full(lattice.n_choices, 1.0 / lattice.n_choices))
        for k in range(lattice.dim):
            mean_k = float(q.sum(axis=0) @ inc[:, k])
            m2_k = float(q.sum(axis=0) @ inc[:, k] ** 2)
            worst = max(worst, abs(mean_k), abs(m2_k - grid.dt))
            for l in range(k + 1, lattice.dim):
                worst = max(worst, abs(float(q.sum(axis=0) @ (inc[:, k] * inc[:, l]))))
    rep.checks.append(
        ConditionCheck(
            "moments",
            bool(worst <= tol),
            "slice masses 1, increment mean 0, second moment dt, cross moments 0 "
            "(worst deviation %.3g)" % worst,
            worst,
        )
    )

    ratio = float(np.max(np.abs(inc))) / grid.sqrt_dt
    rep.checks.append(
        ConditionCheck(
            "bounded",
            bool(ratio <= 1.0 + tol),
            "increment/sqrt(dt) ratio D = %g" % ratio,
            abs(ratio - 1.0),
        )
    )

    shape_ok = True
    for i in range(lattice.steps):
        ch = lattice.child_indices(i)
        if ch.shape != (lattice.node_count(i), lattice.n_choices):
            shape_ok = False
        elif ch.min() < 0 or ch.max() >= lattice.node_count(i + 1):
            shape_ok = False
    rep.checks.append(
        ConditionCheck("children", bool(shape_ok), "every node has 2**d children on the lattice")
    )
    return rep
