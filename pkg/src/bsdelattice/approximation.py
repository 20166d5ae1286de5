"""Terminal approximation ladders and refinement studies.

Bounded irregular terminals are approached through their Lipschitz
regularizations: level n replaces the payoff by the cheapest combination of a
candidate payoff and n times the sup-distance to it.  The candidate family is
shared across levels (uniform shifts of the path with a fixed magnitude grid,
an endpoint-zeroing shift, optionally a pool of whole lattice paths), which
makes the ladder nondecreasing in n exactly, not just in the limit.

On top of that sit three experiment drivers: the monotone ladder (solve per
level, check nodewise monotonicity and shrinking increments), the uniform
Cauchy ladder (successive value distances against exp(K T) times the terminal
distance), and grid refinement toward a known reference value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .drivers import DriverSpec, TerminalFunctional
from .errors import GridError
from .lattice import build_lattice
from .solver import bmo_estimate, solve_backward, terminal_values

POOL_LIMIT = 2 ** 12


def inf_convolution(
    phi: TerminalFunctional,
    n: float,
    radius: float = None,
    points: int = 129,
    pool: np.ndarray = None,
) -> TerminalFunctional:
    """Level-n Lipschitz regularization of a bounded terminal.

    Candidates: the path itself, uniform shifts along each coordinate with
    magnitudes on a fixed grid of the given radius, the shift that zeroes the
    final value of that coordinate, and (when pool is given) whole candidate
    paths priced at n times the sup-distance.  The default radius is twice
    the declared bound, which is far enough that larger shifts cannot win.

    Keeping radius, points, and pool fixed across n makes the family
    pointwise nondecreasing in n with no tolerance at all.
    """
    n = float(n)
    if n <= 0:
        raise GridError("regularization level must be positive, got %g" % n)
    if radius is None:
        radius = 2.0 * (phi.bound if phi.bound is not None else 1.0)
    mags = [c for c in np.linspace(-radius, radius, points) if c != 0.0]
    pool_vals = None
    if pool is not None:
        pool = np.asarray(pool, dtype=float)
        if pool.shape[0] > POOL_LIMIT:
            raise GridError(
                "candidate pool of %d paths exceeds the %d limit" % (pool.shape[0], POOL_LIMIT)
            )
        pool_vals = np.asarray(phi.evaluate(pool), dtype=float)

    def evaluate(paths):
        arr = np.asarray(paths, dtype=float)
        d = arr.shape[-1]
        best = np.array(phi.evaluate(arr), dtype=float, copy=True)
        for k in range(d):
            ek = np.zeros(d)
            ek[k] = 1.0
            snap = -arr[..., -1, k]
            cand = np.asarray(phi.evaluate(arr + snap[..., None, None] * ek), dtype=float)
            best = np.minimum(best, cand + n * np.abs(snap))
            for c in mags:
                cand = np.asarray(phi.evaluate(arr + c * ek), dtype=float)
                best = np.minimum(best, cand + n * abs(c))
        if pool_vals is not None:
            flat = arr.reshape(-1, arr.shape[-2], d)
            out = best.reshape(-1)
            for lo in range(0, pool.shape[0], 256):
                blk = pool[lo : lo + 256]
                dist = np.max(
                    np.abs(flat[:, None, :, :] - blk[None, :, :, :]), axis=(-1, -2)
                )
                out = np.minimum(out, np.min(pool_vals[lo : lo + 256] + n * dist, axis=1))
            best = out.reshape(best.shape)
        return best

    markov = phi.markovian and phi.terminal_map is not None and pool is None
    tmap = None
    if markov:
        def tmap(x):
            xv = np.asarray(x, dtype=float)
            d = xv.shape[-1]
            best = np.array(phi.terminal_map(xv), dtype=float, copy=True)
            for k in range(d):
                ek = np.zeros(d)
                ek[k] = 1.0
                snap = -xv[..., k]
                best = np.minimum(
                    best,
                    np.asarray(phi.terminal_map(xv + snap[..., None] * ek), dtype=float)
                    + n * np.abs(snap),
                )
                for c in mags:
                    best = np.minimum(
                        best,
                        np.asarray(phi.terminal_map(xv + c * ek), dtype=float) + n * abs(c),
                    )
            return best

    return TerminalFunctional(
        name="infconv%g:%s" % (n, phi.name),
        evaluate=evaluate,
        lipschitz=n if phi.lipschitz is None else min(n, phi.lipschitz),
        bound=phi.bound,
        markovian=markov,
        terminal_map=tmap,
    )


@dataclass
class LadderRow:
    level: str
    y0: float
    bmo: float
    sup_increment: float = None
    min_increment: float = None
    terminal_gap: float = None
    cauchy_ok: bool = None


@dataclass
class ApproximationLadder:
    rows: list
    solutions: list
    monotone: bool
    increments_decreasing: bool
    cauchy_uniform: bool


def _run_ladder(lattice, f: DriverSpec, terminals, labels) -> ApproximationLadder:
    growth = math.exp(f.lipschitz_wy * lattice.grid.horizon)
    rows = []
    sols = []
    prev_sol = None
    prev_xi = None
    monotone = True
    cauchy = True
    sups = []
    for label, phi in zip(labels, terminals):
        sol = solve_backward(lattice, f, phi)
        xi = terminal_values(lattice, phi)
        if prev_sol is None:
            rows.append(LadderRow(level=label, y0=sol.y0, bmo=bmo_estimate(sol)))
        else:
            sup_inc = 0.0
            min_inc = math.inf
            for cur, old in zip(sol.Y.slices, prev_sol.Y.slices):
                diff = cur - old
                sup_inc = max(sup_inc, float(np.max(np.abs(diff))))
                min_inc = min(min_inc, float(np.min(diff)))
            gap = float(np.max(np.abs(xi - prev_xi)))
            ok = sup_inc <= growth * gap + 1e-9
            rows.append(
                LadderRow(
                    level=label,
                    y0=sol.y0,
                    bmo=bmo_estimate(sol),
                    sup_increment=sup_inc,
                    min_increment=min_inc,
                    terminal_gap=gap,
                    cauchy_ok=ok,
                )
            )
            monotone = monotone and min_inc >= -1e-12
            cauchy = cauchy and ok
            sups.append(sup_inc)
        sols.append(sol)
        prev_sol = sol
        prev_xi = xi
    decreasing = all(sups[j + 1] <= sups[j] + 1e-12 for j in range(len(sups) - 1))
    return ApproximationLadder(
        rows=rows,
        solutions=sols,
        monotone=monotone,
        increments_decreasing=decreasing,
        cauchy_uniform=cauchy,
    )


def monotone_limit_experiment(
    lattice,
    f: DriverSpec,
    phi: TerminalFunctional,
    levels=(1, 2, 4, 8, 16),
    points: int = 129,
    use_pool: bool = True,
) -> ApproximationLadder:
    """Solve along the regularization ladder of phi and report monotonicity.

    The pool of whole lattice paths joins the candidate set when the lattice
    is full-path and small enough; the ladder stays monotone either way.
    """
    pool = None
    if (
        use_pool
        and lattice.mode == "full"
        and lattice.node_count(lattice.steps) <= POOL_LIMIT
    ):
        pool = lattice.leaf_paths()
    terminals = [
        inf_convolution(phi, n, points=points, pool=pool) for n in levels
    ]
    labels = ["n=%g" % n for n in levels]
    return _run_ladder(lattice, f, terminals, labels)


def uniform_limit_experiment(
    lattice, f: DriverSpec, terminals, labels=None
) -> ApproximationLadder:
    """Cauchy ladder over an arbitrary terminal sequence.

    Checks each successive value distance against exp(K T) times the terminal
    sup distance; with a y-independent driver that bound is exact up to
    rounding, so cauchy_uniform should come back True.
    """
    if labels is None:
        labels = ["level=%d" % j for j in range(len(terminals))]
    return _run_ladder(lattice, f, terminals, labels)


@dataclass
class RefinementStudy:
    rows: list = field(default_factory=list)  # (steps, y0, error)
    reference: float = math.nan
    fitted_order: float = math.nan

    @property
    def errors_decreasing(self) -> bool:
        errs = [r[2] for r in self.rows]
        return all(errs[j + 1] < errs[j] for j in range(len(errs) - 1))


def refinement_experiment(
    f: DriverSpec,
    phi: TerminalFunctional,
    steps_list,
    reference: float,
    dim: int = 1,
    horizon: float = 1.0,
    mode: str = "recombining",
    leaf_budget: int = None,
) -> RefinementStudy:
    """Solve on finer and finer grids and track the root error to reference.

    The fitted order is the least-squares slope of log error against log N
    (so first order shows up as roughly 1.0); it is NaN when any error
    vanishes exactly or fewer than two grids are given.
    """
    study = RefinementStudy(reference=float(reference))
    for steps in steps_list:
        kwargs = {} if leaf_budget is None else {"leaf_budget": leaf_budget}
        lat = build_lattice(int(steps), dim=dim, horizon=horizon, mode=mode, **kwargs)
        sol = solve_backward(lat, f, phi)
        study.rows.append((int(steps), sol.y0, abs(sol.y0 - study.reference)))
    errs = np.array([r[2] for r in study.rows])
    ns = np.array([r[0] for r in study.rows], dtype=float)
    if len(errs) >= 2 and np.all(errs > 0.0):
        slope = np.polyfit(np.log(ns), np.log(errs), 1)[0]
        study.fitted_order = float(-slope)
    return study


def _fmt(x) -> str:
    return format(float(x), ".17g")


def export_ladder_csv(ladder: ApproximationLadder, fileobj):
    fileobj.write("level,Y0,sup_increment,bmo,cauchy_bound_ok\n")
    for row in ladder.rows:
        fileobj.write(
            "%s,%s,%s,%s,%s\n"
            % (
                row.level,
                _fmt(row.y0),
                "" if row.sup_increment is None else _fmt(row.sup_increment),
                _fmt(row.bmo),
                "" if row.cauchy_ok is None else str(int(row.cauchy_ok)),
            )
        )


def export_refinement_csv(study: RefinementStudy, fileobj):
    fileobj.write("N,Y0,error,fitted_order\n")
    for steps, y0, err in study.rows:
        fileobj.write(
            "%d,%s,%s,%s\n" % (steps, _fmt(y0), _fmt(err), _fmt(study.fitted_order))
        )
