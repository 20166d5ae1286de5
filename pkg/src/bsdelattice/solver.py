"""Backward solver for the lattice dynamics, with bounds and exports.

One backward step from slice i+1 to slice i does three things: project the
known slice values onto mean + z . dW + orthogonal remainder (the martingale
projection), solve the scalar implicit equation

    y - fhat(t_{i+1}, w, y, z) * dt = mean

at every node (Banach fixed point seeded at the mean, bisection fallback),
and keep the per-edge remainder as the orthogonal-martingale increment.  The
driver argument w is the shifted path sampled at grid times, known one step
ahead, which is what makes the implicit equation well-posed node by node.

Also here: the closed-form z bound 2 sqrt(d) (L + K T) exp(K T), the discrete
Gronwall envelope and its exponential-domination flag, the bound certificate
combining the two, and a BMO-style tail estimate of the control.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .drivers import DriverSpec, TerminalFunctional, average_driver
from .errors import ConvergenceError, StepSizeError, StructuralError
from .lattice import PathLattice, TimeGrid
from .probability import (
    AdaptedProcess,
    gather_children,
    left_process,
    martingale_projection,
    predictable_process,
)


@dataclass
class SolveInfo:
    iterations_max: int = 0
    residual_max: float = 0.0
    bisection_nodes: int = 0
    driver_name: str = ""
    terminal_name: str = ""


@dataclass
class SolutionTriple:
    """Solved (Y, Z, dM) on a lattice.

    Y is a left process (value per node, slice N equals the terminal values);
    Z is predictable (per deciding node); dm holds the orthogonal-martingale
    increments per edge, shape (n_i, 2**d) for the step out of slice i.  The
    cumulative M (with M_0 = 0) is materialized on demand in full-path mode.
    """

    lattice: PathLattice
    Y: AdaptedProcess
    Z: AdaptedProcess
    dm: list
    info: SolveInfo = field(default_factory=SolveInfo)

    @property
    def y0(self) -> float:
        return float(self.Y.slices[0][0])

    @property
    def M(self) -> AdaptedProcess:
        if self.lattice.mode != "full":
            raise StructuralError(
                "cumulative M is per path; not resolvable on a recombining lattice"
            )
        slices = [np.zeros(1)]
        for i in range(self.lattice.steps):
            slices.append(
                np.repeat(slices[-1], self.lattice.n_choices) + self.dm[i].ravel()
            )
        return left_process(self.lattice, slices)

    def z_sup(self) -> float:
        return max(
            float(np.max(np.sqrt((s ** 2).sum(axis=1)))) for s in self.Z.slices
        )


def terminal_values(lattice: PathLattice, phi: TerminalFunctional) -> np.ndarray:
    if lattice.mode == "recombining":
        if not phi.markovian or phi.terminal_map is None:
            raise StructuralError(
                "recombining mode needs a terminal functional of the final value "
                "(markovian with terminal_map); %r is not" % (phi.name,)
            )
        xi = phi.terminal_map(lattice.walk_slice(lattice.steps))
    elif phi.markovian and phi.terminal_map is not None:
        xi = phi.terminal_map(lattice.walk_slice(lattice.steps))
    else:
        xi = phi.evaluate(lattice.leaf_paths())
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (lattice.node_count(lattice.steps),):
        raise StructuralError(
            "terminal %r returned shape %r for %d leaves"
            % (phi.name, xi.shape, lattice.node_count(lattice.steps))
        )
    return xi


def driver_context(lattice: PathLattice, f: DriverSpec, i: int):
    """w argument for solving at slice i: shifted path samples on grid 0..i+1."""
    if not f.path_dependent:
        return None
    if lattice.mode != "full":
        raise StructuralError("path-dependent drivers need a full-path lattice")
    leaf = lattice.leaf_paths()
    stride = lattice.n_choices ** (lattice.steps - i)
    prefix = leaf[::stride, : i + 1, :]
    ctx = np.zeros((prefix.shape[0], i + 2, lattice.dim))
    ctx[:, 1:, :] = prefix
    return ctx


def check_step_size(f: DriverSpec, grid: TimeGrid):
    k = f.lipschitz_wy
    if k * grid.dt >= 1.0:
        n_min = int(math.floor(k * grid.horizon)) + 1
        raise StepSizeError(
            "K*dt = %.6g >= 1: the implicit step is not a contraction; "
            "use at least N = %d steps" % (k * grid.dt, n_min)
        )


def solve_backward(
    lattice: PathLattice,
    f: DriverSpec,
    phi: TerminalFunctional,
    tol: float = 1e-12,
    max_iter: int = 200,
) -> SolutionTriple:
    """Solve the backward dynamics on the lattice; returns the (Y, Z, dM) triple.

    Requires K*dt < 1 so the per-node implicit equation is a contraction
    (StepSizeError otherwise, naming a sufficient N).  In recombining mode the
    driver must be w-independent and the terminal a function of the final
    value.  The fixed point is iterated to an implicit-equation residual below
    tol, with a monotone-bisection fallback; ConvergenceError reports the
    worst residual if both fail.
    """
    grid = lattice.grid
    check_step_size(f, grid)
    if lattice.mode == "recombining" and f.w_dependence != "none":
        raise StructuralError("recombining mode needs a w-independent driver")
    xi = terminal_values(lattice, phi)
    dt = grid.dt
    info = SolveInfo(driver_name=f.name, terminal_name=phi.name)

    y_slices = [None] * (grid.steps + 1)
    z_slices = [None] * grid.steps
    dm_slices = [None] * grid.steps
    y_slices[grid.steps] = xi
    y_next = xi
    for i in range(grid.steps - 1, -1, -1):
        mean, z, dm = martingale_projection(lattice, i, y_next)
        w_ctx = driver_context(lattice, f, i)

        def fhat(y):
            return np.asarray(average_driver(f, grid, i, w_ctx, y, z), dtype=float)

        if f.y_dependence == "none":
            y = mean + fhat(mean) * dt
            iters = 1
        else:
            y = mean + fhat(mean) * dt
            iters = 1
            while True:
                y_new = mean + fhat(y) * dt
                iters += 1
                step = float(np.max(np.abs(y_new - y)))
                y = y_new
                if step <= 0.25 * tol or iters >= max_iter:
                    break
        resid = np.abs(y - fhat(y) * dt - mean)
        rmax = float(resid.max())
        if rmax > tol:
            bad = np.flatnonzero(resid > tol)
            y[bad] = _bisect_nodes(fhat, mean, dt, y, bad)
            info.bisection_nodes += bad.size
            resid = np.abs(y - fhat(y) * dt - mean)
            rmax = float(resid.max())
            if rmax > tol:
                raise ConvergenceError(
                    "implicit step at slice %d failed to reach tol=%.3g "
                    "(worst residual %.3g)" % (i, tol, rmax),
                    residual=rmax,
                    iterations=iters,
                )
        info.iterations_max = max(info.iterations_max, iters)
        info.residual_max = max(info.residual_max, rmax)
        y_slices[i] = y
        z_slices[i] = z
        dm_slices[i] = dm
        y_next = y

    return SolutionTriple(
        lattice=lattice,
        Y=left_process(lattice, y_slices),
        Z=predictable_process(lattice, z_slices),
        dm=dm_slices,
        info=info,
    )


def _bisect_nodes(fhat, mean, dt, y_start, rows):
    """Monotone bisection for y - fhat(y) dt = mean on the given rows.

    The map y -> y - fhat(y) dt is strictly increasing under K dt < 1, so a
    sign change brackets the unique root; brackets expand geometrically from
    the fixed-point iterate.
    """
    m = mean[rows]

    def h(yv):
        full = y_start.copy()
        full[rows] = yv
        return yv - fhat(full)[rows] * dt - m

    lo = y_start[rows] - 1.0
    hi = y_start[rows] + 1.0
    for _ in range(80):
        need_lo = h(lo) > 0
        need_hi = h(hi) < 0
        if not (need_lo.any() or need_hi.any()):
            break
        span = hi - lo
        lo = np.where(need_lo, lo - span, lo)
        hi = np.where(need_hi, hi + span, hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        hm = h(mid)
        lo = np.where(hm <= 0.0, mid, lo)
        hi = np.where(hm > 0.0, mid, hi)
    return 0.5 * (lo + hi)


# -- residual diagnostics ----------------------------------------------------


@dataclass
class ResidualReport:
    dynamics_max: float
    terminal_max: float
    dm_mean_max: float
    dm_orthogonality_max: float
    z_predictable: bool = True

    @property
    def passed(self) -> bool:
        return (
            self.dynamics_max <= 1e-10
            and self.terminal_max == 0.0
            and self.dm_mean_max <= 1e-12
            and self.dm_orthogonality_max <= 1e-12
        )


def solution_residuals(sol: SolutionTriple, f: DriverSpec, phi: TerminalFunctional) -> ResidualReport:
    """Recompute the one-step dynamics residual and the structural identities.

    The dynamics residual is Y_{i+1} - Y_i + fhat dt - z . dW - dm per edge;
    dm must have conditional mean zero and be orthogonal to every increment
    component.
    """
    lat = sol.lattice
    grid = lat.grid
    inc = lat.step_increments()
    dt = grid.dt
    worst = 0.0
    dm_mean = 0.0
    dm_orth = 0.0
    for i in range(grid.steps):
        y = sol.Y.slices[i]
        z = sol.Z.slices[i]
        dm = sol.dm[i]
        v = gather_children(lat, i, sol.Y.slices[i + 1])
        w_ctx = driver_context(lat, f, i)
        fv = np.asarray(average_driver(f, grid, i, w_ctx, y, z), dtype=float)
        resid = v - y[:, None] + (fv * dt)[:, None] - z @ inc.T - dm
        worst = max(worst, float(np.max(np.abs(resid))))
        dm_mean = max(dm_mean, float(np.max(np.abs(dm.mean(axis=1)))))
        for k in range(lat.dim):
            dm_orth = max(
                dm_orth, float(np.max(np.abs((dm * inc[None, :, k]).mean(axis=1))))
            )
    xi = terminal_values(lat, phi)
    term = float(np.max(np.abs(sol.Y.slices[-1] - xi)))
    return ResidualReport(
        dynamics_max=worst,
        terminal_max=term,
        dm_mean_max=dm_mean,
        dm_orthogonality_max=dm_orth,
    )


# -- bounds ------------------------------------------------------------------


def z_bound(L: float, K: float, T: float, d: int) -> float:
    """Closed-form control bound 2 sqrt(d) (L + K T) exp(K T)."""
    return 2.0 * math.sqrt(d) * (L + K * T) * math.exp(K * T)


@dataclass
class GronwallEnvelope:
    values: np.ndarray  # on grid times t_0..t_N
    dominated: bool  # values <= 2 A exp(B (T - t)) everywhere
    bound_values: np.ndarray


def gronwall_envelope(A: float, B: float, grid: TimeGrid) -> GronwallEnvelope:
    """Backward product envelope X_T = A, X_{t_i} = A prod_{j >= i+2} (1 - B dt_j)^-1.

    Requires B dt < 1.  The dominated flag records whether the envelope stays
    below twice the exponential A exp(B (T - t)) on the whole grid.
    """
    dt = grid.dt
    if B * dt >= 1.0:
        raise StepSizeError(
            "B*dt = %.6g >= 1: envelope product undefined; use N > %g" % (B * dt, B * grid.horizon)
        )
    n = grid.steps
    vals = np.empty(n + 1)
    vals[n] = A
    factor = 1.0 / (1.0 - B * dt)
    # X at t_i multiplies the factors for steps i+2 .. N
    vals[n - 1] = A
    for i in range(n - 2, -1, -1):
        vals[i] = vals[i + 1] * factor
    bound = 2.0 * A * np.exp(B * (grid.horizon - grid.times))
    return GronwallEnvelope(
        values=vals, dominated=bool(np.all(vals <= bound + 1e-15)), bound_values=bound
    )


def _selfref_envelope_dominated(A: float, B: float, grid: TimeGrid) -> bool:
    """Domination flag for the variant with the step-(i+1) factor included."""
    dt = grid.dt
    if B * dt >= 1.0:
        return False
    n = grid.steps
    prod = 1.0
    ok = True
    for i in range(n - 1, -1, -1):
        prod /= 1.0 - B * dt
        if prod * A > 2.0 * A * math.exp(B * (grid.horizon - grid.time(i))) + 1e-15:
            ok = False
    return ok


@dataclass
class ZBoundCertificate:
    bound: float
    margin: float  # 1 - b(2*bound) sqrt(d) sqrt(dt), positive when usable
    applies: bool
    detail: str


def z_bound_certificate(
    f: DriverSpec, phi: TerminalFunctional, lattice: PathLattice
) -> ZBoundCertificate:
    """Whether the closed-form z bound is certified at this step size.

    Needs the terminal Lipschitz constant and the driver's z-envelope; the
    certificate holds when the admissibility margin at twice the bound is
    positive and the discrete envelope stays exponentially dominated.
    """
    if phi.lipschitz is None:
        return ZBoundCertificate(math.nan, math.nan, False, "terminal has no Lipschitz constant")
    if f.z_lipschitz is None:
        return ZBoundCertificate(math.nan, math.nan, False, "driver has no z envelope")
    L, K, T, d = phi.lipschitz, f.lipschitz_wy, lattice.grid.horizon, lattice.dim
    bound = z_bound(L, K, T, d)
    b = f.z_lipschitz(2.0 * bound)
    margin = 1.0 - b * math.sqrt(d) * lattice.grid.sqrt_dt
    dominated = _selfref_envelope_dominated(1.0, K, lattice.grid) if K > 0 else True
    applies = margin > 0.0 and dominated
    detail = "margin %.4g, envelope %s" % (margin, "dominated" if dominated else "not dominated")
    return ZBoundCertificate(bound=bound, margin=margin, applies=applies, detail=detail)


def bmo_estimate(sol: SolutionTriple) -> float:
    """max over nodes of E[sum_{j > i} |Z_j|^2 dt | node]."""
    lat = sol.lattice
    dt = lat.grid.dt
    tail = np.zeros(lat.node_count(lat.steps))
    worst = 0.0
    for i in range(lat.steps - 1, -1, -1):
        z2 = (sol.Z.slices[i] ** 2).sum(axis=1)
        tail = z2 * dt + gather_children(lat, i, tail).mean(axis=1)
        worst = max(worst, float(tail.max()))
    return worst


# -- exports -----------------------------------------------------------------


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def export_solution_csv(sol: SolutionTriple, fileobj):
    """Write rows (time_index, node_id, Y, Z_1..Z_d, dM), 17 significant digits.

    Z on a row is the control decided at that node for the next step (empty on
    the last slice); dM is the orthogonal increment on the edge into the node
    (empty at the root; on recombining lattices, where incoming edges are not
    unique, it is the largest-magnitude incoming increment).
    """
    lat = sol.lattice
    d = lat.dim
    header = ["time_index", "node_id", "Y"] + ["Z_%d" % (k + 1) for k in range(d)] + ["dM"]
    fileobj.write(",".join(header) + "\n")
    for i in range(lat.steps + 1):
        y = sol.Y.slices[i]
        z = sol.Z.slices[i] if i < lat.steps else None
        if i == 0:
            dm_col = None
        elif lat.mode == "full":
            dm_col = sol.dm[i - 1].ravel()
        else:
            dm = sol.dm[i - 1]
            ch = lat.child_indices(i - 1)
            dm_col = np.zeros(lat.node_count(i))
            best = np.full(lat.node_count(i), -1.0)
            flat = ch.ravel()
            vals = dm.ravel()
            order = np.argsort(np.abs(vals), kind="stable")
            for idx in order:
                node = flat[idx]
                if abs(vals[idx]) >= best[node]:
                    best[node] = abs(vals[idx])
                    dm_col[node] = vals[idx]
        for k in range(y.shape[0]):
            row = [str(i), str(k), _fmt(y[k])]
            if z is not None:
                row += [_fmt(z[k, c]) for c in range(d)]
            else:
                row += [""] * d
            row.append(_fmt(dm_col[k]) if dm_col is not None else "")
            fileobj.write(",".join(row) + "\n")


def solution_summary(sol: SolutionTriple) -> dict:
    return {
        "y0": sol.y0,
        "z_sup": sol.z_sup(),
        "bmo": bmo_estimate(sol),
        "residual_max": sol.info.residual_max,
        "iterations_max": sol.info.iterations_max,
        "bisection_nodes": sol.info.bisection_nodes,
        "steps": sol.lattice.steps,
        "dim": sol.lattice.dim,
        "mode": sol.lattice.mode,
        "driver": sol.info.driver_name,
        "terminal": sol.info.terminal_name,
    }
