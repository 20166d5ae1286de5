"""Convex-dual certificates for backward solutions.

Every admissible predictable control mu induces a candidate value process:
terminal values unchanged, one step back the tilted conditional expectation
minus the driver's z-conjugate times dt.  Convexity of the driver makes every
candidate a lower bound on the solved value (weak duality); the subgradient
control closes the gap when its tilt keeps all one-step weights positive.

A conjugate value of +inf sends the candidate to -inf at that node, which
then propagates toward the root.  That is a legitimate (useless) candidate,
reported as is rather than raised.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .drivers import DriverSpec, TerminalFunctional, numeric_conjugate, subgradient
from .errors import ConvergenceError, OptimizerAdmissibilityError
from .lattice import PathLattice
from .probability import (
    AdaptedProcess,
    ControlProcess,
    gather_children,
    left_process,
    predictable_process,
)
from .solver import SolutionTriple, check_step_size, driver_context, terminal_values


def _conjugate_slice(f, t, w_ctx, y, mu, mode):
    if mode == "auto" and f.analytic_conjugate is not None:
        return np.asarray(f.analytic_conjugate(t, w_ctx, y, mu), dtype=float)
    y_arr = np.broadcast_to(np.asarray(y, dtype=float), mu.shape[:-1])
    out = np.empty(mu.shape[:-1])
    flat_mu = mu.reshape(-1, mu.shape[-1])
    flat_y = y_arr.reshape(-1)
    for k in range(flat_mu.shape[0]):
        wk = None if w_ctx is None else w_ctx[k]
        out.reshape(-1)[k] = numeric_conjugate(f, t, wk, flat_y[k], flat_mu[k])
    return out


def dual_value(
    lattice: PathLattice,
    f: DriverSpec,
    phi: TerminalFunctional,
    control: ControlProcess,
    tol: float = 1e-12,
    max_iter: int = 200,
    conjugate_mode: str = "auto",
) -> AdaptedProcess:
    """Candidate value process for one admissible control, at every node.

    conjugate_mode "auto" prefers the driver's closed-form conjugate;
    "numeric" forces the search-based one (for validating the closed form
    through an independent route).
    """
    check_step_size(f, lattice.grid)
    control.check_admissible()
    xi = terminal_values(lattice, phi)
    grid = lattice.grid
    dt = grid.dt
    slices = [None] * (grid.steps + 1)
    slices[grid.steps] = xi
    r_next = xi
    for i in range(grid.steps - 1, -1, -1):
        weights = control.step_weights(i)
        v = gather_children(lattice, i, r_next)
        e_mu = (weights * v).mean(axis=1)
        mu = control.process.slices[i]
        w_ctx = driver_context(lattice, f, i)
        t1 = grid.time(i + 1)
        if f.y_dependence == "none":
            g = _conjugate_slice(f, t1, w_ctx, np.zeros_like(e_mu), mu, conjugate_mode)
            r = e_mu - g * dt
        else:
            r = np.full_like(e_mu, -np.inf)
            g0 = _conjugate_slice(f, t1, w_ctx, e_mu, mu, conjugate_mode)
            live = np.isfinite(e_mu) & np.isfinite(g0)
            if live.any():
                rl = e_mu[live] - g0[live] * dt
                mul = mu[live]
                wl = None if w_ctx is None else w_ctx[live]
                el = e_mu[live]
                iters = 1
                while True:
                    g = _conjugate_slice(f, t1, wl, rl, mul, conjugate_mode)
                    r_new = el - g * dt
                    iters += 1
                    step = float(np.max(np.abs(r_new - rl)))
                    rl = r_new
                    if step <= 0.25 * tol or iters >= max_iter:
                        break
                g = _conjugate_slice(f, t1, wl, rl, mul, conjugate_mode)
                resid = float(np.max(np.abs(rl - (el - g * dt))))
                if resid > tol:
                    raise ConvergenceError(
                        "dual implicit step at slice %d stuck at residual %.3g" % (i, resid),
                        residual=resid,
                        iterations=iters,
                    )
                r[live] = rl
        slices[i] = r
        r_next = r
    return left_process(lattice, slices)


def optimal_control(sol: SolutionTriple, f: DriverSpec) -> ControlProcess:
    """Subgradient control mu*_i = a z-subgradient of the driver at (Y_i, Z_i).

    Raises OptimizerAdmissibilityError when some one-step weight 1 + mu.dW
    drops to zero or below, naming a step count at which the same tilt sizes
    would be admissible.
    """
    lat = sol.lattice
    grid = lat.grid
    slices = []
    for i in range(lat.steps):
        y = sol.Y.slices[i]
        z = sol.Z.slices[i]
        w_ctx = driver_context(lat, f, i)
        t1 = grid.time(i + 1)
        if f.analytic_subgradient is not None:
            mu = np.asarray(f.analytic_subgradient(t1, w_ctx, y, z), dtype=float)
            mu = np.broadcast_to(mu, z.shape).copy()
        else:
            mu = np.empty_like(z)
            for k in range(z.shape[0]):
                wk = None if w_ctx is None else w_ctx[k]
                mu[k] = subgradient(f, t1, wk, float(y[k]), z[k], validate=False)
        slices.append(mu)
    control = ControlProcess(predictable_process(lat, slices))
    margin = control.admissibility_margin()
    if margin <= 0.0:
        worst_l1 = max(float(np.max(np.abs(s).sum(axis=1))) for s in slices)
        required = int(math.floor(grid.horizon * worst_l1 * worst_l1)) + 1
        raise OptimizerAdmissibilityError(
            "subgradient control drives a one-step weight to %.3g <= 0; "
            "the same tilt sizes fit on N >= %d steps" % (margin, required),
            required_steps=required,
        )
    return control


def random_admissible_control(
    lattice: PathLattice, rng: np.random.Generator, cap: float = math.inf
) -> ControlProcess:
    """Uniform random predictable control kept strictly admissible by scale.

    Component magnitudes stay below 0.9 / (d sqrt(dt)) so every one-step
    weight is at least 0.1; cap further limits the sup norm.
    """
    scale = min(0.9 / (lattice.dim * lattice.grid.sqrt_dt), cap)
    slices = [
        rng.uniform(-scale, scale, size=(lattice.node_count(i), lattice.dim))
        for i in range(lattice.steps)
    ]
    return ControlProcess(predictable_process(lattice, slices))


@dataclass
class DualityReport:
    root_primal: float
    root_dual: float
    root_gap: float
    min_gap: float
    max_gap: float
    margin: float

    @property
    def weakly_consistent(self) -> bool:
        return self.min_gap >= -1e-9


def duality_gap(
    sol: SolutionTriple, candidate: AdaptedProcess, control: ControlProcess
) -> DualityReport:
    """Nodewise primal-minus-dual gaps; min_gap below -1e-9 would refute weak duality."""
    min_gap = math.inf
    max_gap = -math.inf
    for ys, rs in zip(sol.Y.slices, candidate.slices):
        gap = ys - rs
        min_gap = min(min_gap, float(np.min(gap)))
        max_gap = max(max_gap, float(np.max(gap)))
    return DualityReport(
        root_primal=sol.y0,
        root_dual=float(candidate.slices[0][0]),
        root_gap=sol.y0 - float(candidate.slices[0][0]),
        min_gap=min_gap,
        max_gap=max_gap,
        margin=control.admissibility_margin(),
    )


def comparison_minimum(low: SolutionTriple, high: SolutionTriple) -> float:
    """min over nodes of high Y minus low Y (>= 0 when comparison applies)."""
    worst = math.inf
    for lo, hi in zip(low.Y.slices, high.Y.slices):
        worst = min(worst, float(np.min(hi - lo)))
    return worst


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def export_duality_csv(
    sol: SolutionTriple, candidate: AdaptedProcess, control: ControlProcess, fileobj
):
    """Rows node_id,primal,dual,gap,margin with node_id as slice:index.

    margin is the smallest one-step weight at the node's deciding step,
    empty on the last slice where no further step is taken.
    """
    fileobj.write("node_id,primal,dual,gap,margin\n")
    lat = sol.lattice
    for i in range(lat.steps + 1):
        y = sol.Y.slices[i]
        r = candidate.slices[i]
        if i < lat.steps:
            margins = control.step_weights(i).min(axis=1)
        else:
            margins = None
        for k in range(y.shape[0]):
            row = [
                "%d:%d" % (i, k),
                _fmt(y[k]),
                _fmt(r[k]),
                _fmt(y[k] - r[k]),
                _fmt(margins[k]) if margins is not None else "",
            ]
            fileobj.write(",".join(row) + "\n")


def duality_summary(report: DualityReport) -> dict:
    return {
        "root_primal": report.root_primal,
        "root_dual": report.root_dual,
        "root_gap": report.root_gap,
        "min_gap": report.min_gap,
        "max_gap": report.max_gap,
        "margin": report.margin,
        "weakly_consistent": report.weakly_consistent,
    }
