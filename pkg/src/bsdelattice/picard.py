"""Explicit Picard iteration toward the implicit backward solution.

One sweep freezes the driver at the previous iterate, accumulates it forward
into the terminal, and reads the next iterate off the martingale
representation of that accumulated terminal: h_N carries xi plus the driver
sum, conditional means walk h backward, and the projection of each h slice
yields the new control and orthogonal increments.  Subtracting the
accumulated sum recovers the new value process.

The iteration stops when either the triple distance to the previous iterate
(value sup + control path-l2 + martingale sup) or the implicit-equation
residual of the new iterate drops strictly below tol.  The residual branch is
what lets driver-free problems finish after a single sweep.

The forward accumulation is path-resolved, so this module requires full-path
lattices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .drivers import DriverSpec, TerminalFunctional, average_driver
from .errors import ConvergenceError, StructuralError
from .lattice import PathLattice
from .probability import left_process, martingale_projection, predictable_process
from .solver import (
    SolutionTriple,
    SolveInfo,
    check_step_size,
    driver_context,
    terminal_values,
)


@dataclass
class PicardState:
    p: int
    Y: list
    Z: list
    dm: list
    residual: float


@dataclass
class TraceRow:
    p: int
    dY_sup: float
    dZ_l2: float
    dM_sup: float

    @property
    def total(self) -> float:
        return self.dY_sup + self.dZ_l2 + self.dM_sup


@dataclass
class PicardResult:
    solution: SolutionTriple
    trace: list
    iterations: int
    converged: bool = True

    @property
    def final_residual(self) -> float:
        return self.solution.info.residual_max


def zero_state(lattice: PathLattice) -> PicardState:
    Y = [np.zeros(lattice.node_count(i)) for i in range(lattice.steps + 1)]
    Z = [np.zeros((lattice.node_count(i), lattice.dim)) for i in range(lattice.steps)]
    dm = [
        np.zeros((lattice.node_count(i), lattice.n_choices))
        for i in range(lattice.steps)
    ]
    return PicardState(p=0, Y=Y, Z=Z, dm=dm, residual=np.inf)


def _driver_slice(lattice, f, i, y, z):
    w_ctx = driver_context(lattice, f, i)
    return np.asarray(average_driver(f, lattice.grid, i, w_ctx, y, z), dtype=float)


def picard_step(
    lattice: PathLattice, f: DriverSpec, xi: np.ndarray, state: PicardState
) -> PicardState:
    """One sweep: accumulate the old driver forward, project backward."""
    grid = lattice.grid
    dt = grid.dt
    nch = lattice.n_choices
    F = [np.zeros(1)]
    fvals = []
    for i in range(grid.steps):
        fv = _driver_slice(lattice, f, i, state.Y[i], state.Z[i])
        fvals.append(fv)
        F.append(np.repeat(F[i] + fv * dt, nch))
    h = xi + F[grid.steps]
    Y = [None] * (grid.steps + 1)
    Z = [None] * grid.steps
    dm = [None] * grid.steps
    Y[grid.steps] = xi
    for i in range(grid.steps - 1, -1, -1):
        mean, z, dmi = martingale_projection(lattice, i, h)
        Z[i] = z
        dm[i] = dmi
        h = mean
        Y[i] = h - F[i]
    # residual of the new iterate in the implicit one-step equation
    resid = 0.0
    for i in range(grid.steps):
        fv_new = _driver_slice(lattice, f, i, Y[i], Z[i])
        mean_new = Y[i + 1].reshape(-1, nch).mean(axis=1)
        resid = max(resid, float(np.max(np.abs(Y[i] - mean_new - fv_new * dt))))
    return PicardState(p=state.p + 1, Y=Y, Z=Z, dm=dm, residual=resid)


def iteration_distance(lattice: PathLattice, old: PicardState, new: PicardState):
    """(value sup, control path-l2, martingale sup) distance between iterates."""
    dt = lattice.grid.dt
    nch = lattice.n_choices
    dy = max(
        float(np.max(np.abs(a - b))) for a, b in zip(old.Y, new.Y)
    )
    acc = np.zeros(1)
    for i in range(lattice.steps):
        dz2 = ((old.Z[i] - new.Z[i]) ** 2).sum(axis=1) * dt
        acc = np.repeat(acc + dz2, nch)
    dz = float(np.sqrt(np.max(acc))) if lattice.steps else 0.0
    cum = np.zeros(1)
    dmsup = 0.0
    for i in range(lattice.steps):
        cum = np.repeat(cum, nch) + (old.dm[i] - new.dm[i]).ravel()
        dmsup = max(dmsup, float(np.max(np.abs(cum))))
    return dy, dz, dmsup


def picard_solve(
    lattice: PathLattice,
    f: DriverSpec,
    phi: TerminalFunctional,
    tol: float = 1e-10,
    max_p: int = 200,
) -> PicardResult:
    """Iterate from the zero triple until the stopping rule fires.

    Raises ConvergenceError when neither the triple distance nor the implicit
    residual gets strictly below tol within max_p sweeps (a tol of 0 can
    never be reached and always exhausts the budget).
    """
    if lattice.mode != "full":
        raise StructuralError("picard iteration needs a full-path lattice")
    check_step_size(f, lattice.grid)
    xi = terminal_values(lattice, phi)
    state = zero_state(lattice)
    trace = []
    for _ in range(max_p):
        new = picard_step(lattice, f, xi, state)
        dy, dz, dmsup = iteration_distance(lattice, state, new)
        trace.append(TraceRow(p=new.p, dY_sup=dy, dZ_l2=dz, dM_sup=dmsup))
        state = new
        if dy + dz + dmsup < tol or new.residual < tol:
            info = SolveInfo(
                iterations_max=new.p,
                residual_max=new.residual,
                driver_name=f.name,
                terminal_name=phi.name,
            )
            sol = SolutionTriple(
                lattice=lattice,
                Y=left_process(lattice, state.Y),
                Z=predictable_process(lattice, state.Z),
                dm=state.dm,
                info=info,
            )
            return PicardResult(solution=sol, trace=trace, iterations=new.p)
    raise ConvergenceError(
        "picard iteration did not reach tol=%.3g in %d sweeps "
        "(last residual %.3g)" % (tol, max_p, state.residual),
        residual=state.residual,
        iterations=max_p,
    )


def export_picard_trace_csv(result: PicardResult, fileobj):
    fileobj.write("p,dY_sup,dZ_l2,dM_sup\n")
    for row in result.trace:
        fileobj.write(
            "%d,%s,%s,%s\n"
            % (
                row.p,
                format(row.dY_sup, ".17g"),
                format(row.dZ_l2, ".17g"),
                format(row.dM_sup, ".17g"),
            )
        )
