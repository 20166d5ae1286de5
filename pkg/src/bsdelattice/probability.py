"""Processes on the lattice and the change-of-measure machinery.

Processes are stored slice-wise in node order.  A left process has a value at
every node of slices 0..N (constant on [t_i, t_{i+1}) pathwise); a predictable
process has its step-(i+1) value attached to the slice-i node that decides it
(constant on (t_i, t_{i+1}]), which makes predictability structural: the value
cannot vary across the 2**d children of a node.

The change of measure for a control mu multiplies each one-step transition by
1 + mu . dW; admissibility is the strict positivity of these weights on every
edge.  Per-path densities only exist in full-path mode and the measure-change
operations refuse recombining lattices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AdmissibilityError, GridError, StructuralError
from .lattice import PathLattice


@dataclass
class AdaptedProcess:
    """Slice-wise values on a lattice; timing is 'left' or 'predictable'."""

    lattice: PathLattice
    timing: str
    slices: list

    def __post_init__(self):
        if self.timing not in ("left", "predictable"):
            raise GridError("timing must be 'left' or 'predictable', got %r" % (self.timing,))
        n = self.lattice.steps
        want = n + 1 if self.timing == "left" else n
        if len(self.slices) != want:
            raise StructuralError(
                "%s process needs %d slices, got %d" % (self.timing, want, len(self.slices))
            )
        for i, arr in enumerate(self.slices):
            if arr.shape[0] != self.lattice.node_count(i):
                raise StructuralError(
                    "slice %d has %d values for %d nodes"
                    % (i, arr.shape[0], self.lattice.node_count(i))
                )

    def value(self, node):
        i, k = node
        return self.slices[i][k]

    def sup_norm(self) -> float:
        return max(float(np.max(np.abs(s))) if s.size else 0.0 for s in self.slices)


def left_process(lattice, slices) -> AdaptedProcess:
    return AdaptedProcess(lattice, "left", list(slices))


def predictable_process(lattice, slices) -> AdaptedProcess:
    return AdaptedProcess(lattice, "predictable", list(slices))


# -- one-step conditional expectations ---------------------------------------


def gather_children(lattice: PathLattice, i: int, child_values: np.ndarray) -> np.ndarray:
    """(n_i, 2**d, ...) view/copy of slice-(i+1) values arranged per parent."""
    if child_values.shape[0] != lattice.node_count(i + 1):
        raise StructuralError(
            "expected %d values on slice %d, got %d"
            % (lattice.node_count(i + 1), i + 1, child_values.shape[0])
        )
    if lattice.mode == "full":
        return child_values.reshape(
            (lattice.node_count(i), lattice.n_choices) + child_values.shape[1:]
        )
    return child_values[lattice.child_indices(i)]


def conditional_expectation(lattice: PathLattice, i: int, child_values: np.ndarray) -> np.ndarray:
    """E[X | node] over one step: slice-(i+1) values down to slice i."""
    return gather_children(lattice, i, child_values).mean(axis=1)


def martingale_projection(lattice: PathLattice, i: int, child_values: np.ndarray):
    """Decompose slice-(i+1) scalar values into mean, walk part, and remainder.

    Returns (mean, z, dm) with mean shape (n_i,), z shape (n_i, d) the
    conditional covariation with the increments divided by dt, and dm shape
    (n_i, 2**d) the per-edge remainder X - mean - z . dW, which has
    conditional mean zero and is conditionally orthogonal to every increment
    component by construction.
    """
    v = gather_children(lattice, i, child_values)
    if v.ndim != 2:
        raise StructuralError("martingale projection expects scalar slice values")
    mean = v.mean(axis=1)
    s = lattice.signs
    sqdt = lattice.grid.sqrt_dt
    z = v @ (s / (lattice.n_choices * sqdt))
    dm = v - mean[:, None] - z @ (s.T * sqdt)
    return mean, z, dm


# -- controls and densities --------------------------------------------------


class ControlProcess:
    """A predictable d-vector control mu with cached one-step edge weights.

    Weights are 1 + mu . dW per (parent node, choice); check_admissible
    raises AdmissibilityError naming the first offending path when any weight
    fails strict positivity.
    """

    def __init__(self, process: AdaptedProcess):
        if process.timing != "predictable":
            raise GridError("controls must be predictable processes")
        lat = process.lattice
        for i, arr in enumerate(process.slices):
            if arr.ndim != 2 or arr.shape[1] != lat.dim:
                raise StructuralError(
                    "control slice %d must have shape (n_%d, %d)" % (i, i, lat.dim)
                )
        self.process = process
        self.lattice = lat
        self._weights = None

    @classmethod
    def from_constant(cls, lattice: PathLattice, mu) -> "ControlProcess":
        mu = np.asarray(mu, dtype=float).reshape(-1)
        if mu.shape[0] != lattice.dim:
            raise GridError("constant control must have dimension %d" % lattice.dim)
        slices = [
            np.broadcast_to(mu, (lattice.node_count(i), lattice.dim)).copy()
            for i in range(lattice.steps)
        ]
        return cls(predictable_process(lattice, slices))

    def step_weights(self, i: int) -> np.ndarray:
        """(n_i, 2**d) edge weights 1 + mu . dW for step i+1."""
        if self._weights is None:
            self._weights = {}
        w = self._weights.get(i)
        if w is None:
            inc = self.lattice.step_increments()
            w = 1.0 + self.process.slices[i] @ inc.T
            self._weights[i] = w
        return w

    def check_admissible(self):
        lat = self.lattice
        for i in range(lat.steps):
            w = self.step_weights(i)
            bad = np.argwhere(~(w > 0.0))
            if bad.size:
                k, c = map(int, bad[0])
                label = lat.sign_label(i, k) if lat.mode == "full" else "node %d at %d" % (k, i)
                sign = "".join(
                    "-" if self.lattice.signs[c, b] < 0 else "+" for b in range(lat.dim)
                )
                raise AdmissibilityError(
                    "control inadmissible at step %d: weight %.6g on edge %s -> %s "
                    "(needs mu . dW > -1 on every path)" % (i + 1, float(w[k, c]), label, sign)
                )

    def admissibility_margin(self) -> float:
        """min over all edges of 1 + mu . dW (admissible iff > 0)."""
        return min(float(self.step_weights(i).min()) for i in range(self.lattice.steps))


def density(control: ControlProcess) -> np.ndarray:
    """Per-leaf density of P^mu against the walk measure, full-path mode only.

    The product of edge weights along each path; positive with mean one when
    the control is admissible (checked).
    """
    lat = control.lattice
    if lat.mode != "full":
        raise StructuralError("per-path densities need a full-path lattice")
    control.check_admissible()
    d = np.ones(1)
    for i in range(lat.steps):
        d = (d[:, None] * control.step_weights(i)).ravel()
    return d


def conditional_expectation_under(
    control: ControlProcess, leaf_values: np.ndarray, i: int = 0
) -> np.ndarray:
    """E^mu[X | node] for every node at slice i, X given on the leaves.

    Backward accumulation of weight-reweighted one-step means, renormalized by
    the conditional density mass (which is 1 up to rounding).
    """
    lat = control.lattice
    if lat.mode != "full":
        raise StructuralError("measure-change expectations need a full-path lattice")
    if leaf_values.shape != (lat.node_count(lat.steps),):
        raise StructuralError("leaf values must be a flat slice-%d array" % lat.steps)
    control.check_admissible()
    num = np.asarray(leaf_values, dtype=float)
    mass = np.ones_like(num)
    for j in range(lat.steps - 1, i - 1, -1):
        w = control.step_weights(j)
        num = (gather_children(lat, j, num) * w).mean(axis=1)
        mass = (gather_children(lat, j, mass) * w).mean(axis=1)
    return num / mass


def expectation_under_mu(control: ControlProcess, leaf_values: np.ndarray, node=(0, 0)) -> float:
    """E^mu[X | node] for one node; X given on the leaves."""
    i, k = node
    return float(conditional_expectation_under(control, leaf_values, i)[k])


@dataclass
class DriftCheckReport:
    passed: bool
    max_deviation: float
    density_mean: float
    min_weight: float

    def __str__(self):
        return (
            "drifted walk %s: max |E^mu[dW - mu dt | node]| = %.3g, "
            "density mean %.15g, min edge weight %.3g"
            % ("martingale" if self.passed else "NOT a martingale",
               self.max_deviation, self.density_mean, self.min_weight)
        )


def drifted_walk_check(control: ControlProcess, tol: float = 1e-12) -> DriftCheckReport:
    """Verify W - integral of mu dt is a martingale under P^mu at every node.

    Checks the compensated one-step conditional means under the reweighted
    kernel, plus density positivity and unit mean.
    """
    lat = control.lattice
    if lat.mode != "full":
        raise StructuralError("the drifted-walk check needs a full-path lattice")
    control.check_admissible()
    inc = lat.step_increments()
    dt = lat.grid.dt
    worst = 0.0
    for i in range(lat.steps):
        w = control.step_weights(i)
        mass = w.mean(axis=1)
        mu = control.process.slices[i]
        # E^mu[dW^k - mu^k dt | node] for every component
        comp = (w @ inc) / (lat.n_choices * mass[:, None]) - mu * dt
        worst = max(worst, float(np.max(np.abs(comp))))
    dens = density(control)
    p = lat.slice_probabilities(lat.steps)
    dmean = float(dens @ p)
    return DriftCheckReport(
        passed=bool(worst <= tol and dens.min() > 0.0 and abs(dmean - 1.0) <= 1e-9),
        max_deviation=worst,
        density_mean=dmean,
        min_weight=float(control.admissibility_margin()),
    )
