"""Inf-convolution ladders, Cauchy ladders, and grid refinement."""

import io
import math

import numpy as np
import pytest

from bsdelattice.approximation import (
    ApproximationLadder,
    export_ladder_csv,
    export_refinement_csv,
    inf_convolution,
    monotone_limit_experiment,
    refinement_experiment,
    uniform_limit_experiment,
)
from bsdelattice.drivers import make_driver, make_terminal, scale_terminal
from bsdelattice.errors import GridError
from bsdelattice.lattice import build_lattice


def test_digital_regularization_recovers_closed_form_exactly():
    lat = build_lattice(8, dim=1)
    paths = lat.leaf_paths()
    digital = make_terminal("digital")
    for n in (1, 2, 4):
        for pool in (None, paths):
            phi_n = inf_convolution(digital, n, pool=pool)
            got = phi_n.evaluate(paths)
            w_t = paths[:, -1, 0]
            want = np.minimum(1.0, n * np.maximum(w_t, 0.0))
            assert np.array_equal(got, want), (n, pool is None)


def test_regularization_is_exactly_monotone_in_level():
    rng = np.random.default_rng(5)
    paths = rng.normal(size=(40, 6, 2))
    for name in ("digital", "maxpath", "clipped-endpoint"):
        phi = make_terminal(name)
        prev = None
        for n in (1, 2, 4, 8):
            vals = inf_convolution(phi, n).evaluate(paths)
            if prev is not None:
                assert np.all(vals >= prev)
            prev = vals


def test_regularization_never_exceeds_original():
    rng = np.random.default_rng(9)
    paths = rng.normal(size=(30, 5, 1))
    phi = make_terminal("maxpath")
    raw = phi.evaluate(paths)
    for n in (1, 4, 16):
        assert np.all(inf_convolution(phi, n).evaluate(paths) <= raw + 1e-15)


def test_markov_map_agrees_with_path_evaluation():
    lat = build_lattice(6, dim=1)
    paths = lat.leaf_paths()
    phi_n = inf_convolution(make_terminal("digital"), 3)
    assert phi_n.markovian
    assert np.array_equal(
        phi_n.terminal_map(paths[:, -1, :]), phi_n.evaluate(paths)
    )
    pooled = inf_convolution(make_terminal("digital"), 3, pool=paths)
    assert not pooled.markovian


def test_inf_convolution_guards():
    phi = make_terminal("digital")
    with pytest.raises(GridError):
        inf_convolution(phi, 0)
    with pytest.raises(GridError):
        inf_convolution(phi, 1, pool=np.zeros((2 ** 12 + 1, 3, 1)))


def test_monotone_ladder_on_digital_terminal():
    lat = build_lattice(8, dim=1)
    ladder = monotone_limit_experiment(
        lat, make_driver("quadratic"), make_terminal("digital")
    )
    assert isinstance(ladder, ApproximationLadder)
    assert ladder.monotone
    assert ladder.increments_decreasing
    assert ladder.rows[0].sup_increment is None
    assert all(r.bmo > 0.0 for r in ladder.rows)
    for lo, hi in zip(ladder.solutions, ladder.solutions[1:]):
        for a, b in zip(lo.Y.slices, hi.Y.slices):
            assert np.min(b - a) >= -1e-12
    nopool = monotone_limit_experiment(
        lat, make_driver("quadratic"), make_terminal("digital"), use_pool=False
    )
    assert nopool.monotone


def test_uniform_ladder_cauchy_bound():
    lat = build_lattice(6, dim=1)
    base = make_terminal("clipped-endpoint")
    terminals = [scale_terminal(base, s) for s in (0.2, 0.4, 0.6, 0.8, 1.0)]
    ladder = uniform_limit_experiment(lat, make_driver("abs"), terminals)
    assert ladder.cauchy_uniform
    gaps = [r.terminal_gap for r in ladder.rows[1:]]
    assert gaps == pytest.approx([0.2] * 4, abs=1e-12)


def test_refinement_toward_linear_closed_form():
    study = refinement_experiment(
        make_driver("linear:1,1"),
        make_terminal("const:1"),
        (10, 50, 100),
        reference=2.0 * math.e - 1.0,
    )
    assert study.errors_decreasing
    assert study.rows[-1][2] < study.rows[0][2] / 5
    assert 0.7 < study.fitted_order < 1.3


def test_refinement_with_exact_solution_leaves_order_nan():
    study = refinement_experiment(
        make_driver("zero"),
        make_terminal("const:1"),
        (4, 8),
        reference=1.0,
        mode="full",
    )
    assert math.isnan(study.fitted_order)


def test_ladder_and_refinement_csv_layouts():
    lat = build_lattice(6, dim=1)
    ladder = monotone_limit_experiment(
        lat, make_driver("quadratic"), make_terminal("digital"), levels=(1, 2)
    )
    buf = io.StringIO()
    export_ladder_csv(ladder, buf)
    lines = buf.getvalue().strip().split("\n")
    assert lines[0] == "level,Y0,sup_increment,bmo,cauchy_bound_ok"
    assert len(lines) == 3
    assert lines[1].startswith("n=1,")
    assert lines[1].split(",")[2] == ""
    assert lines[2].split(",")[4] in ("0", "1")
    study = refinement_experiment(
        make_driver("linear:1,1"), make_terminal("const:1"), (10, 20), reference=2.0 * math.e - 1.0
    )
    buf2 = io.StringIO()
    export_refinement_csv(study, buf2)
    lines2 = buf2.getvalue().strip().split("\n")
    assert lines2[0] == "N,Y0,error,fitted_order"
    assert len(lines2) == 3
    assert lines2[1].split(",")[0] == "10"
    buf3 = io.StringIO()
    export_refinement_csv(study, buf3)
    assert buf3.getvalue() == buf2.getvalue()
