"""Independent brute-force reference implementations for the test suite.

Everything here is deliberately written without the package's array code:
plain dicts keyed by choice tuples, python floats, itertools enumeration.
Slow, small, and easy to audit by hand.
"""

import math
from itertools import product


def signs(choice, dim):
    return tuple(1.0 if ((choice >> (dim - 1 - k)) & 1) == 0 else -1.0 for k in range(dim))


def walk_path(choices, dim, dt):
    s = math.sqrt(dt)
    path = [tuple(0.0 for _ in range(dim))]
    for c in choices:
        sg = signs(c, dim)
        path.append(tuple(path[-1][k] + s * sg[k] for k in range(dim)))
    return path


def shifted_samples(path):
    """Driver w argument: path delayed by one grid slot, zero first."""
    return [tuple(0.0 for _ in path[0])] + list(path[:-1])


def brute_solve(steps, dim, horizon, f, phi, tol=1e-15, max_iter=500):
    """Reference backward solve by full enumeration.

    f(t, w_samples, y, z_tuple) -> float where w_samples is the shifted path
    up to the evaluation slice; phi(path) -> float on the raw walk path.
    Returns dicts Y (node tuple -> value), Z, dm keyed by edges, plus y0.
    """
    dt = horizon / steps
    s = math.sqrt(dt)
    nchoice = 2 ** dim
    Y = {}
    for choices in product(range(nchoice), repeat=steps):
        Y[choices] = float(phi(walk_path(choices, dim, dt)))
    Z = {}
    dm = {}
    for i in range(steps - 1, -1, -1):
        t_next = (i + 1) * dt
        for node in product(range(nchoice), repeat=i):
            children = [Y[node + (c,)] for c in range(nchoice)]
            mean = sum(children) / nchoice
            z = tuple(
                sum(v * signs(c, dim)[k] * s for c, v in enumerate(children))
                / (nchoice * dt)
                for k in range(dim)
            )
            for c, v in enumerate(children):
                sg = signs(c, dim)
                dm[node + (c,)] = v - mean - sum(z[k] * sg[k] * s for k in range(dim))
            # driver argument: shifted path sampled at grid times 0..i+1,
            # i.e. a leading zero followed by the walk values known so far
            w = [tuple(0.0 for _ in range(dim))] + walk_path(node, dim, dt)
            y = mean
            for _ in range(max_iter):
                y_new = mean + f(t_next, w, y, z) * dt
                if abs(y_new - y) <= tol * (1.0 + abs(y_new)):
                    y = y_new
                    break
                y = y_new
            Y[node] = y
            Z[node] = z
    return {"Y": Y, "Z": Z, "dm": dm, "y0": Y[()]}


def node_index(choices, dim):
    idx = 0
    for c in choices:
        idx = idx * (2 ** dim) + c
    return idx


def conditional_mean(values_by_node, node, steps, dim):
    """E[xi | node] for leaf values keyed by full choice tuples."""
    nchoice = 2 ** dim
    depth = steps - len(node)
    total = 0.0
    for tail in product(range(nchoice), repeat=depth):
        total += values_by_node[tuple(node) + tail]
    return total / nchoice ** depth
