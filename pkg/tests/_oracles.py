"""Independent numerical oracles shared by the test modules."""

import numpy as np


def central_grad(f, theta, h=1e-5, order=4):
    """Central finite-difference gradient of scalar ``f`` at ``theta``.

    ``order=2`` is the plain two-point stencil, ``order=4`` the five-point one.
    """
    theta = np.asarray(theta, dtype=np.float64)
    g = np.empty_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = h
        if order == 2:
            g[i] = (f(theta + e) - f(theta - e)) / (2 * h)
        else:
            g[i] = (8 * (f(theta + e) - f(theta - e)) - (f(theta + 2 * e) - f(theta - 2 * e))) / (12 * h)
    return g


def central_derivative(f, x, order, h):
    """``order``-th derivative of scalar ``f`` at ``x`` with a sixth-order stencil."""
    stencils = {
        1: [-1 / 60, 3 / 20, -3 / 4, 0, 3 / 4, -3 / 20, 1 / 60],
        2: [1 / 90, -3 / 20, 3 / 2, -49 / 18, 3 / 2, -3 / 20, 1 / 90],
        3: [-7 / 240, 3 / 10, -169 / 120, 61 / 30, 0, -61 / 30, 169 / 120, -3 / 10, 7 / 240],
        4: [7 / 240, -2 / 5, 169 / 60, -122 / 15, 91 / 8, -122 / 15, 169 / 60, -2 / 5, 7 / 240],
    }
    c = stencils[order]
    half = len(c) // 2
    return sum(ck * f(x + (k - half) * h) for k, ck in enumerate(c)) / h ** order


def fd_partial(f, x, alpha, h=1e-3):
    """Mixed partial ``d^alpha f`` at point ``x`` by nesting 1-D stencils."""
    x = np.asarray(x, dtype=np.float64)

    def along(g, axis, order):
        if order == 0:
            return g
        e = np.zeros_like(x)
        e[axis] = 1.0
        return lambda y: central_derivative(lambda t: g(y + t * e), 0.0, order, h)

    g = f
    for axis, order in enumerate(alpha):
        g = along(g, axis, order)
    return g(x)


def allclose_rel_abs(a, b, rtol, atol):
    a, b = np.asarray(a), np.asarray(b)
    return bool(np.all(np.abs(a - b) <= atol + rtol * np.abs(b)))
