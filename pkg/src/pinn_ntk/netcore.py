"""Two-layer scalar networks with ``N**-s`` output scaling.

The network is

    q(x) = N**-s * sum_k W1[k] * sigma(W0[k] . x + b0[k]) + b1

and everything here is closed form: spatial derivatives of any multi-index
order and their gradients with respect to every parameter. All routines are
vectorised over a batch of points ``X`` of shape ``(n, d)``.

Parameters are flattened as ``[W0 (row-major), b0, W1, b1]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Mapping

import numpy as np
from numpy.polynomial import polynomial as P

from .errors import InvalidArgument, UnsupportedOrder

MAX_ACT_ORDER = 8

SCHEMES = ("weights-normal-biases-zero", "all-normal")

# stream ids for the per-field Philox generators
_FIELD_W0, _FIELD_B0, _FIELD_W1, _FIELD_B1 = range(4)


class MultiIndex(tuple):
    """Per-dimension derivative orders, e.g. ``MultiIndex((3, 0))`` is q_xxx."""

    def __new__(cls, orders):
        orders = tuple(int(o) for o in orders)
        if any(o < 0 for o in orders):
            raise InvalidArgument(f"negative derivative order in {orders}")
        return super().__new__(cls, orders)

    @property
    def orders(self) -> tuple:
        return tuple(self)

    @property
    def total(self) -> int:
        return sum(self)

    @classmethod
    def zero(cls, dim: int) -> "MultiIndex":
        return cls((0,) * dim)

    def lowered(self, axis: int) -> "MultiIndex":
        o = list(self)
        o[axis] -= 1
        return MultiIndex(o)

    def __repr__(self):
        return f"MultiIndex({tuple(self)})"


# ---------------------------------------------------------------------------
# activations


def _tanh_polynomials(max_order: int) -> list[np.ndarray]:
    # sigma^(k)(u) = P_k(tanh u);  P_0(v) = v,  P_{k+1} = P_k'(v) * (1 - v^2)
    polys = [np.array([0.0, 1.0])]
    one_minus_v2 = np.array([1.0, 0.0, -1.0])
    for _ in range(max_order):
        polys.append(P.polymul(P.polyder(polys[-1]), one_minus_v2))
    return polys


_TANH_POLYS = _tanh_polynomials(MAX_ACT_ORDER)


def _tanh_derivatives(z: np.ndarray, orders: Iterable[int]) -> dict[int, np.ndarray]:
    v = np.tanh(z)
    return {k: P.polyval(v, _TANH_POLYS[k]) for k in orders}


# name -> callable(z, orders) returning {order: sigma^(order)(z)}
ACTIVATIONS: dict[str, Callable[[np.ndarray, Iterable[int]], dict]] = {
    "tanh": _tanh_derivatives,
}


def _check_order(order: int) -> None:
    if order < 0 or order > MAX_ACT_ORDER:
        raise UnsupportedOrder(
            f"activation derivative of order {order} requested; max is {MAX_ACT_ORDER}"
        )


def activation_derivs(activation: str, orders: Iterable[int], z) -> dict[int, np.ndarray]:
    orders = sorted(set(int(k) for k in orders))
    for k in orders:
        _check_order(k)
    try:
        fn = ACTIVATIONS[activation]
    except KeyError:
        raise InvalidArgument(f"unknown activation {activation!r}") from None
    return fn(np.asarray(z, dtype=np.float64), orders)


def activation_deriv(activation: str, order: int, u):
    """Return ``sigma^(order)(u)``; scalar in, scalar out."""
    _check_order(order)
    out = activation_derivs(activation, [order], u)[order]
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# parameters


@dataclass
class NetworkParams:
    W0: np.ndarray
    b0: np.ndarray
    W1: np.ndarray
    b1: float
    s: float
    activation: str = "tanh"

    def __post_init__(self):
        self.W0 = np.atleast_2d(np.asarray(self.W0, dtype=np.float64))
        self.b0 = np.asarray(self.b0, dtype=np.float64).reshape(-1)
        self.W1 = np.asarray(self.W1, dtype=np.float64).reshape(-1)
        self.b1 = float(self.b1)
        self.s = float(self.s)
        n = self.W0.shape[0]
        if self.b0.shape != (n,) or self.W1.shape != (n,):
            raise InvalidArgument("W0, b0 and W1 disagree on the width")

    @property
    def width(self) -> int:
        return self.W0.shape[0]

    @property
    def input_dim(self) -> int:
        return self.W0.shape[1]

    @property
    def param_count(self) -> int:
        return self.width * (self.input_dim + 2) + 1

    @property
    def scale(self) -> float:
        return self.width ** (-self.s)

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.W0.ravel(), self.b0, self.W1, [self.b1]])

    def with_flat(self, theta: np.ndarray) -> "NetworkParams":
        """New params with the same shape/s/activation and values from ``theta``."""
        N, d = self.W0.shape
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.param_count,):
            raise InvalidArgument(f"expected {self.param_count} parameters, got {theta.shape}")
        return NetworkParams(
            W0=theta[: N * d].reshape(N, d).copy(),
            b0=theta[N * d : N * d + N].copy(),
            W1=theta[N * d + N : N * d + 2 * N].copy(),
            b1=float(theta[-1]),
            s=self.s,
            activation=self.activation,
        )

    def copy(self) -> "NetworkParams":
        return self.with_flat(self.flatten())


def derive_seed(master: int, *keys: int) -> int:
    """Deterministic 63-bit child seed for a (master, key...) cell."""
    ss = np.random.SeedSequence(int(master) & 0xFFFFFFFFFFFFFFFF,
                                spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def _field_rng(seed: int, field_id: int) -> np.random.Generator:
    key = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, field_id])
    return np.random.Generator(np.random.Philox(key))


def make_params(width: int, input_dim: int, s: float,
                scheme: str = "weights-normal-biases-zero", seed: int = 0,
                activation: str = "tanh") -> NetworkParams:
    """Draw a network from standard normals.

    Each parameter field has its own Philox stream keyed by ``(seed, field)``
    and neurons are drawn in order, so for a fixed seed a wider network
    extends a narrower one rather than redrawing it.
    """
    if int(width) < 1 or int(input_dim) < 1:
        raise InvalidArgument(f"width and input_dim must be positive, got {width}, {input_dim}")
    if scheme not in SCHEMES:
        raise InvalidArgument(f"unknown init scheme {scheme!r}")
    if not np.isfinite(s):
        raise InvalidArgument("s must be finite")
    N, d = int(width), int(input_dim)
    W0 = _field_rng(seed, _FIELD_W0).standard_normal(N * d).reshape(N, d)
    W1 = _field_rng(seed, _FIELD_W1).standard_normal(N)
    if scheme == "all-normal":
        b0 = _field_rng(seed, _FIELD_B0).standard_normal(N)
        b1 = float(_field_rng(seed, _FIELD_B1).standard_normal())
    else:
        b0 = np.zeros(N)
        b1 = 0.0
    return NetworkParams(W0=W0, b0=b0, W1=W1, b1=b1, s=s, activation=activation)


# ---------------------------------------------------------------------------
# evaluation


def _as_points(X, d: int) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1) if X.shape[0] == d else X.reshape(-1, 1)
    if X.ndim != 2 or X.shape[1] != d:
        raise InvalidArgument(f"points must have {d} coordinates, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InvalidArgument("non-finite input point")
    return X


def _as_index(alpha, d: int) -> MultiIndex:
    alpha = MultiIndex(alpha)
    if len(alpha) != d:
        raise InvalidArgument(f"multi-index {tuple(alpha)} does not match input_dim {d}")
    if alpha.total > MAX_ACT_ORDER - 1:
        raise UnsupportedOrder(f"derivative order {alpha.total} exceeds {MAX_ACT_ORDER - 1}")
    return alpha


def _monomial(W0: np.ndarray, alpha) -> np.ndarray:
    """prod_j W0[:, j] ** alpha[j], one value per neuron."""
    out = np.ones(W0.shape[0])
    for j, a in enumerate(alpha):
        if a:
            out = out * W0[:, j] ** a
    return out


class NetworkEval:
    """Pre-activations and activation derivatives of a net on a batch of points.

    Build once, then read derivative values, Jacobian rows or
    vector-Jacobian products without recomputing ``sigma^(k)``.
    """

    def __init__(self, params: NetworkParams, X, orders: Iterable[int]):
        self.params = params
        self.X = _as_points(X, params.input_dim)
        self.Z = self.X @ params.W0.T + params.b0
        self.S = activation_derivs(params.activation, orders, self.Z)

    @classmethod
    def for_indices(cls, params, X, indices, gradients=True):
        orders = set()
        for a in indices:
            a = _as_index(a, params.input_dim)
            orders.add(a.total)
            if gradients:
                orders.add(a.total + 1)
        return cls(params, X, orders)

    def values(self, needed) -> dict:
        p = self.params
        out = {}
        for a in needed:
            a = _as_index(a, p.input_dim)
            v = (self.S[a.total] * _monomial(p.W0, a)) @ p.W1 * p.scale
            out[a] = v + p.b1 if a.total == 0 else v
        return out

    def _items(self, coeffs):
        n = self.X.shape[0]
        return [(_as_index(a, self.params.input_dim),
                 np.broadcast_to(np.asarray(c, dtype=np.float64), (n,)))
                for a, c in coeffs.items()]

    def jacobian(self, coeffs: Mapping) -> np.ndarray:
        p, X, S = self.params, self.X, self.S
        n, N, d = X.shape[0], p.width, p.input_dim
        gW0 = np.zeros((n, N, d))
        gb0 = np.zeros((n, N))
        gW1 = np.zeros((n, N))
        gb1 = np.zeros(n)
        for a, c in self._items(coeffs):
            mono = _monomial(p.W0, a)
            c = c[:, None]
            lo = c * S[a.total]
            hi = c * S[a.total + 1] * (p.W1 * mono)
            gb0 += hi
            gW1 += lo * mono
            gW0 += hi[:, :, None] * X[:, None, :]
            for l, al in enumerate(a):
                if al:
                    gW0[:, :, l] += lo * (p.W1 * al * _monomial(p.W0, a.lowered(l)))
            if a.total == 0:
                gb1 += c[:, 0]
        scale = p.scale
        return np.concatenate(
            [gW0.reshape(n, N * d) * scale, gb0 * scale, gW1 * scale, gb1[:, None]], axis=1)

    def vjp(self, coeffs: Mapping, v) -> np.ndarray:
        """``v @ jacobian(coeffs)`` without forming the Jacobian."""
        p, X, S = self.params, self.X, self.S
        N, d = p.width, p.input_dim
        v = np.asarray(v, dtype=np.float64)
        gW0 = np.zeros((N, d))
        gb0 = np.zeros(N)
        gW1 = np.zeros(N)
        gb1 = 0.0
        for a, c in self._items(coeffs):
            u = v * c
            mono = _monomial(p.W0, a)
            lo = u @ S[a.total]
            hiS = S[a.total + 1]
            wm = p.W1 * mono
            gb0 += (u @ hiS) * wm
            gW1 += lo * mono
            gW0 += ((u[:, None] * X).T @ hiS).T * wm[:, None]
            for l, al in enumerate(a):
                if al:
                    gW0[:, l] += lo * (p.W1 * al * _monomial(p.W0, a.lowered(l)))
            if a.total == 0:
                gb1 += float(u.sum())
        scale = p.scale
        return np.concatenate([gW0.ravel() * scale, gb0 * scale, gW1 * scale, [gb1]])


def derivatives(params: NetworkParams, X, needed: Iterable) -> dict[MultiIndex, np.ndarray]:
    """Values of every requested ``d^alpha q`` at each row of ``X``."""
    needed = list(needed)
    return NetworkEval.for_indices(params, X, needed, gradients=False).values(needed)


def forward(params: NetworkParams, x) -> float:
    x = _as_points(x, params.input_dim)
    val = derivatives(params, x, [MultiIndex.zero(params.input_dim)])
    return float(next(iter(val.values()))[0])


def partial_derivative(params: NetworkParams, x, alpha) -> float:
    x = _as_points(x, params.input_dim)
    return float(derivatives(params, x, [alpha])[MultiIndex(alpha)][0])


def jet(params: NetworkParams, x, needed: Iterable) -> dict[MultiIndex, float]:
    x = _as_points(x, params.input_dim)
    if x.shape[0] != 1:
        raise InvalidArgument("jet takes a single point; use derivatives() for batches")
    return {a: float(v[0]) for a, v in derivatives(params, x, needed).items()}


def derivative_jacobian(params: NetworkParams, X, coeffs: Mapping) -> np.ndarray:
    """Rows ``sum_alpha c_alpha(x) * grad_theta d^alpha q(x)`` for each point.

    ``coeffs`` maps multi-indices to a scalar or a per-point array. Returns an
    ``(n, P)`` matrix in the canonical flattening order.
    """
    return NetworkEval.for_indices(params, X, coeffs.keys()).jacobian(coeffs)


def grad_of_derivative(params: NetworkParams, x, alpha) -> np.ndarray:
    """Exact gradient of ``d^alpha q(x)`` with respect to the flattened parameters."""
    x = _as_points(x, params.input_dim)
    if x.shape[0] != 1:
        raise InvalidArgument("grad_of_derivative takes a single point")
    return derivative_jacobian(params, x, {MultiIndex(alpha): 1.0})[0]
