"""PINN problems, Jacobians and neural tangent kernels.

The kernel over a sample set is ``K = J J^T`` where the first ``n_f`` rows
of ``J`` are ``grad_theta F[q]`` at interior points and the remaining rows
are gradients of the constraint functionals. Gradient flow on the weighted
loss moves the residual vector by ``-K diag(w) r`` with ``w`` equal to
``alpha`` on residual columns and ``beta`` on constraint columns.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence, Union

import numpy as np

from .errors import InvalidArgument, IterationLimit, UnsupportedConfiguration
from .netcore import (
    MultiIndex,
    NetworkParams,
    activation_derivs,
    derivative_jacobian,
    derivatives,
    derive_seed,
    make_params,
)
from .opspec import OperatorSpec, residual_jacobian

ROLE_SAMPLES = 1
ROLE_PARAMS = 2

SWEEP_CSV_HEADER = ("experiment", "s", "repeat", "width", "k_interval", "norm2")


# ---------------------------------------------------------------------------
# constraints and problems


@dataclass(frozen=True)
class DerivativeMatch:
    """Row enforcing ``d^m q(point) = target``."""
    point: tuple
    m: MultiIndex
    target: float


@dataclass(frozen=True)
class PeriodicPair:
    """Row enforcing ``q(point_a) = q(point_b)``."""
    point_a: tuple
    point_b: tuple


Constraint = Union[DerivativeMatch, PeriodicPair]


@dataclass
class DerivativeMatchFamily:
    """Constraint rows sampled uniformly from the box ``[lo, hi]``.

    Axes with ``lo == hi`` are pinned, e.g. ``t = 0`` for an initial condition.
    """
    count_key: str
    lo: Sequence[float]
    hi: Sequence[float]
    m: MultiIndex
    target: Callable[[np.ndarray], np.ndarray]

    def sample(self, rng: np.random.Generator, count: int) -> list:
        lo, hi = np.asarray(self.lo, float), np.asarray(self.hi, float)
        pts = lo + (hi - lo) * rng.random((count, lo.size))
        g = np.asarray(self.target(pts), dtype=np.float64).reshape(count)
        m = MultiIndex(self.m)
        return [DerivativeMatch(tuple(p), m, float(v)) for p, v in zip(pts, g)]


@dataclass
class PeriodicFamily:
    """Pairs ``(.., a_value, ..)`` / ``(.., b_value, ..)`` along ``axis``.

    The remaining coordinates are drawn uniformly from ``[lo, hi]``.
    """
    count_key: str
    axis: int
    a_value: float
    b_value: float
    lo: Sequence[float]
    hi: Sequence[float]

    def sample(self, rng: np.random.Generator, count: int) -> list:
        lo, hi = np.asarray(self.lo, float), np.asarray(self.hi, float)
        pts = lo + (hi - lo) * rng.random((count, lo.size))
        a, b = pts.copy(), pts.copy()
        a[:, self.axis] = self.a_value
        b[:, self.axis] = self.b_value
        return [PeriodicPair(tuple(pa), tuple(pb)) for pa, pb in zip(a, b)]


@dataclass
class ProblemSpec:
    domain_lo: Sequence[float]
    domain_hi: Sequence[float]
    operator: OperatorSpec
    families: list = field(default_factory=list)
    alpha: float = 1.0
    beta: float = 1.0
    name: str = ""
    default_counts: dict = field(default_factory=dict)

    def __post_init__(self):
        self.domain_lo = tuple(float(v) for v in self.domain_lo)
        self.domain_hi = tuple(float(v) for v in self.domain_hi)
        if len(self.domain_lo) != self.operator.input_dim:
            raise InvalidArgument("domain dimension does not match the operator")
        if not (self.alpha > 0 and self.beta > 0):
            raise InvalidArgument("loss weights alpha and beta must be positive")

    @property
    def input_dim(self) -> int:
        return len(self.domain_lo)

    def sample(self, counts: Optional[Mapping[str, int]] = None, seed: int = 0) -> "SampleSet":
        """Uniform interior points followed by every family's rows, in order."""
        c = dict(self.default_counts)
        c.update(counts or {})
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(
            [int(seed) & 0xFFFFFFFFFFFFFFFF, ROLE_SAMPLES])))
        lo, hi = np.asarray(self.domain_lo), np.asarray(self.domain_hi)
        interior = lo + (hi - lo) * rng.random((int(c.get("n_f", 0)), lo.size))
        rows = []
        for fam in self.families:
            rows.extend(fam.sample(rng, int(c.get(fam.count_key, 0))))
        return SampleSet(interior=interior, constraints=rows, seed=seed)


@dataclass
class SampleSet:
    interior: np.ndarray
    constraints: list
    seed: Optional[int] = None

    def __post_init__(self):
        self.interior = np.asarray(self.interior, dtype=np.float64)
        if self.interior.size == 0 and self.interior.ndim != 2:
            self.interior = np.zeros((0, 0))
        elif self.interior.ndim == 1:
            self.interior = self.interior.reshape(-1, 1)
        self.constraints = list(self.constraints)
        self._groups = None

    @property
    def n_f(self) -> int:
        return self.interior.shape[0]

    @property
    def n_b(self) -> int:
        return len(self.constraints)

    @property
    def n_rows(self) -> int:
        return self.n_f + self.n_b

    def groups(self):
        """Constraint rows batched by kind.

        Yields ``(row_positions, kind, m, points_a, points_b, targets)``;
        positions index into the constraint block.
        """
        if self._groups is None:
            buckets: dict = {}
            for i, c in enumerate(self.constraints):
                key = ("match", c.m) if isinstance(c, DerivativeMatch) else ("periodic", None)
                buckets.setdefault(key, []).append(i)
            out = []
            for (kind, m), idx in buckets.items():
                cs = [self.constraints[i] for i in idx]
                if kind == "match":
                    pa = np.array([c.point for c in cs], dtype=np.float64)
                    out.append((np.array(idx), kind, m, pa, None,
                                np.array([c.target for c in cs], dtype=np.float64)))
                else:
                    pa = np.array([c.point_a for c in cs], dtype=np.float64)
                    pb = np.array([c.point_b for c in cs], dtype=np.float64)
                    out.append((np.array(idx), kind, None, pa, pb, None))
            self._groups = out
        return self._groups


def constraint_values(params: NetworkParams, samples: SampleSet) -> np.ndarray:
    """Constraint residuals ``d^m q - g`` or ``q(a) - q(b)`` in row order."""
    out = np.zeros(samples.n_b)
    zero = MultiIndex.zero(params.input_dim)
    for pos, kind, m, pa, pb, g in samples.groups():
        if kind == "match":
            out[pos] = derivatives(params, pa, [m])[m] - g
        else:
            out[pos] = derivatives(params, pa, [zero])[zero] - derivatives(params, pb, [zero])[zero]
    return out


def constraint_jacobian(params: NetworkParams, samples: SampleSet) -> np.ndarray:
    J = np.zeros((samples.n_b, params.param_count))
    zero = MultiIndex.zero(params.input_dim)
    for pos, kind, m, pa, pb, _ in samples.groups():
        if kind == "match":
            J[pos] = derivative_jacobian(params, pa, {m: 1.0})
        else:
            J[pos] = (derivative_jacobian(params, pa, {zero: 1.0})
                      - derivative_jacobian(params, pb, {zero: 1.0}))
    return J


def assemble_jacobian(params: NetworkParams, problem: ProblemSpec,
                      samples: SampleSet) -> np.ndarray:
    """Stacked ``(n_f + n_b, P)`` Jacobian: residual rows, then constraint rows."""
    parts = []
    if samples.n_f:
        parts.append(residual_jacobian(params, problem.operator, samples.interior))
    if samples.n_b:
        parts.append(constraint_jacobian(params, samples))
    if not parts:
        return np.zeros((0, params.param_count))
    return np.vstack(parts)


# ---------------------------------------------------------------------------
# kernels


@dataclass
class KernelMatrix:
    """Unweighted Gram matrix with its block split and loss weights."""
    gram: np.ndarray
    n_f: int
    alpha: float = 1.0
    beta: float = 1.0

    @property
    def size(self) -> int:
        return self.gram.shape[0]

    @property
    def weights(self) -> np.ndarray:
        w = np.full(self.size, float(self.beta))
        w[: self.n_f] = self.alpha
        return w

    @property
    def evolution(self) -> np.ndarray:
        """Weighted matrix driving ``dr/dt = -K~ r`` (columns scaled by weight)."""
        return self.gram * self.weights[None, :]

    @property
    def ff(self):
        return self.gram[: self.n_f, : self.n_f]

    @property
    def fb(self):
        return self.gram[: self.n_f, self.n_f :]

    @property
    def bf(self):
        return self.gram[self.n_f :, : self.n_f]

    @property
    def bb(self):
        return self.gram[self.n_f :, self.n_f :]


def assemble_ntk(J: np.ndarray, alpha: float = 1.0, beta: float = 1.0,
                 n_f: int = 0) -> KernelMatrix:
    J = np.asarray(J, dtype=np.float64)
    if not np.all(np.isfinite(J)):
        raise InvalidArgument("Jacobian has non-finite entries")
    G = J @ J.T
    G = 0.5 * (G + G.T)
    return KernelMatrix(gram=G, n_f=int(n_f), alpha=float(alpha), beta=float(beta))


def compute_kernel(params: NetworkParams, problem: ProblemSpec, samples: SampleSet) -> KernelMatrix:
    J = assemble_jacobian(params, problem, samples)
    return assemble_ntk(J, problem.alpha, problem.beta, samples.n_f)


_ROUNDOFF = 64 * np.finfo(np.float64).eps


def spectral_norm(M, tol: float = 1e-10, max_iter: int = 10_000) -> float:
    """Largest absolute eigenvalue of a symmetric matrix by power iteration.

    Starts from the normalised all-ones vector so results are reproducible.
    The estimate at each step is the largest Ritz value on ``span{v, Mv}``,
    which separates near-tied ``+lambda`` / ``-lambda`` pairs that plain
    ``||Mv||`` iteration cannot.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InvalidArgument("spectral_norm needs a square matrix")
    n = M.shape[0]
    if n == 0:
        return 0.0
    scale = max(1.0, float(np.max(np.abs(M))))
    if np.max(np.abs(M - M.T)) > 1e-9 * scale:
        raise InvalidArgument("matrix is not symmetric")
    v = np.full(n, 1.0 / np.sqrt(n))
    w = M @ v
    lam, prev_gap = 0.0, np.inf
    for _ in range(max_iter):
        nw = float(np.linalg.norm(w))
        if nw == 0.0:
            return 0.0
        u = M @ w
        a = float(v @ w)
        r = w - a * v
        b = float(np.linalg.norm(r))
        if b <= 1e-12 * nw:
            est = abs(a)
        else:
            q = r / b
            c = float(q @ (u - a * w)) / b
            est = float(np.max(np.abs(np.linalg.eigvalsh([[a, b], [b, c]]))))
        gap = abs(est - lam)
        # geometric tail estimate guards against stalling on slow contraction
        rho = gap / prev_gap if prev_gap > 0 else 0.0
        tail = gap * rho / (1.0 - rho) if rho < 1.0 else np.inf
        if gap <= _ROUNDOFF * est or (gap <= tol * est and tail <= tol * est):
            return est
        lam, prev_gap = est, gap
        v, w = w / nw, u / nw
    raise IterationLimit(f"power iteration did not converge in {max_iter} steps", last=lam, vector=v)


# ---------------------------------------------------------------------------
# width sweeps


@dataclass
class SweepRecord:
    repeat: int
    width: int
    norm: float


@dataclass
class SweepResult:
    records: list
    widths: list
    k_interval: int
    s: float

    def aggregates(self) -> dict:
        """Per-width ``{"mean", "min", "max"}`` of the kernel-difference norms."""
        out = {}
        for N in self.widths:
            vals = np.array([r.norm for r in self.records if r.width == N])
            out[N] = {"mean": float(vals.mean()), "min": float(vals.min()), "max": float(vals.max())}
        return out

    def ratio(self) -> float:
        """Mean norm at the top of the ladder over mean norm at the bottom."""
        agg = self.aggregates()
        return agg[self.widths[-1]]["mean"] / agg[self.widths[0]]["mean"]


def width_sweep(problem: ProblemSpec, widths: Sequence[int], k_interval: int, repeats: int,
                s: float, seed: int, counts: Optional[Mapping[str, int]] = None,
                scheme: str = "weights-normal-biases-zero", jobs: int = 1) -> SweepResult:
    """``||K_{N+k}(0) - K_N(0)||_2`` over a width ladder and independent repeats.

    Each repeat draws one sample set shared by all its widths; every
    (repeat, width) network is drawn from its own derived seed.
    """
    widths = [int(w) for w in widths]
    if not widths or any(b <= a for a, b in zip(widths, widths[1:])):
        raise InvalidArgument("widths must be non-empty and strictly ascending")
    if repeats < 1 or k_interval < 1 or widths[0] < 1:
        raise InvalidArgument("repeats, k_interval and widths must be positive")

    samples = [problem.sample(counts, derive_seed(seed, r, ROLE_SAMPLES)) for r in range(repeats)]
    all_widths = sorted(set(widths) | {w + k_interval for w in widths})
    cells = [(r, w) for r in range(repeats) for w in all_widths]

    def kernel_for(cell):
        r, w = cell
        params = make_params(w, problem.input_dim, s, scheme, derive_seed(seed, r, w, ROLE_PARAMS))
        return compute_kernel(params, problem, samples[r]).gram

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            grams = dict(zip(cells, pool.map(kernel_for, cells)))
    else:
        grams = {c: kernel_for(c) for c in cells}

    records = []
    for r in range(repeats):
        for w in widths:
            diff = grams[(r, w + k_interval)] - grams[(r, w)]
            records.append(SweepRecord(r, w, spectral_norm(diff)))
    return SweepResult(records=records, widths=widths, k_interval=int(k_interval), s=float(s))


def write_sweep_csv(path, result: SweepResult, experiment: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_CSV_HEADER)
        for rec in result.records:
            w.writerow([experiment, repr(result.s), rec.repeat, rec.width,
                        result.k_interval, repr(rec.norm)])


# ---------------------------------------------------------------------------
# limiting kernel


def limiting_kernel_bb(x, xhat, m: int = 0, nodes: int = 80, *, s: float = 0.5,
                       input_dim: int = 1, scheme: str = "weights-normal-biases-zero",
                       activation: str = "tanh"):
    """Wide-network limit of the constraint block ``K_bb(x, xhat)``.

    Expectations over ``W0 ~ N(0, 1)`` use Gauss-Hermite quadrature with
    ``E[W1^2] = 1``. ``x`` and ``xhat`` broadcast against each other.
    """
    if input_dim != 1 or s != 0.5 or scheme != "weights-normal-biases-zero":
        raise UnsupportedConfiguration(
            "limiting K_bb is only available for d=1, s=1/2 and zero biases")
    if nodes < 40:
        raise InvalidArgument("use at least 40 quadrature nodes")
    m = int(m)
    if m < 0:
        raise InvalidArgument("m must be non-negative")
    t, wq = np.polynomial.hermite.hermgauss(nodes)
    W = np.sqrt(2.0) * t
    wq = wq / np.sqrt(np.pi)

    x, xhat = np.broadcast_arrays(np.asarray(x, float), np.asarray(xhat, float))
    Z = x[..., None] * W
    Zh = xhat[..., None] * W
    S = activation_derivs(activation, (m, m + 1), Z)
    Sh = activation_derivs(activation, (m, m + 1), Zh)

    def E(f):
        return f @ wq

    hi_hi = E(S[m + 1] * Sh[m + 1] * W ** (2 * m))
    out = hi_hi * x * xhat + hi_hi + E(S[m] * Sh[m] * W ** (2 * m))
    if m > 0:
        out = out + m * m * E(S[m] * Sh[m] * W ** (2 * m - 2))
        out = out + m * E(S[m + 1] * Sh[m] * W ** (2 * m - 1)) * x
        out = out + m * E(S[m] * Sh[m + 1] * W ** (2 * m - 1)) * xhat
    else:
        out = out + 1.0
    return float(out) if out.ndim == 0 else out


def limiting_kernel_bb_matrix(points, m: int = 0, nodes: int = 80) -> np.ndarray:
    p = np.asarray(points, dtype=np.float64).reshape(-1)
    return limiting_kernel_bb(p[:, None], p[None, :], m, nodes)


def empirical_kernel_bb(params: NetworkParams, points, m: int = 0) -> np.ndarray:
    """Empirical ``K_bb`` on 1-D points for the constraint ``d^m q = g``."""
    p = np.asarray(points, dtype=np.float64).reshape(-1, 1)
    J = derivative_jacobian(params, p, {MultiIndex((m,)): 1.0})
    return J @ J.T
