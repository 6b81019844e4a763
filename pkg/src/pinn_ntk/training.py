"""Full-batch gradient descent on the PINN loss and kernel drift diagnostics."""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .errors import InvalidArgument, TrainingDiverged
from .kernel import (
    KernelMatrix,
    ProblemSpec,
    ROLE_PARAMS,
    ROLE_SAMPLES,
    SampleSet,
    assemble_jacobian,
    assemble_ntk,
    constraint_values,
    spectral_norm,
)
from .netcore import MultiIndex, NetworkEval, NetworkParams, derive_seed, derivatives, make_params
from .opspec import eval_operator, linearize, needed_indices

DRIFT_CSV_HEADER = ("experiment", "s", "width", "step", "norm2_drift", "loss", "param_displacement")


def geometric_schedule(steps: int) -> list[int]:
    """0, 1, 2, 5, 10, 20, 50, ... capped by and always including ``steps``."""
    out, base = {0, int(steps)}, 1
    while base <= steps:
        for mult in (1, 2, 5):
            if base * mult <= steps:
                out.add(base * mult)
        base *= 10
    return sorted(out)


@dataclass
class TrainingConfig:
    learning_rate: float = 1e-5
    steps: int = 2000
    checkpoint_schedule: Optional[Sequence[int]] = None
    alpha: Optional[float] = None  # None: use the problem's weights
    beta: Optional[float] = None

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise InvalidArgument("learning_rate must be positive")
        if int(self.steps) < 0:
            raise InvalidArgument("steps must be non-negative")
        self.steps = int(self.steps)
        sched = (geometric_schedule(self.steps) if self.checkpoint_schedule is None
                 else sorted({0, self.steps, *(int(c) for c in self.checkpoint_schedule)}))
        if sched[0] < 0 or sched[-1] > self.steps:
            raise InvalidArgument("checkpoints must lie in [0, steps]")
        self.checkpoint_schedule = sched

    def weights(self, problem: ProblemSpec) -> tuple[float, float]:
        a = problem.alpha if self.alpha is None else float(self.alpha)
        b = problem.beta if self.beta is None else float(self.beta)
        return a, b


@dataclass
class Checkpoint:
    step: int
    drift: float
    loss: float
    param_displacement: float


@dataclass
class DriftRecord:
    width: int
    s: float
    per_checkpoint: list = field(default_factory=list)
    max_grad_entry: float = 0.0
    residual_path: Optional[np.ndarray] = None

    @property
    def sup_drift(self) -> float:
        return max((c.drift for c in self.per_checkpoint), default=0.0)

    @property
    def param_displacement(self) -> float:
        return self.per_checkpoint[-1].param_displacement if self.per_checkpoint else 0.0

    @property
    def losses(self) -> list[float]:
        return [c.loss for c in self.per_checkpoint]


def _weights(n_f: int, n_rows: int, alpha: float, beta: float) -> np.ndarray:
    w = np.full(n_rows, float(beta))
    w[:n_f] = alpha
    return w


def residual_vector(params: NetworkParams, problem: ProblemSpec, samples: SampleSet) -> np.ndarray:
    """``[F[q](x_f) - f(x_f); constraint residuals]``."""
    parts = []
    if samples.n_f:
        op = problem.operator
        D = derivatives(params, samples.interior, needed_indices(op))
        parts.append(np.asarray(eval_operator(op, D), dtype=np.float64)
                     - np.asarray(op.rhs(samples.interior), dtype=np.float64))
    if samples.n_b:
        parts.append(constraint_values(params, samples))
    return np.concatenate(parts) if parts else np.zeros(0)


def _residual_and_grad(params: NetworkParams, problem: ProblemSpec, samples: SampleSet,
                       w: np.ndarray):
    """Residual vector and ``J^T (w * r)``, sharing activation evaluations."""
    pending = []  # (row positions, NetworkEval, coeffs, sign)
    r = np.zeros(samples.n_rows)
    if samples.n_f:
        op = problem.operator
        needed = needed_indices(op)
        ev = NetworkEval.for_indices(params, samples.interior, needed)
        D = ev.values(needed)
        r[: samples.n_f] = (np.asarray(eval_operator(op, D), dtype=np.float64)
                            - np.asarray(op.rhs(samples.interior), dtype=np.float64))
        pending.append((np.arange(samples.n_f), ev, linearize(op, D), 1.0))
    zero = MultiIndex.zero(params.input_dim)
    for pos, kind, m, pa, pb, g in samples.groups():
        rows = samples.n_f + pos
        if kind == "match":
            ev = NetworkEval.for_indices(params, pa, [m])
            r[rows] = ev.values([m])[m] - g
            pending.append((rows, ev, {m: 1.0}, 1.0))
        else:
            ea = NetworkEval.for_indices(params, pa, [zero])
            eb = NetworkEval.for_indices(params, pb, [zero])
            r[rows] = ea.values([zero])[zero] - eb.values([zero])[zero]
            pending.append((rows, ea, {zero: 1.0}, 1.0))
            pending.append((rows, eb, {zero: 1.0}, -1.0))
    grad = np.zeros(params.param_count)
    wr = w * r
    for rows, ev, coeffs, sign in pending:
        grad += sign * ev.vjp(coeffs, wr[rows])
    return r, grad


def loss_and_grad(params: NetworkParams, problem: ProblemSpec, samples: SampleSet,
                  alpha: Optional[float] = None, beta: Optional[float] = None):
    """Weighted half-sum-of-squares loss and its parameter gradient ``J^T W r``."""
    a = problem.alpha if alpha is None else alpha
    b = problem.beta if beta is None else beta
    w = _weights(samples.n_f, samples.n_rows, a, b)
    r, grad = _residual_and_grad(params, problem, samples, w)
    return 0.5 * float(np.sum(w * r * r)), grad


def gd_train(params: NetworkParams, problem: ProblemSpec, samples: SampleSet,
             config: TrainingConfig, observer: Optional[Callable] = None,
             track_residuals: bool = False):
    """Run ``config.steps`` of ``theta <- theta - lr * grad L``.

    At every checkpoint the kernel is rebuilt and ``||K(t) - K(0)||_2`` is
    recorded; ``max_grad_entry`` is tracked over the same checkpoints.
    ``observer(checkpoint, params, kernel)`` is called at each checkpoint.
    Returns ``(final_params, DriftRecord)``.
    """
    alpha, beta = config.weights(problem)
    lr = config.learning_rate
    checkpoints = set(config.checkpoint_schedule)
    w = _weights(samples.n_f, samples.n_rows, alpha, beta)
    theta0 = params.flatten()
    theta = theta0.copy()
    cur = params
    rec = DriftRecord(width=params.width, s=params.s)
    path = [] if track_residuals else None
    K0 = None

    for step in range(config.steps + 1):
        r, grad = _residual_and_grad(cur, problem, samples, w)
        with np.errstate(over="ignore", invalid="ignore"):
            loss = 0.5 * float(np.sum(w * r * r))
        if not np.isfinite(loss):
            raise TrainingDiverged(f"loss became non-finite at step {step}", step)
        if path is not None:
            path.append(r)
        if step in checkpoints:
            J = assemble_jacobian(cur, problem, samples)
            if samples.n_f:
                rec.max_grad_entry = max(rec.max_grad_entry,
                                         float(np.max(np.abs(J[: samples.n_f]))))
            K = assemble_ntk(J, alpha, beta, samples.n_f)
            if K0 is None:
                K0 = K
            drift = 0.0 if step == 0 else spectral_norm(K.gram - K0.gram)
            cp = Checkpoint(step, drift, loss, float(np.linalg.norm(theta - theta0)))
            rec.per_checkpoint.append(cp)
            if observer is not None:
                observer(cp, cur, K)
        if step == config.steps:
            break
        theta = theta - lr * grad
        cur = cur.with_flat(theta)

    if path is not None:
        rec.residual_path = np.array(path)
    return cur, rec


def kernel_ode_predict(K0: KernelMatrix, r0, lr: float, steps: int) -> np.ndarray:
    """Integrate ``dr/dt = -K~ r`` with classical RK4 at step ``lr``.

    Returns an array of shape ``(steps + 1, n)`` starting with ``r0``.
    """
    A = K0.evolution if isinstance(K0, KernelMatrix) else np.asarray(K0, dtype=np.float64)
    r = np.asarray(r0, dtype=np.float64).copy()
    h = float(lr)
    out = np.empty((int(steps) + 1, r.size))
    out[0] = r
    for i in range(1, int(steps) + 1):
        k1 = -A @ r
        k2 = -A @ (r + 0.5 * h * k1)
        k3 = -A @ (r + 0.5 * h * k2)
        k4 = -A @ (r + h * k3)
        r = r + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        out[i] = r
    return out


def drift_study(problem: ProblemSpec, widths: Sequence[int], s: float, seeds: Sequence[int],
                config: TrainingConfig, counts: Optional[Mapping[str, int]] = None,
                scheme: str = "weights-normal-biases-zero", jobs: int = 1) -> dict:
    """Train every (seed, width) cell; returns ``{(seed, width): DriftRecord}``.

    All widths under one seed share that seed's sample set.
    """
    widths = [int(w) for w in widths]
    samples = {sd: problem.sample(counts, derive_seed(sd, ROLE_SAMPLES)) for sd in seeds}
    cells = [(sd, w) for sd in seeds for w in widths]

    def run(cell):
        sd, w = cell
        p = make_params(w, problem.input_dim, s, scheme, derive_seed(sd, w, ROLE_PARAMS))
        try:
            return gd_train(p, problem, samples[sd], config)[1]
        except TrainingDiverged as exc:
            raise TrainingDiverged(f"width={w} seed={sd}: {exc}", exc.step) from exc

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run, cells))
    else:
        results = [run(c) for c in cells]
    return dict(zip(cells, results))


def write_drift_csv(path, records: Sequence[DriftRecord], experiment: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DRIFT_CSV_HEADER)
        for rec in records:
            for cp in rec.per_checkpoint:
                w.writerow([experiment, repr(rec.s), rec.width, cp.step, repr(cp.drift),
                            repr(cp.loss), repr(cp.param_displacement)])
