"""Experiment configuration, dispatch and artifact writing.

Every experiment writes its CSV output(s) plus a ``<stem>.manifest.json``
holding the resolved configuration, so a run can be repeated exactly. CSV
contents depend only on the configuration and seed, never on ``jobs``.
"""

from __future__ import annotations

import csv
import json
import os
import platform
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from ._version import __version__
from .errors import InvalidArgument, TrainingDiverged
from .kernel import (
    DerivativeMatchFamily,
    ProblemSpec,
    empirical_kernel_bb,
    limiting_kernel_bb_matrix,
    compute_kernel,
    width_sweep,
    write_sweep_csv,
    ROLE_PARAMS,
    ROLE_SAMPLES,
)
from .netcore import MultiIndex, derive_seed, make_params
from .opspec import homogeneity, operator_from_records
from .problems import BUILTINS, builtin_problem, oracle_problem
from .training import TrainingConfig, drift_study, gd_train, kernel_ode_predict, write_drift_csv

EXPERIMENTS = ("init-sweep", "train-drift", "thresholds", "kernel-oracle", "lazy-check")

PROFILES = {
    "desk": {
        "init-sweep": {"widths": [100, 500, 1000, 2000, 4000], "k_interval": 500, "repeats": 10},
        "train-drift": {"widths": [200, 800, 3200], "repeats": 10, "steps": 2000},
        "kernel-oracle": {"widths": [1000, 4000, 16000], "repeats": 5},
        "lazy-check": {"widths": [4096], "repeats": 1, "steps": 500},
    },
    "paper": {
        "init-sweep": {"widths": [100] + list(range(2000, 50001, 2000)), "k_interval": 2000,
                       "repeats": 50},
        "train-drift": {"widths": list(range(200, 5001, 200)), "repeats": 1, "steps": 5000},
        "kernel-oracle": {"widths": [1000, 4000, 16000, 64000], "repeats": 20},
        "lazy-check": {"widths": [4096], "repeats": 5, "steps": 500},
    },
}

# scaling exponent used when a run does not set one
DEFAULT_S = {
    "init-sweep": {"sine-gordon": 1.0, "kdv": 1.0},
    "train-drift": {"sine-gordon": 0.25, "kdv": 0.3},
    "kernel-oracle": {},
    "lazy-check": {"sine-gordon": 0.5, "kdv": 0.5},
}

# named s values; "kdv-drift-alt" is the alternative KdV drift exponent and
# "kdv-threshold" sits at the predicted KdV threshold
NAMED_S = {"sg-drift": 0.25, "kdv-drift": 0.3, "kdv-drift-alt": 0.2, "kdv-threshold": 0.75}


@dataclass
class ExperimentConfig:
    experiment: str
    problem: object = "sine-gordon"  # builtin name or inline {"terms": [...], ...}
    s: Optional[float] = None
    widths: Optional[list] = None
    k_interval: Optional[int] = None
    repeats: Optional[int] = None
    n_f: Optional[int] = None
    n_b: Optional[int] = None
    n_i: Optional[int] = None
    seed: int = 0
    training: Optional[dict] = None
    output_path: str = "runs"
    profile: str = "desk"
    jobs: Optional[int] = None  # default: machine parallelism

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise InvalidArgument(f"unknown experiment {self.experiment!r}")
        if self.profile not in PROFILES:
            raise InvalidArgument(f"unknown profile {self.profile!r}")
        if isinstance(self.problem, str) and self.problem not in BUILTINS:
            raise InvalidArgument(f"unknown builtin problem {self.problem!r}")
        if isinstance(self.s, str):
            if self.s not in NAMED_S:
                raise InvalidArgument(f"unknown s profile {self.s!r}")
            self.s = NAMED_S[self.s]
        prof = PROFILES[self.profile].get(self.experiment, {})
        if self.widths is None:
            self.widths = list(prof.get("widths", []))
        if self.k_interval is None:
            self.k_interval = prof.get("k_interval", 1)
        if self.repeats is None:
            self.repeats = prof.get("repeats", 1)
        if self.s is None:
            if self.experiment == "kernel-oracle":
                self.s = 0.5
            elif isinstance(self.problem, str):
                self.s = DEFAULT_S.get(self.experiment, {}).get(self.problem, 1.0)
            else:
                self.s = 0.5
        self.s = float(self.s)
        if self.experiment != "thresholds":
            if not self.widths:
                raise InvalidArgument("widths must be non-empty")
            if any(int(w) < 1 for w in self.widths) or self.repeats < 1 or self.k_interval < 1:
                raise InvalidArgument("widths, repeats and k_interval must be positive")
        for key in ("n_f", "n_b", "n_i"):
            v = getattr(self, key)
            if v is not None and int(v) < 0:
                raise InvalidArgument(f"{key} must be non-negative")
        if self.jobs is None:
            self.jobs = os.cpu_count() or 1
        if self.jobs < 1:
            raise InvalidArgument("jobs must be at least 1")

    @classmethod
    def from_json(cls, path, **overrides) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**data)

    def counts(self) -> dict:
        return {k: int(v) for k, v in (("n_f", self.n_f), ("n_b", self.n_b), ("n_i", self.n_i))
                if v is not None}

    def training_config(self) -> TrainingConfig:
        prof = PROFILES[self.profile].get(self.experiment, {})
        opts = {"steps": prof.get("steps", 2000)}
        opts.update(self.training or {})
        return TrainingConfig(**opts)


def resolve_problem(problem) -> ProblemSpec:
    """Builtin by name, or an inline operator on a box with value constraints.

    Inline form: ``{"name": ..., "terms": [...], "domain_lo": [...],
    "domain_hi": [...], "initial_axis": 1}``; the initial constraint pins
    ``initial_axis`` to its lower bound with target zero.
    """
    if isinstance(problem, str):
        return builtin_problem(problem)

    op = operator_from_records(problem["terms"], name=problem.get("name", "custom"))
    lo, hi = list(problem["domain_lo"]), list(problem["domain_hi"])
    fams = []
    if "initial_axis" in problem:
        ax = int(problem["initial_axis"])
        hi_b = list(hi)
        hi_b[ax] = lo[ax]
        fams.append(DerivativeMatchFamily("n_b", lo, hi_b, MultiIndex.zero(len(lo)),
                                          lambda P: np.zeros(P.shape[0])))
    return ProblemSpec(lo, hi, op, fams, name=op.name,
                       alpha=problem.get("alpha", 1.0), beta=problem.get("beta", 1.0),
                       default_counts={"n_f": 100, "n_b": 50})


def problem_name(cfg: ExperimentConfig) -> str:
    return cfg.problem if isinstance(cfg.problem, str) else cfg.problem.get("name", "custom")


def _stem(cfg: ExperimentConfig) -> str:
    return f"{cfg.experiment}_{problem_name(cfg)}_s{cfg.s:g}"


def _write_manifest(out_dir: Path, stem: str, cfg: ExperimentConfig, outputs, started: float,
                    summary: Optional[dict] = None) -> Path:
    manifest = {
        "config": asdict(cfg),
        "seed": cfg.seed,
        "outputs": [Path(p).name for p in outputs],
        "wall_time_s": round(time.time() - started, 3),
        "library_version": __version__,
        "numpy_version": np.__version__,
        "python_version": platform.python_version(),
    }
    if summary is not None:
        manifest["summary"] = summary
    path = out_dir / f"{stem}.manifest.json"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, default=str)
        fh.write("\n")
    return path


# ---------------------------------------------------------------------------
# experiments


def run_init_sweep(cfg: ExperimentConfig, out_dir: Path):
    problem = resolve_problem(cfg.problem)
    res = width_sweep(problem, cfg.widths, cfg.k_interval, cfg.repeats, cfg.s, cfg.seed,
                      counts=cfg.counts(), jobs=cfg.jobs)
    path = out_dir / f"{_stem(cfg)}.csv"
    write_sweep_csv(path, res, cfg.experiment)
    agg = res.aggregates()
    for N, a in agg.items():
        print(f"N={N:>6d}  mean={a['mean']:.6g}  min={a['min']:.6g}  max={a['max']:.6g}")
    print(f"ratio mean(top)/mean(bottom) = {res.ratio():.4f}")
    return [path], {"aggregates": {str(k): v for k, v in agg.items()}, "ratio": res.ratio()}


def drift_seeds(master: int, repeats: int) -> list[int]:
    return [derive_seed(master, r) for r in range(repeats)]


def run_train_drift(cfg: ExperimentConfig, out_dir: Path):
    problem = resolve_problem(cfg.problem)
    tcfg = cfg.training_config()
    seeds = drift_seeds(cfg.seed, cfg.repeats)
    records = drift_study(problem, cfg.widths, cfg.s, seeds, tcfg, counts=cfg.counts(),
                          jobs=cfg.jobs)
    paths, summary = [], {}
    for r, sd in enumerate(seeds):
        recs = [records[(sd, w)] for w in cfg.widths]
        path = out_dir / f"{_stem(cfg)}_r{r:02d}.csv"
        write_drift_csv(path, recs, cfg.experiment)
        paths.append(path)
        sup = [rec.sup_drift for rec in recs]
        summary[f"r{r:02d}"] = sup
        print(f"repeat {r}: sup drift by width {dict(zip(cfg.widths, (round(v, 6) for v in sup)))}")
    return paths, {"sup_drift": summary}


def run_thresholds(cfg: ExperimentConfig, out_dir: Path):
    problem = resolve_problem(cfg.problem)
    rep = homogeneity(problem.operator)
    print(f"problem={problem_name(cfg)} case={rep.case_label} T={rep.T} "
          f"s1={rep.s1:.6f} s2={rep.s2:.6f} s_min={rep.s_min:.6f}")
    for a, deg in rep.per_Fi.items():
        print(f"  dF/dq{tuple(a)} = {rep.partials[a]}   [{deg}]")
    path = out_dir / f"thresholds_{problem_name(cfg)}.json"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(rep.as_dict(), fh, indent=2)
        fh.write("\n")
    return [path], rep.as_dict()


def kernel_oracle_deviations(widths, repeats: int, seed: int, m: int = 0,
                             n_points: int = 21, nodes: int = 80):
    """Max-abs gap between empirical and limiting ``K_bb`` per (repeat, width).

    Points are drawn once per repeat, uniformly on [-1, 1].
    """
    problem = oracle_problem()
    rows = []
    for r in range(repeats):
        samples = problem.sample({"n_b": n_points}, derive_seed(seed, r, ROLE_SAMPLES))
        pts = np.array([c.point[0] for c in samples.constraints])
        K_star = limiting_kernel_bb_matrix(pts, m, nodes)
        scale = float(np.max(np.abs(K_star)))
        for w in widths:
            p = make_params(w, 1, 0.5, seed=derive_seed(seed, r, w, ROLE_PARAMS))
            dev = float(np.max(np.abs(empirical_kernel_bb(p, pts, m) - K_star)))
            rows.append((r, int(w), dev, scale))
    return rows


def run_kernel_oracle(cfg: ExperimentConfig, out_dir: Path):
    if cfg.s != 0.5:
        raise InvalidArgument("kernel-oracle compares against the s = 1/2 limit")
    rows = kernel_oracle_deviations(cfg.widths, cfg.repeats, cfg.seed)
    path = out_dir / f"kernel-oracle_s{cfg.s:g}.csv"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("experiment", "s", "repeat", "width", "max_abs_dev", "matrix_max_abs"))
        for r, width, dev, scale in rows:
            w.writerow((cfg.experiment, repr(cfg.s), r, width, repr(dev), repr(scale)))
    summary = {}
    for width in cfg.widths:
        devs = [d / sc for _, wd, d, sc in rows if wd == width]
        summary[str(width)] = float(np.mean(devs))
        print(f"N={width:>6d}  mean relative deviation {summary[str(width)]:.5f}")
    return [path], {"mean_relative_deviation": summary}


def lazy_check(problem: ProblemSpec, width: int, s: float, seed: int, steps: int,
               lr: float = 1e-5, counts=None):
    """Compare the linearised residual path against actual gradient descent.

    Returns ``(predicted, actual)`` arrays of shape ``(steps + 1, n_rows)``.
    """
    samples = problem.sample(counts, derive_seed(seed, ROLE_SAMPLES))
    p = make_params(width, problem.input_dim, s, seed=derive_seed(seed, width, ROLE_PARAMS))
    tcfg = TrainingConfig(learning_rate=lr, steps=steps, checkpoint_schedule=[0, steps])
    _, rec = gd_train(p, problem, samples, tcfg, track_residuals=True)
    K0 = compute_kernel(p, problem, samples)
    predicted = kernel_ode_predict(K0, rec.residual_path[0], lr, steps)
    return predicted, rec.residual_path


def path_errors(predicted, actual) -> dict:
    diff = np.linalg.norm(predicted - actual)
    return {
        "relative_l2": float(diff / np.linalg.norm(actual)),
        "relative_l2_of_change": float(diff / max(np.linalg.norm(actual - actual[0]), 1e-300)),
    }


def run_lazy_check(cfg: ExperimentConfig, out_dir: Path):
    problem = resolve_problem(cfg.problem)
    tcfg = cfg.training_config()
    paths, summary = [], {}
    for r in range(cfg.repeats):
        sd = derive_seed(cfg.seed, r)
        for width in cfg.widths:
            pred, act = lazy_check(problem, int(width), cfg.s, sd, tcfg.steps,
                                   tcfg.learning_rate, cfg.counts())
            errs = path_errors(pred, act)
            summary[f"r{r:02d}_N{width}"] = errs
            path = out_dir / f"{_stem(cfg)}_r{r:02d}_N{width}.csv"
            with open(path, "w", encoding="utf-8", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(("experiment", "s", "width", "step", "actual_norm", "predicted_norm",
                            "diff_norm"))
                for step in range(act.shape[0]):
                    w.writerow((cfg.experiment, repr(cfg.s), width, step,
                                repr(float(np.linalg.norm(act[step]))),
                                repr(float(np.linalg.norm(pred[step]))),
                                repr(float(np.linalg.norm(act[step] - pred[step])))))
            paths.append(path)
            print(f"repeat {r} N={width}: relative L2 {errs['relative_l2']:.4f} "
                  f"(of change {errs['relative_l2_of_change']:.4f})")
    return paths, summary


RUNNERS = {
    "init-sweep": run_init_sweep,
    "train-drift": run_train_drift,
    "thresholds": run_thresholds,
    "kernel-oracle": run_kernel_oracle,
    "lazy-check": run_lazy_check,
}


def run(cfg: ExperimentConfig) -> int:
    """Run one experiment; returns a process exit status."""
    started = time.time()
    out_dir = Path(cfg.output_path)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        outputs, summary = RUNNERS[cfg.experiment](cfg, out_dir)
    except TrainingDiverged as exc:
        print(f"error: training diverged ({exc})")
        return 3
    except InvalidArgument as exc:
        print(f"error: {exc}")
        return 2
    stem = outputs[0].stem if cfg.experiment == "thresholds" else _stem(cfg)
    _write_manifest(out_dir, stem, cfg, outputs, started, summary)
    return 0
