"""Builtin PINN problems: the sine-Gordon IVP and the periodic KdV IBVP."""

from __future__ import annotations

import numpy as np

from .errors import InvalidArgument
from .kernel import DerivativeMatchFamily, PeriodicFamily, ProblemSpec
from .netcore import MultiIndex
from .opspec import identity_operator, kdv_operator, sine_gordon_operator

BUILTINS = ("sine-gordon", "kdv")

# default point counts for the builtin problems
REFERENCE_COUNTS = {
    "sine-gordon": {"n_f": 100, "n_b": 50},
    "kdv": {"n_f": 100, "n_i": 50, "n_b": 50},
}


def sine_gordon_initial(x):
    """Kink profile ``4 arctan(exp(sqrt(2) x))``."""
    return 4.0 * np.arctan(np.exp(np.sqrt(2.0) * np.asarray(x, dtype=np.float64)))


def kdv_soliton(x, b: float = 1.0):
    """Soliton profile ``2 b^2 sech(b x)^2``."""
    return 2.0 * b * b / np.cosh(b * np.asarray(x, dtype=np.float64)) ** 2


def sine_gordon_problem(alpha: float = 1.0, beta: float = 1.0) -> ProblemSpec:
    initial = DerivativeMatchFamily(
        count_key="n_b", lo=(-5.0, 0.0), hi=(5.0, 0.0), m=MultiIndex((0, 0)),
        target=lambda P: sine_gordon_initial(P[:, 0]),
    )
    return ProblemSpec(
        domain_lo=(-5.0, 0.0), domain_hi=(5.0, 5.0), operator=sine_gordon_operator(),
        families=[initial], alpha=alpha, beta=beta, name="sine-gordon",
        default_counts=dict(REFERENCE_COUNTS["sine-gordon"]),
    )


def kdv_problem(b: float = 1.0, alpha: float = 1.0, beta: float = 1.0) -> ProblemSpec:
    initial = DerivativeMatchFamily(
        count_key="n_i", lo=(-5.0, 0.0), hi=(5.0, 0.0), m=MultiIndex((0, 0)),
        target=lambda P: kdv_soliton(P[:, 0], b),
    )
    periodic = PeriodicFamily(count_key="n_b", axis=0, a_value=-5.0, b_value=5.0,
                              lo=(-5.0, 0.0), hi=(5.0, 5.0))
    return ProblemSpec(
        domain_lo=(-5.0, 0.0), domain_hi=(5.0, 5.0), operator=kdv_operator(),
        families=[initial, periodic], alpha=alpha, beta=beta, name="kdv",
        default_counts=dict(REFERENCE_COUNTS["kdv"]),
    )


def oracle_problem(lo: float = -1.0, hi: float = 1.0) -> ProblemSpec:
    """1-D value-matching problem whose kernel is pure ``K_bb``."""
    fam = DerivativeMatchFamily(count_key="n_b", lo=(lo,), hi=(hi,), m=MultiIndex((0,)),
                                target=lambda P: np.zeros(P.shape[0]))
    return ProblemSpec(domain_lo=(lo,), domain_hi=(hi,), operator=identity_operator(1),
                       families=[fam], name="oracle-1d", default_counts={"n_f": 0, "n_b": 21})


def builtin_problem(name: str, **kwargs) -> ProblemSpec:
    if name == "sine-gordon":
        return sine_gordon_problem(**kwargs)
    if name == "kdv":
        return kdv_problem(**kwargs)
    raise InvalidArgument(f"unknown builtin problem {name!r}; choose from {BUILTINS}")
