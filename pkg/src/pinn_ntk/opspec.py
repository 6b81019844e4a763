"""Symbolic PDE operators ``F[q, q_x, ...]`` and their homogeneity analysis.

An operator is a sum of terms, each either a monomial in derivatives of q
(``6 * q * q_x``) or a smooth scalar function of a single derivative
(``-sin(q)``). Evaluation and linearisation work on a *jet*, a mapping from
multi-index to value; values may be scalars or equally shaped arrays, so the
same code evaluates one point or a whole batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping, Optional, Union

import numpy as np

from .errors import IncompleteJet, InvalidArgument
from .netcore import MAX_ACT_ORDER, MultiIndex, NetworkParams, derivative_jacobian, derivatives

NON_HOMOGENEOUS = "non-homogeneous"

# outer function -> (value, first derivative, is polynomial)
OUTER_FUNCTIONS: dict[str, tuple[Callable, Callable, bool]] = {
    "sin": (np.sin, np.cos, False),
    "cos": (np.cos, lambda u: -np.sin(u), False),
    "exp": (np.exp, np.exp, False),
    "identity": (lambda u: u, lambda u: np.ones_like(np.asarray(u, dtype=float)), True),
}


@dataclass(frozen=True)
class Monomial:
    coeff: float
    factors: tuple  # ((MultiIndex, power), ...)

    def __post_init__(self):
        facs = tuple((MultiIndex(a), int(p)) for a, p in self.factors)
        if any(p < 1 for _, p in facs):
            raise InvalidArgument("monomial powers must be >= 1")
        if len({a for a, _ in facs}) != len(facs):
            raise InvalidArgument("monomial factors must have distinct multi-indices")
        object.__setattr__(self, "factors", facs)
        object.__setattr__(self, "coeff", float(self.coeff))

    @property
    def indices(self):
        return [a for a, _ in self.factors]

    def degree(self) -> int:
        return sum(p for _, p in self.factors)


@dataclass(frozen=True)
class Composite:
    coeff: float
    outer: str
    inner: MultiIndex

    def __post_init__(self):
        if self.outer not in OUTER_FUNCTIONS:
            raise InvalidArgument(f"unsupported outer function {self.outer!r}")
        object.__setattr__(self, "inner", MultiIndex(self.inner))
        object.__setattr__(self, "coeff", float(self.coeff))

    @property
    def indices(self):
        return [self.inner]


Term = Union[Monomial, Composite]


def _zero_rhs(X):
    return np.zeros(np.asarray(X).shape[0])


@dataclass
class OperatorSpec:
    terms: list
    rhs: Callable = _zero_rhs
    name: str = ""

    def __post_init__(self):
        self.terms = list(self.terms)
        if not self.terms:
            raise InvalidArgument("operator needs at least one term")
        dims = {len(a) for t in self.terms for a in t.indices}
        if len(dims) != 1:
            raise InvalidArgument("all multi-indices in an operator must share one dimension")
        if self.max_order + 1 > MAX_ACT_ORDER:
            raise InvalidArgument(f"operator order {self.max_order} too high for activation table")

    @property
    def input_dim(self) -> int:
        return len(self.terms[0].indices[0])

    @property
    def max_order(self) -> int:
        return max(a.total for t in self.terms for a in t.indices)


def needed_indices(op: OperatorSpec) -> set:
    return {a for t in op.terms for a in t.indices}


def _lookup(jet: Mapping, a: MultiIndex):
    try:
        return jet[a]
    except KeyError:
        raise IncompleteJet(f"jet has no entry for {tuple(a)}") from None


def eval_operator(op: OperatorSpec, jet: Mapping):
    total = 0.0
    for t in op.terms:
        if isinstance(t, Monomial):
            v = t.coeff
            for a, p in t.factors:
                v = v * _lookup(jet, a) ** p
        else:
            v = t.coeff * OUTER_FUNCTIONS[t.outer][0](_lookup(jet, t.inner))
        total = total + v
    return total


def linearize(op: OperatorSpec, jet: Mapping) -> dict:
    """Partial derivatives ``dF/d(q_alpha)`` for every alpha referenced by ``op``."""
    out: dict = {}
    for t in op.terms:
        if isinstance(t, Monomial):
            vals = [_lookup(jet, a) for a, _ in t.factors]
            for i, (a, p) in enumerate(t.factors):
                v = t.coeff * p * vals[i] ** (p - 1)
                for j, (b, pb) in enumerate(t.factors):
                    if j != i:
                        v = v * vals[j] ** pb
                out[a] = out.get(a, 0.0) + v
        else:
            v = t.coeff * OUTER_FUNCTIONS[t.outer][1](_lookup(jet, t.inner))
            out[t.inner] = out.get(t.inner, 0.0) + v
    return out


def residual_jacobian(params: NetworkParams, op: OperatorSpec, X) -> np.ndarray:
    """Rows ``grad_theta F[q](x)`` for each point of ``X``."""
    D = derivatives(params, X, needed_indices(op))
    return derivative_jacobian(params, X, linearize(op, D))


def residual_gradient(params: NetworkParams, op: OperatorSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    return residual_jacobian(params, op, x)[0]


# ---------------------------------------------------------------------------
# homogeneity


def _symbolic_partials(op: OperatorSpec):
    """Per-alpha symbolic dF/dq_alpha.

    Returns ``(polys, nonhom)`` where ``polys[alpha]`` maps a monomial key
    (sorted tuple of (index, power)) to its coefficient, and ``nonhom`` is the
    set of alphas touched by a non-polynomial composite.
    """
    polys: dict = {}
    nonhom = set()
    for t in op.terms:
        if isinstance(t, Monomial):
            for a, p in t.factors:
                rest = [(b, pb) for b, pb in t.factors if b != a]
                if p > 1:
                    rest.append((a, p - 1))
                key = tuple(sorted(rest))
                poly = polys.setdefault(a, {})
                poly[key] = poly.get(key, 0.0) + t.coeff * p
        else:
            polys.setdefault(t.inner, {})
            if OUTER_FUNCTIONS[t.outer][2]:
                poly = polys[t.inner]
                poly[()] = poly.get((), 0.0) + t.coeff
            else:
                nonhom.add(t.inner)
    for a in polys:
        polys[a] = {k: c for k, c in polys[a].items() if c != 0.0}
    return polys, nonhom


def _poly_str(poly: dict) -> str:
    if not poly:
        return "0"
    parts = []
    for key, c in sorted(poly.items()):
        fac = "*".join(f"q{tuple(a)}" + (f"^{p}" if p > 1 else "") for a, p in key)
        parts.append(f"{c:g}" + (f"*{fac}" if fac else ""))
    return " + ".join(parts)


def threshold_s1(T: int) -> Fraction:
    return Fraction(2 * T + 1, 2 * T + 2)


def threshold_s2(T: int) -> Fraction:
    return Fraction(T + 1, T + 2)


@dataclass
class HomogeneityReport:
    per_Fi: dict
    case_label: str
    T: int
    s1: float
    s2: float
    s_min: float
    f0_has_constant: bool = False
    partials: dict = field(default_factory=dict)  # alpha -> printable F_i

    def as_dict(self) -> dict:
        return {
            "case": self.case_label,
            "T": self.T,
            "s1": self.s1,
            "s2": self.s2,
            "s_min": self.s_min,
            "f0_has_constant": self.f0_has_constant,
            "per_Fi": {str(tuple(a)): v for a, v in self.per_Fi.items()},
            "partials": {str(tuple(a)): v for a, v in self.partials.items()},
        }


def homogeneity(op: OperatorSpec) -> HomogeneityReport:
    """Classify ``op`` and compute its initial-kernel convergence thresholds.

    Each ``F_i`` is homogeneous when every monomial in it shares one total
    degree; a non-polynomial composite makes it non-homogeneous. The operator
    is case A when some ``F_i`` is non-homogeneous or ``F_0`` (the partial
    with respect to q itself) carries a nonzero constant; then ``s_min = 1``.
    Otherwise it is case B with ``T`` the largest degree and
    ``s_min = max(s1, s2)``.
    """
    polys, nonhom = _symbolic_partials(op)
    zero = MultiIndex.zero(op.input_dim)
    per_Fi: dict = {}
    for a in sorted(polys):
        if a in nonhom:
            per_Fi[a] = NON_HOMOGENEOUS
            continue
        degrees = {sum(p for _, p in key) for key in polys[a]}
        if not degrees:
            continue  # cancels identically
        per_Fi[a] = degrees.pop() if len(degrees) == 1 else NON_HOMOGENEOUS

    f0_const = zero not in nonhom and polys.get(zero, {}).get((), 0.0) != 0.0
    hom_degrees = [v for v in per_Fi.values() if v != NON_HOMOGENEOUS]
    T = max(hom_degrees, default=0)
    s1, s2 = threshold_s1(T), threshold_s2(T)
    case_a = NON_HOMOGENEOUS in per_Fi.values() or f0_const
    partials = {a: (f"non-polynomial in q{tuple(a)}" if a in nonhom else _poly_str(polys[a]))
                for a in sorted(polys)}
    return HomogeneityReport(
        per_Fi=per_Fi,
        case_label="A" if case_a else "B",
        T=T,
        s1=float(s1),
        s2=float(s2),
        s_min=1.0 if case_a else float(max(s1, s2)),
        f0_has_constant=f0_const,
        partials=partials,
    )


# ---------------------------------------------------------------------------
# builders


def sine_gordon_operator() -> OperatorSpec:
    """q_tt - q_xx - sin(q) in (x, t) coordinates."""
    return OperatorSpec(
        terms=[
            Monomial(1.0, (((0, 2), 1),)),
            Monomial(-1.0, (((2, 0), 1),)),
            Composite(-1.0, "sin", MultiIndex((0, 0))),
        ],
        name="sine-gordon",
    )


def kdv_operator() -> OperatorSpec:
    """q_t + 6 q q_x + q_xxx in (x, t) coordinates."""
    return OperatorSpec(
        terms=[
            Monomial(1.0, (((0, 1), 1),)),
            Monomial(6.0, (((0, 0), 1), ((1, 0), 1))),
            Monomial(1.0, (((3, 0), 1),)),
        ],
        name="kdv",
    )


def heat_operator() -> OperatorSpec:
    """q_t - q_xx in (x, t) coordinates."""
    return OperatorSpec(
        terms=[Monomial(1.0, (((0, 1), 1),)), Monomial(-1.0, (((2, 0), 1),))],
        name="heat",
    )


def identity_operator(dim: int) -> OperatorSpec:
    return OperatorSpec(terms=[Monomial(1.0, ((MultiIndex.zero(dim), 1),))], name="identity")


def term_from_record(rec: Mapping) -> Term:
    """Build a term from a config record.

    ``{"type": "monomial", "coeff": 6, "factors": [[[0, 0], 1], [[1, 0], 1]]}``
    or ``{"type": "composite", "coeff": -1, "outer": "sin", "inner": [0, 0]}``.
    """
    kind = rec.get("type")
    if kind == "monomial":
        return Monomial(rec.get("coeff", 1.0), tuple((tuple(a), p) for a, p in rec["factors"]))
    if kind == "composite":
        return Composite(rec.get("coeff", 1.0), rec["outer"], MultiIndex(rec["inner"]))
    raise InvalidArgument(f"unknown term type {kind!r}")


def term_to_record(t: Term) -> dict:
    if isinstance(t, Monomial):
        return {"type": "monomial", "coeff": t.coeff,
                "factors": [[list(a), p] for a, p in t.factors]}
    return {"type": "composite", "coeff": t.coeff, "outer": t.outer, "inner": list(t.inner)}


def operator_from_records(records, name: str = "custom",
                          rhs: Optional[Callable] = None) -> OperatorSpec:
    return OperatorSpec(terms=[term_from_record(r) for r in records],
                        rhs=rhs or _zero_rhs, name=name)
