"""Solver-agnostic intermediate representation of the bidding models.

A ModelIR holds variables, linear rows, optionally-active bilinear rows
and a linear minimization objective. Variables are referenced by integer
index; a registry maps structured names like ``x0[3]`` or ``Lamu[5,2]``
to indices so that builders and verifiers agree on the layout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .types import DomainError

CONTINUOUS = "continuous"
BINARY = "binary"

SENSES = ("<=", ">=", "==")


@dataclass
class Variable:
    name: str
    kind: str = CONTINUOUS
    lower: float = -np.inf
    upper: float = np.inf


@dataclass
class LinearRow:
    """sum(coeff * var) sense rhs."""

    name: str
    coeffs: list[tuple[int, float]]
    sense: str
    rhs: float


@dataclass
class BilinearRow:
    """sum(q_coeff * var_i * var_j) + sum(coeff * var) sense rhs.

    ``active`` marks whether the row is part of the model being solved;
    inactive rows are kept for post-hoc violation counting.
    """

    name: str
    quad: list[tuple[int, int, float]]
    linear: list[tuple[int, float]]
    sense: str
    rhs: float
    active: bool = True


class ModelError(ValueError):
    """Inconsistent model construction."""


@dataclass
class ModelIR:
    variables: list[Variable] = field(default_factory=list)
    rows: list[LinearRow] = field(default_factory=list)
    bilinear_rows: list[BilinearRow] = field(default_factory=list)
    objective: dict[int, float] = field(default_factory=dict)
    objective_constant: float = 0.0
    registry: dict[str, int] = field(default_factory=dict)

    # -- construction -------------------------------------------------
    def add_variable(self, name: str, kind: str = CONTINUOUS,
                     lower: float = -np.inf, upper: float = np.inf) -> int:
        if name in self.registry:
            raise ModelError(f"duplicate variable {name!r}")
        if kind not in (CONTINUOUS, BINARY):
            raise ModelError(f"unknown variable kind {kind!r}")
        self.variables.append(Variable(name=name, kind=kind,
                                       lower=lower, upper=upper))
        idx = len(self.variables) - 1
        self.registry[name] = idx
        return idx

    def var(self, name: str) -> int:
        try:
            return self.registry[name]
        except KeyError:
            raise ModelError(f"unknown variable {name!r}") from None

    def has_var(self, name: str) -> bool:
        return name in self.registry

    def add_row(self, name: str, coeffs, sense: str, rhs: float) -> int:
        self._check_refs(name, (i for i, _ in coeffs), sense)
        self.rows.append(LinearRow(name=name, coeffs=list(coeffs),
                                   sense=sense, rhs=float(rhs)))
        return len(self.rows) - 1

    def add_bilinear(self, name: str, quad, linear, sense: str, rhs: float,
                     active: bool = True) -> int:
        refs = [i for i, _, _ in quad] + [j for _, j, _ in quad]
        refs += [i for i, _ in linear]
        self._check_refs(name, refs, sense)
        self.bilinear_rows.append(BilinearRow(
            name=name, quad=list(quad), linear=list(linear), sense=sense,
            rhs=float(rhs), active=active))
        return len(self.bilinear_rows) - 1

    def add_objective_term(self, idx: int, coeff: float) -> None:
        if not (0 <= idx < len(self.variables)):
            raise ModelError(f"objective references unknown variable {idx}")
        self.objective[idx] = self.objective.get(idx, 0.0) + float(coeff)

    def fix_variable(self, name: str, value: float) -> None:
        """Collapse a variable's bounds to a constant (keeps indices
        stable across model variants)."""
        v = self.variables[self.var(name)]
        v.lower = v.upper = float(value)
        v.kind = CONTINUOUS

    def _check_refs(self, name, refs, sense):
        if sense not in SENSES:
            raise ModelError(f"row {name!r}: unknown sense {sense!r}")
        n = len(self.variables)
        for i in refs:
            if not (0 <= i < n):
                raise ModelError(f"row {name!r} references unknown variable {i}")

    # -- inspection ---------------------------------------------------
    @property
    def n_vars(self) -> int:
        return len(self.variables)

    @property
    def n_binaries(self) -> int:
        return sum(1 for v in self.variables if v.kind == BINARY)

    @property
    def n_bilinear_active(self) -> int:
        return sum(1 for r in self.bilinear_rows if r.active)

    def objective_vector(self) -> np.ndarray:
        c = np.zeros(self.n_vars)
        for i, coeff in self.objective.items():
            c[i] = coeff
        return c

    def bounds_arrays(self):
        lo = np.array([v.lower for v in self.variables])
        hi = np.array([v.upper for v in self.variables])
        return lo, hi

    def validate(self) -> None:
        for v in self.variables:
            if v.lower > v.upper + 1e-12:
                raise ModelError(f"variable {v.name}: empty bound interval")
            if v.kind == BINARY and (v.lower < -1e-12 or v.upper > 1 + 1e-12):
                raise ModelError(f"binary {v.name}: bounds outside [0, 1]")
        names = set()
        for row in self.rows:
            if row.name in names:
                raise ModelError(f"duplicate row name {row.name!r}")
            names.add(row.name)

    # -- evaluation ---------------------------------------------------
    def point_from_map(self, values: dict[str, float]) -> np.ndarray:
        x = np.zeros(self.n_vars)
        seen = np.zeros(self.n_vars, dtype=bool)
        for name, val in values.items():
            idx = self.var(name)
            x[idx] = val
            seen[idx] = True
        if not seen.all():
            missing = [v.name for v, s in zip(self.variables, seen) if not s]
            raise ModelError(f"point missing variables: {missing[:5]}...")
        return x


def eval_linear(row: LinearRow, point: np.ndarray) -> float:
    return float(sum(c * point[i] for i, c in row.coeffs))


def eval_bilinear(row: BilinearRow, point: np.ndarray) -> float:
    v = sum(c * point[i] * point[j] for i, j, c in row.quad)
    v += sum(c * point[i] for i, c in row.linear)
    return float(v)


def residual(row, point: np.ndarray) -> float:
    """Signed slack of a row at a point; >= 0 means satisfied."""
    if isinstance(row, BilinearRow):
        lhs = eval_bilinear(row, point)
    else:
        lhs = eval_linear(row, point)
    if row.sense == "<=":
        return row.rhs - lhs
    if row.sense == ">=":
        return lhs - row.rhs
    return -abs(lhs - row.rhs)


@dataclass(frozen=True)
class ModelOptions:
    """Model-variant selection and market conventions."""

    variant: str = "restriction"
    fcr_enabled: bool = True
    symmetric: bool = True
    intraday: bool = False
    terminal_soc_floor: float | None = None
    limited_arbitrage: bool = False
    limited_arbitrage_mode: str = "per_block"  # or "per_interval"
    fcr_block_len: int | None = None
    da_block_len: int | None = None

    VARIANTS = ("exact", "relaxation", "restriction", "arbitrage_only",
                "lossless_lp", "no_sell_lp")

    def __post_init__(self):
        if self.variant not in self.VARIANTS:
            raise DomainError(f"unknown variant {self.variant!r}")
        if self.limited_arbitrage_mode not in ("per_block", "per_interval"):
            raise DomainError(
                f"unknown limited_arbitrage_mode {self.limited_arbitrage_mode!r}")
        if self.limited_arbitrage and not self.fcr_enabled:
            raise DomainError("limited_arbitrage requires fcr_enabled")
        if self.variant == "arbitrage_only" and self.fcr_enabled:
            raise DomainError("arbitrage_only excludes FCR participation")
