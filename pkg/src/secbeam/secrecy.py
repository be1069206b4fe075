"""Max-min secrecy objective over candidate eavesdropper locations.

For location ``j`` the secrecy rate of an allocation is::

    f_j(p, t) = sum_{l in L_j} t_l * log2((1 + p_l alpha_l) / (1 + p_l beta_jl))

where ``L_j = {l : alpha_l >= beta_jl}`` holds the beams that are secure
against location ``j``.  Beams outside ``L_j`` would contribute a negative
log-ratio and are dropped, which is the same as clamping every term at zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ckm import Scenario
from .errors import InvalidInputError

__all__ = [
    "Allocation",
    "SecrecyEvaluation",
    "FeasibilityReport",
    "secure_sets",
    "beam_rates",
    "f_values",
    "eval_f",
    "evaluate",
    "budget_residuals",
    "is_feasible",
]


@dataclass(frozen=True, eq=False)
class Allocation:
    """Per-beam time fractions ``t`` and transmit powers ``p`` (watts)."""

    t: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        t = np.array(self.t, dtype=float).ravel()
        p = np.array(self.p, dtype=float).ravel()
        if t.shape != p.shape:
            raise InvalidInputError(f"t has {t.shape[0]} entries but p has {p.shape[0]}")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(p))):
            raise InvalidInputError("allocation entries must be finite")
        t.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "p", p)

    @property
    def n_beams(self) -> int:
        return self.t.shape[0]

    @classmethod
    def uniform(cls, scenario: Scenario) -> "Allocation":
        """Equal time shares with the power budget exactly spent."""
        L = scenario.n_beams
        return cls(np.full(L, 1.0 / L), np.full(L, scenario.p_tx))


@dataclass(frozen=True, eq=False)
class SecrecyEvaluation:
    f_values: np.ndarray  # bits, one per location
    worst_index: int
    worst_value: float


@dataclass(frozen=True)
class FeasibilityReport:
    feasible: bool
    violations: tuple = ()  # (constraint name, residual) pairs
    time_residual: float = 0.0
    power_residual: float = 0.0

    def __bool__(self):
        return self.feasible


def secure_sets(scenario: Scenario) -> list[frozenset]:
    """Index sets ``L_j`` of beams with ``alpha_l >= beta_jl``, one per location."""
    return [frozenset(np.flatnonzero(row).tolist()) for row in scenario.secure]


def beam_rates(scenario: Scenario, p, base=2.0) -> np.ndarray:
    """Per-location, per-beam secure log-ratios.

    ``p`` has shape ``(..., L)``; the result has shape ``(..., J, L)`` and is
    zero wherever the beam is not in ``L_j``.  ``base`` selects bits (2) or
    nats (``np.e``).
    """
    p = np.asarray(p, dtype=float)[..., None, :]
    num = np.log1p(p * scenario.alpha)
    den = np.log1p(p * scenario.beta)
    rates = np.where(scenario.secure, num - den, 0.0)
    if base != np.e:
        rates = rates / np.log(base)
    return rates


def f_values(scenario: Scenario, t, p) -> np.ndarray:
    """Vectorised ``f_j`` in bits; ``t`` and ``p`` broadcast over leading axes."""
    t = np.asarray(t, dtype=float)
    return np.einsum("...jl,...l->...j", beam_rates(scenario, p), t)


def _check(scenario: Scenario, alloc: Allocation):
    if alloc.n_beams != scenario.n_beams:
        raise InvalidInputError(
            f"allocation has {alloc.n_beams} beams, scenario has {scenario.n_beams}"
        )
    if np.any(alloc.t < 0) or np.any(alloc.p < 0):
        raise InvalidInputError("allocation must be nonnegative")


def eval_f(scenario: Scenario, alloc: Allocation, j: int) -> float:
    """Secrecy rate in bits against location ``j``.  Feasibility is not required."""
    _check(scenario, alloc)
    if not 0 <= j < scenario.n_locations:
        raise IndexError(f"location index {j} out of range [0, {scenario.n_locations})")
    return float(f_values(scenario, alloc.t, alloc.p)[j])


def evaluate(scenario: Scenario, alloc: Allocation) -> SecrecyEvaluation:
    """All ``f_j`` plus the worst-case location (smallest index on ties)."""
    _check(scenario, alloc)
    f = f_values(scenario, alloc.t, alloc.p)
    f.setflags(write=False)
    j = int(np.argmin(f))
    return SecrecyEvaluation(f, j, float(f[j]))


def budget_residuals(t, p, p_tx):
    """``(sum t - 1, sum p*t - p_tx)`` over the last axis.

    Terms are accumulated left to right so that batch callers and
    :func:`is_feasible` agree to the last bit.
    """
    t = np.asarray(t, dtype=float)
    p = np.asarray(p, dtype=float)
    st = t[..., 0]
    e = p[..., 0] * t[..., 0]
    for l in range(1, t.shape[-1]):
        st = st + t[..., l]
        e = e + p[..., l] * t[..., l]
    return st - 1.0, e - p_tx


def is_feasible(scenario: Scenario, alloc: Allocation, tol: float = 0.0) -> FeasibilityReport:
    """Check the time budget, the average-power budget and nonnegativity.

    Feasible iff ``sum t <= 1 + tol``, ``sum p t <= p_tx (1 + tol)`` and every
    entry is ``>= -tol``.
    """
    if alloc.n_beams != scenario.n_beams:
        raise InvalidInputError(
            f"allocation has {alloc.n_beams} beams, scenario has {scenario.n_beams}"
        )
    r_time, r_power = (float(r) for r in budget_residuals(alloc.t, alloc.p, scenario.p_tx))
    violations = []
    if r_time > tol:
        violations.append(("time_budget", r_time))
    if r_power > scenario.p_tx * tol:
        violations.append(("power_budget", r_power))
    neg_t = float(-alloc.t.min())
    neg_p = float(-alloc.p.min())
    if neg_t > tol:
        violations.append(("t_nonnegative", neg_t))
    if neg_p > tol:
        violations.append(("p_nonnegative", neg_p))
    return FeasibilityReport(not violations, tuple(violations), r_time, r_power)
