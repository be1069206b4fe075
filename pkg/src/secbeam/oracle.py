"""Brute-force reference optimum by exhaustive grid search.

Only the objective and budget checks from :mod:`secbeam.secrecy` are used
here, so the oracle shares no code path with the iterative solver.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .ckm import Scenario
from .errors import InvalidInputError
from .secrecy import Allocation, beam_rates, budget_residuals, evaluate, is_feasible

__all__ = ["GridSpec", "OracleResult", "Verification", "grid_search", "verify_report"]

MAX_BEAMS = 3
SHRINK = 5.0
_CHUNK_ELEMS = 2_000_000


@dataclass(frozen=True)
class GridSpec:
    t_steps: int = 101
    p_steps: int = 101
    refine_levels: int = 3

    def __post_init__(self):
        if self.t_steps < 2 or self.p_steps < 2:
            raise InvalidInputError("grid needs at least 2 steps per axis")
        if self.refine_levels < 0:
            raise InvalidInputError("refine_levels must be >= 0")


@dataclass(frozen=True, eq=False)
class OracleResult:
    allocation: Allocation
    c_bits: float
    evaluated: int  # number of feasible grid points scored


@dataclass(frozen=True)
class Verification:
    passed: bool
    gap: float  # (c_oracle - c_report) / c_oracle; negative when the report beats the grid
    c_oracle: float
    c_report: float


def power_cap(scenario: Scenario, spec: GridSpec) -> float:
    """Upper end of each beam's power grid.

    A beam may run above ``p_tx`` while it is on for only part of the frame,
    so the cap follows the smallest nonzero time fraction on the grid.
    """
    t_min = 1.0 / (spec.t_steps - 1)
    return min(scenario.p_tx / max(t_min, 1e-3), 1e3 * scenario.p_tx)


def _axis(center, width, upper, steps):
    # Keep the full width inside [0, upper] by shifting rather than clipping.
    width = min(width, upper)
    lo = min(max(center - width / 2.0, 0.0), upper - width)
    return np.linspace(lo, lo + width, steps)


def _search_box(scenario, t_axes, p_axes, incumbent):
    """Score every feasible (t, p) combination on the product grid.

    Grid points are visited in lexicographic order of ``(t, p)`` and only a
    strictly better point replaces the incumbent, so ties go to the smallest
    allocation.
    """
    L = scenario.n_beams
    t_pts = np.array(list(itertools.product(*t_axes)))
    t_pts = t_pts[budget_residuals(t_pts, np.zeros_like(t_pts), 1.0)[0] <= 0.0]
    p_pts = np.array(list(itertools.product(*p_axes)))
    p_grid = np.stack(p_axes, axis=1)  # (steps, L): column l is beam l's power axis
    rates = beam_rates(scenario, p_grid)  # (steps, J, L), bits
    idx = np.array(list(itertools.product(range(p_grid.shape[0]), repeat=L)))
    # comb[l][j] is beam l's rate against location j for every p combination
    comb = [np.ascontiguousarray(rates[idx[:, l], :, l].T) for l in range(L)]
    J = scenario.n_locations

    best_c, best_t, best_p = incumbent
    n_eval = 0
    chunk = max(1, _CHUNK_ELEMS // p_pts.shape[0])
    for start in range(0, t_pts.shape[0], chunk):
        tc = t_pts[start:start + chunk]
        _, r_power = budget_residuals(tc[:, None, :], p_pts[None, :, :], scenario.p_tx)
        ok = r_power <= 0.0
        c = None
        for j in range(J):
            f = tc[:, 0, None] * comb[0][j]
            for l in range(1, L):
                f += tc[:, l, None] * comb[l][j]
            c = f if c is None else np.minimum(c, f, out=c)
        c[~ok] = -np.inf
        n_eval += int(ok.sum())
        flat = int(np.argmax(c))
        ci, pi = divmod(flat, p_pts.shape[0])
        if c[ci, pi] > best_c:
            best_c = float(c[ci, pi])
            best_t, best_p = tc[ci].copy(), p_pts[pi].copy()
    return (best_c, best_t, best_p), n_eval


def grid_search(scenario: Scenario, spec: GridSpec | None = None) -> OracleResult:
    """Best worst-case secrecy rate over a dense, recursively refined grid.

    Level 0 covers ``t`` on the simplex ``sum t <= 1`` and each ``p_l`` on
    ``[0, power_cap]``; grid points violating the power budget are
    discarded.  Each refinement level re-grids a box ``SHRINK`` times
    narrower around the incumbent.  Limited to ``L <= 3`` beams.
    """
    spec = spec or GridSpec()
    L = scenario.n_beams
    if L > MAX_BEAMS:
        raise InvalidInputError(f"grid search supports at most {MAX_BEAMS} beams, got {L}")
    p_max = power_cap(scenario, spec)

    incumbent = (-np.inf, None, None)
    total = 0
    t_width, p_width = 1.0, p_max
    center_t = np.full(L, 0.5)
    center_p = np.full(L, p_max / 2.0)
    for level in range(spec.refine_levels + 1):
        t_axes = [_axis(center_t[l], t_width, 1.0, spec.t_steps) for l in range(L)]
        p_axes = [_axis(center_p[l], p_width, p_max, spec.p_steps) for l in range(L)]
        incumbent, n = _search_box(scenario, t_axes, p_axes, incumbent)
        total += n
        center_t, center_p = incumbent[1], incumbent[2]
        t_width /= SHRINK
        p_width /= SHRINK

    _, t, p = incumbent
    alloc = Allocation(t, p)
    if not is_feasible(scenario, alloc, tol=0.0):
        raise RuntimeError("grid point escaped the budget filter")
    return OracleResult(alloc, evaluate(scenario, alloc).worst_value, total)


def verify_report(scenario: Scenario, report, spec: GridSpec | None = None,
                  rel_tol: float = 0.01, oracle: OracleResult | None = None) -> Verification:
    """Compare a solver report against the grid optimum.

    Passes iff ``c_report >= c_oracle * (1 - rel_tol)``.  A precomputed
    ``oracle`` result may be passed to avoid repeating the search.
    """
    if not is_feasible(scenario, report.allocation, tol=1e-9):
        raise InvalidInputError("report allocation is infeasible")
    if oracle is None:
        oracle = grid_search(scenario, spec)
    c_o, c_r = oracle.c_bits, float(report.secrecy_bits)
    gap = (c_o - c_r) / c_o if c_o > 0 else (0.0 if c_r >= 0 else float("inf"))
    return Verification(c_r >= c_o * (1.0 - rel_tol), gap, c_o, c_r)
