"""Projected primal-dual gradient allocation of time and power across beams.

One iteration:

1. find the worst-case location ``j*`` (lowest secrecy rate);
2. take a projected gradient step on every ``p_l`` and ``t_l`` with the
   Lagrangian that keeps only the ``j*`` rate constraint active;
3. take a projected ascent step on the budget multipliers ``lambda`` (time)
   and ``mu`` (power) using the constraint residuals.

Rates are handled in nats inside the loop; everything reported is in bits.
The iterates are transiently infeasible, so every iterate is rescaled onto
the budgets and the best rescaled point seen is what gets reported.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, fields

import numpy as np
from scipy.optimize import lsq_linear

from .ckm import Scenario
from .errors import InvalidInputError
from .secrecy import Allocation, budget_residuals, evaluate, f_values

__all__ = [
    "SolverConfig",
    "DualState",
    "KktResiduals",
    "SolveReport",
    "primal_step",
    "dual_step",
    "repair",
    "kkt_residuals",
    "certify_kkt",
    "solve_joint",
    "solve_time_only",
    "solve_power_only",
    "baseline_uniform",
    "baseline_los_only",
    "fixed_report",
    "SCHEMES",
    "solve_scheme",
]

log = logging.getLogger(__name__)

LN2 = math.log(2.0)


@dataclass(frozen=True)
class SolverConfig:
    """Step sizes and stopping rule of the primal-dual iteration.

    ``epsilon`` (bits) bounds the change of the mean worst-case rate between
    two consecutive windows of ``window`` iterations.

    With ``scale_steps`` the power step is ``eta_p * p_tx**2`` and the
    power-multiplier step is ``eta_mu / p_tx**2`` (watts), which makes the
    iteration invariant under rescaling the channel gains against the budget.
    Otherwise the values are used as given.
    """

    eta_t: float = 1e-2
    eta_p: float = 1e-2
    eta_lambda: float = 1e-1
    eta_mu: float = 10.0
    epsilon: float = 1e-6
    max_iters: int = 200_000
    feasibility_tol: float = 1e-6
    repair_on_exit: bool = True
    window: int = 200
    scale_steps: bool = True

    def __post_init__(self):
        for name in ("eta_t", "eta_p", "eta_lambda", "eta_mu", "epsilon"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise InvalidInputError(f"{name} must be positive, got {v!r}")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise InvalidInputError(f"max_iters must be an integer >= 1, got {self.max_iters!r}")
        if int(self.window) != self.window or self.window < 1:
            raise InvalidInputError(f"window must be an integer >= 1, got {self.window!r}")
        if not self.feasibility_tol >= 0:
            raise InvalidInputError("feasibility_tol must be >= 0")

    def step_sizes(self, p_tx: float) -> tuple[float, float, float, float]:
        """Effective ``(eta_t, eta_p, eta_lambda, eta_mu)`` for a power budget."""
        if not self.scale_steps:
            return self.eta_t, self.eta_p, self.eta_lambda, self.eta_mu
        s = float(p_tx) ** 2
        return self.eta_t, self.eta_p * s, self.eta_lambda, self.eta_mu / s

    @classmethod
    def from_mapping(cls, mapping) -> "SolverConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(mapping) - known
        if unknown:
            raise InvalidInputError(f"unknown solver option(s): {', '.join(sorted(unknown))}")
        return cls(**mapping)


@dataclass(frozen=True, eq=False)
class DualState:
    """Budget multipliers and the active worst-case location.

    ``nu`` weights the per-location rate constraints.  When it is ``None`` the
    single-active rule applies: weight one on ``active_j``, zero elsewhere.
    """

    lam: float = 0.0
    mu: float = 0.0
    active_j: int = 0
    nu: np.ndarray | None = None

    def weights(self, n_locations: int) -> np.ndarray:
        if self.nu is not None:
            return np.asarray(self.nu, dtype=float)
        w = np.zeros(n_locations)
        w[self.active_j] = 1.0
        return w


@dataclass(frozen=True, eq=False)
class KktResiduals:
    """Max-norm KKT violations of the rate-constraint formulation (nats).

    ``lam``, ``mu`` and ``nu`` are the multipliers the residuals were
    evaluated with.
    """

    stationarity: float
    primal_feasibility: float
    dual_feasibility: float
    complementary_slackness: float
    lam: float
    mu: float
    nu: np.ndarray

    @property
    def max(self) -> float:
        return max(self.stationarity, self.primal_feasibility,
                   self.dual_feasibility, self.complementary_slackness)


@dataclass(frozen=True, eq=False)
class SolveReport:
    scheme: str
    allocation: Allocation
    secrecy_bits: float
    dual: DualState
    iterations: int
    converged: bool
    kkt_residuals: KktResiduals | None = None
    trace: dict | None = None
    message: str = ""


# -- single steps -------------------------------------------------------------

def _rates_nats(alpha, beta_row, secure_row, p):
    q = np.where(secure_row, np.log1p(p * alpha) - np.log1p(p * beta_row), 0.0)
    g = np.where(secure_row, alpha / (1.0 + p * alpha) - beta_row / (1.0 + p * beta_row), 0.0)
    return q, g


def _primal_update(alpha, beta_row, secure_row, t, p, lam, mu, eta_t, eta_p):
    q, g = _rates_nats(alpha, beta_row, secure_row, p)
    p_new = np.maximum(p + eta_p * (g - mu) * t, 0.0)
    t_new = np.maximum(t + eta_t * (q - lam - mu * p), 0.0)
    return t_new, p_new


def _dual_update(t, p, p_tx, lam, mu, eta_lambda, eta_mu):
    r1, r2 = budget_residuals(t, p, p_tx)
    return max(lam + eta_lambda * float(r1), 0.0), max(mu + eta_mu * float(r2), 0.0)


def primal_step(scenario: Scenario, alloc: Allocation, dual: DualState,
                config: SolverConfig) -> Allocation:
    """Simultaneous projected gradient step on ``p`` and ``t`` against ``dual.active_j``.

    Both gradients use the pre-step powers.
    """
    j = dual.active_j
    eta_t, eta_p, _, _ = config.step_sizes(scenario.p_tx)
    t, p = _primal_update(scenario.alpha, scenario.beta[j], scenario.secure[j],
                          alloc.t, alloc.p, dual.lam, dual.mu, eta_t, eta_p)
    return Allocation(t, p)


def dual_step(scenario: Scenario, alloc: Allocation, dual: DualState,
              config: SolverConfig) -> DualState:
    """Projected ascent on the time and power multipliers."""
    _, _, eta_lambda, eta_mu = config.step_sizes(scenario.p_tx)
    lam, mu = _dual_update(alloc.t, alloc.p, scenario.p_tx, dual.lam, dual.mu,
                           eta_lambda, eta_mu)
    return DualState(lam, mu, dual.active_j, dual.nu)


def _repair_arrays(t, p, p_tx, freeze_t=False, freeze_p=False):
    if freeze_p:
        st, e = float(t.sum()), float(p @ t)
        s = min(1.0, 1.0 / st if st > 0 else 1.0, p_tx / e if e > 0 else 1.0)
        return t * s, p
    if not freeze_t:
        st = float(t.sum())
        if st > 1.0:
            t = t / st
    e = float(p @ t)
    if e > p_tx:
        p = p * (p_tx / e)
    return t, p


def repair(scenario: Scenario, alloc: Allocation, freeze_t=False, freeze_p=False) -> Allocation:
    """Scale an allocation back onto the budgets.

    By default ``t`` is shrunk to satisfy the time budget and then ``p`` to
    satisfy the power budget.  With ``freeze_p`` only ``t`` is scaled (both
    budgets are linear in ``t``); with ``freeze_t`` only ``p`` is scaled.
    """
    t, p = _repair_arrays(alloc.t, alloc.p, scenario.p_tx, freeze_t, freeze_p)
    return Allocation(t, p)


# -- KKT diagnostics ----------------------------------------------------------

def _kkt_parts(scenario, alloc):
    q, g = _rates_nats(scenario.alpha, scenario.beta, scenario.secure, alloc.p)
    f = q @ alloc.t
    return q, g, f


def kkt_residuals(scenario: Scenario, alloc: Allocation, dual: DualState, nu=None,
                  free_t=True, free_p=True) -> KktResiduals:
    """KKT violations of the rate-constraint problem at ``alloc`` for given multipliers.

    Stationarity in ``t_l`` is only checked where ``t_l > 0`` and in ``p_l``
    only where ``p_l > 0``; a coordinate held at zero by the projection
    satisfies complementarity with its bound instead.  ``free_t``/``free_p``
    drop the rows of variables a restricted scheme keeps fixed.  Rates are in
    nats.
    """
    J = scenario.n_locations
    w = np.asarray(nu, dtype=float) if nu is not None else dual.weights(J)
    lam, mu = dual.lam, dual.mu
    q, g, f = _kkt_parts(scenario, alloc)
    t, p = alloc.t, alloc.p

    stat = [abs(1.0 - w.sum())]
    if free_t:
        d_t = -lam - mu * p + w @ q
        stat.extend(np.abs(d_t[t > 0]).tolist())
    if free_p:
        d_p = t * (-mu + w @ g)
        stat.extend(np.abs(d_p[p > 0]).tolist())

    r_time, r_power = (float(r) for r in budget_residuals(t, p, scenario.p_tx))
    primal = max(0.0, r_time, r_power, float(-t.min()), float(-p.min()))
    dual_feas = max(0.0, -lam, -mu, float(-w.min()))
    c = float(f.min())
    slack = max(float(np.abs(w * (f - c)).max()), abs(lam * r_time), abs(mu * r_power))
    return KktResiduals(max(stat), primal, dual_feas, slack, float(lam), float(mu), w)


def certify_kkt(scenario: Scenario, alloc: Allocation, free_t=True, free_p=True) -> KktResiduals:
    """KKT residuals at ``alloc`` with the best-fitting nonnegative multipliers.

    For a fixed primal point every KKT condition is linear in
    ``(nu, lambda, mu)``, so the multipliers minimising the stacked residual
    come from a bounded least-squares problem.  A small result certifies
    ``alloc`` as a first-order stationary point.
    """
    J, L = scenario.n_locations, scenario.n_beams
    q, g, f = _kkt_parts(scenario, alloc)
    t, p = alloc.t, alloc.p
    c = float(f.min())
    r_time, r_power = (float(r) for r in budget_residuals(t, p, scenario.p_tx))

    rows, rhs = [], []
    for l in range(L):
        if free_t and t[l] > 0:
            rows.append(np.r_[q[:, l], -1.0, -p[l]])
            rhs.append(0.0)
        if free_p and p[l] > 0:
            rows.append(np.r_[t[l] * g[:, l], 0.0, -t[l]])
            rhs.append(0.0)
    for j in range(J):
        r = np.zeros(J + 2)
        r[j] = f[j] - c
        rows.append(r)
        rhs.append(0.0)
    rows.append(np.r_[np.zeros(J), r_time, 0.0])
    rows.append(np.r_[np.zeros(J), 0.0, r_power])
    rows.append(np.r_[np.ones(J), 0.0, 0.0])
    rhs.extend([0.0, 0.0, 1.0])

    fit = lsq_linear(np.array(rows), np.array(rhs), bounds=(0.0, np.inf),
                     method="bvls", tol=1e-14)
    nu, lam, mu = fit.x[:J], float(fit.x[J]), float(fit.x[J + 1])
    dual = DualState(lam, mu, int(np.argmin(f)), nu)
    return kkt_residuals(scenario, alloc, dual, free_t=free_t, free_p=free_p)


# -- iteration ----------------------------------------------------------------

def _degenerate_location(scenario: Scenario):
    """A location against which no beam is strictly secure, or ``None``."""
    strictly = scenario.alpha[None, :] > scenario.beta
    dead = np.flatnonzero(~strictly.any(axis=1))
    return int(dead[0]) if dead.size else None


def _finish(scheme, scenario, alloc, dual, iterations, converged, free_t, free_p,
            trace=None, message=""):
    ev = evaluate(scenario, alloc)
    dual = DualState(dual.lam, dual.mu, ev.worst_index, dual.nu)
    kkt = certify_kkt(scenario, alloc, free_t=free_t, free_p=free_p)
    return SolveReport(scheme, alloc, ev.worst_value, dual, iterations, converged,
                       kkt, trace, message)


def _iterate(scheme, scenario, config, init, freeze_t, freeze_p, trace):
    free_t, free_p = not freeze_t, not freeze_p
    dead = _degenerate_location(scenario)
    if dead is not None:
        msg = f"no beam is strictly secure against location {dead}; secrecy rate is identically 0"
        log.info(msg)
        return _finish(scheme, scenario, init, DualState(active_j=dead), 0, True,
                       free_t, free_p, message=msg)

    alpha, beta, secure, p_tx = scenario.alpha, scenario.beta, scenario.secure, scenario.p_tx
    eta_t, eta_p, eta_lambda, eta_mu = config.step_sizes(p_tx)
    eta_t = 0.0 if freeze_t else eta_t
    eta_p = 0.0 if freeze_p else eta_p
    W, eps, tol = config.window, config.epsilon, config.feasibility_tol

    t = np.array(init.t, dtype=float)
    p = np.array(init.p, dtype=float)
    lam = mu = 0.0

    def candidate(t, p):
        if config.repair_on_exit:
            return _repair_arrays(t, p, p_tx, freeze_t, freeze_p)
        r1, r2 = budget_residuals(t, p, p_tx)
        if r1 <= tol and r2 <= tol * p_tx:
            return t, p
        return None

    best_c = -math.inf
    best = None
    cand = candidate(t, p)
    if cand is not None:
        best = (cand[0].copy(), cand[1].copy())
        best_c = float(f_values(scenario, *best).min())

    c_hist = np.empty(config.max_iters)
    j_hist = np.empty(config.max_iters, dtype=np.int64)
    if trace:
        tr_lam = np.empty(config.max_iters)
        tr_mu = np.empty(config.max_iters)
        tr_best = np.empty(config.max_iters)

    converged = False
    k = 0
    while k < config.max_iters:
        q_all = np.where(secure, np.log1p(p * alpha) - np.log1p(p * beta), 0.0)
        f = q_all @ t
        j = int(np.argmin(f))
        c_hist[k] = f[j] / LN2
        j_hist[k] = j

        t, p = _primal_update(alpha, beta[j], secure[j], t, p, lam, mu, eta_t, eta_p)
        lam, mu = _dual_update(t, p, p_tx, lam, mu, eta_lambda, eta_mu)

        cand = candidate(t, p)
        if cand is not None:
            c = float(f_values(scenario, *cand).min())
            if c > best_c:
                best_c = c
                best = (cand[0].copy(), cand[1].copy())
        if trace:
            tr_lam[k], tr_mu[k], tr_best[k] = lam, mu, best_c
        k += 1

        if k >= 2 * W:
            drift = abs(c_hist[k - W:k].mean() - c_hist[k - 2 * W:k - W].mean())
            if drift < eps:
                r1, r2 = budget_residuals(t, p, p_tx)
                if r1 <= tol and r2 <= tol * p_tx:
                    converged = True
                    break

    if best is None:
        best = (t, p)
    tail = j_hist[max(0, k - W):k]
    nu = np.bincount(tail, minlength=scenario.n_locations) / max(tail.size, 1)
    dual = DualState(lam, mu, int(j_hist[k - 1]), nu)

    tr = None
    if trace:
        tr = {"c": c_hist[:k].copy(), "best_c": tr_best[:k].copy(), "lam": tr_lam[:k].copy(),
              "mu": tr_mu[:k].copy(), "active_j": j_hist[:k].copy()}
    msg = "" if converged else f"stopping rule not met within {config.max_iters} iterations"
    if not converged:
        log.warning("%s: %s", scheme, msg)
    return _finish(scheme, scenario, Allocation(*best), dual, k, converged,
                   free_t, free_p, trace=tr, message=msg)


def _check_init(scenario, init):
    if init.n_beams != scenario.n_beams:
        raise InvalidInputError(
            f"initial allocation has {init.n_beams} beams, scenario has {scenario.n_beams}"
        )
    if np.any(init.t < 0) or np.any(init.p < 0):
        raise InvalidInputError("initial allocation must be nonnegative")


def solve_joint(scenario: Scenario, config: SolverConfig | None = None,
                init: Allocation | None = None, trace: bool = False) -> SolveReport:
    """Jointly allocate time and power to maximise the worst-case secrecy rate.

    Starts from the uniform allocation with zero multipliers unless ``init``
    is given.  Non-convergence is reported through ``converged=False``, never
    raised.  The method is a local primal-dual scheme on a nonconvex problem.
    """
    config = config or SolverConfig()
    init = init if init is not None else Allocation.uniform(scenario)
    _check_init(scenario, init)
    return _iterate("joint", scenario, config, init, False, False, trace)


def solve_time_only(scenario: Scenario, config: SolverConfig | None = None,
                    fixed_p=None, trace: bool = False) -> SolveReport:
    """Optimise time fractions with powers frozen (default ``p_l = p_tx``)."""
    config = config or SolverConfig()
    L = scenario.n_beams
    p = np.full(L, scenario.p_tx) if fixed_p is None else np.asarray(fixed_p, dtype=float)
    init = Allocation(np.full(L, 1.0 / L), p)
    _check_init(scenario, init)
    return _iterate("time_only", scenario, config, init, False, True, trace)


def solve_power_only(scenario: Scenario, config: SolverConfig | None = None,
                     fixed_t=None, trace: bool = False) -> SolveReport:
    """Optimise powers with time fractions frozen (default ``t_l = 1/L``)."""
    config = config or SolverConfig()
    L = scenario.n_beams
    t = np.full(L, 1.0 / L) if fixed_t is None else np.asarray(fixed_t, dtype=float)
    if t.sum() > 1.0 + config.feasibility_tol:
        raise InvalidInputError(f"fixed_t sums to {t.sum():g} > 1")
    init = Allocation(t, np.full(L, scenario.p_tx))
    _check_init(scenario, init)
    return _iterate("power_only", scenario, config, init, True, False, trace)


def fixed_report(scheme: str, scenario: Scenario, alloc: Allocation) -> SolveReport:
    """Wrap a fixed (non-optimised) allocation in a report."""
    return _finish(scheme, scenario, alloc, DualState(), 0, True, False, False)


def baseline_uniform(scenario: Scenario) -> SolveReport:
    """Equal time shares, ``p_l = p_tx`` on every beam."""
    return fixed_report("uniform", scenario, Allocation.uniform(scenario))


def baseline_los_only(scenario: Scenario, los_index: int = 0) -> SolveReport:
    """All time and the whole budget on a single beam."""
    L = scenario.n_beams
    if not 0 <= los_index < L:
        raise InvalidInputError(f"los_index {los_index} out of range for {L} beams")
    t = np.zeros(L)
    p = np.zeros(L)
    t[los_index] = 1.0
    p[los_index] = scenario.p_tx
    return fixed_report("los_only", scenario, Allocation(t, p))


SCHEMES = ("los_only", "uniform", "power_only", "time_only", "joint")


def solve_scheme(scheme: str, scenario: Scenario, config: SolverConfig | None = None,
                 los_index: int = 0) -> SolveReport:
    """Dispatch one of :data:`SCHEMES` with its default settings."""
    if scheme == "joint":
        return solve_joint(scenario, config)
    if scheme == "time_only":
        return solve_time_only(scenario, config)
    if scheme == "power_only":
        return solve_power_only(scenario, config)
    if scheme == "uniform":
        return baseline_uniform(scenario)
    if scheme == "los_only":
        return baseline_los_only(scenario, los_index)
    raise InvalidInputError(f"unknown scheme {scheme!r}; expected one of {', '.join(SCHEMES)}")

