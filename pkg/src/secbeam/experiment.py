"""Scenario/experiment files and the sweep harness behind ``secbeam run``.

Scenario and experiment files are YAML documents; CKM files use the plain
text format in :mod:`secbeam.ckm`.  Relative input paths inside a file
resolve against that file's directory; a relative ``output`` path resolves
against the working directory.  The grammar of every format is in
``docs/formats.md``.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from .ckm import Scenario, build_scenario, read_ckm
from .errors import FormatError, InvalidInputError
from .oracle import MAX_BEAMS, GridSpec, grid_search, verify_report
from .secrecy import Allocation, is_feasible
from .solver import (
    SCHEMES,
    SolveReport,
    SolverConfig,
    baseline_los_only,
    fixed_report,
    solve_power_only,
    solve_scheme,
    solve_time_only,
)

__all__ = [
    "ExperimentSpec",
    "ExperimentResult",
    "load_scenario",
    "load_scenario_config",
    "load_experiment",
    "run_experiment",
    "format_csv",
]

log = logging.getLogger(__name__)

SWEEP_KINDS = ("none", "los_power", "total_power")
MONOTONE_TOL = 1e-4


# -- YAML helpers -------------------------------------------------------------

class _Doc:
    """A parsed YAML mapping that remembers where its keys and list items sit.

    ``lines`` maps ``key``, ``key.subkey`` and ``key[i]`` to 1-based lines.
    """

    def __init__(self, path: Path | None, data: dict, lines: dict):
        self.path = path
        self.data = data
        self.lines = lines

    @classmethod
    def parse(cls, text: str, path: Path | None = None) -> "_Doc":
        try:
            data = yaml.safe_load(text)
            node = yaml.compose(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            line = mark.line + 1 if mark is not None else None
            raise FormatError(f"YAML syntax error: {getattr(exc, 'problem', exc)}",
                              path, line) from None
        if not isinstance(data, dict):
            raise FormatError("expected a mapping at the top level", path, 1)
        lines = {}
        for k, v in node.value:
            lines[k.value] = k.start_mark.line + 1
            if isinstance(v, yaml.MappingNode):
                for kk, _ in v.value:
                    lines[f"{k.value}.{kk.value}"] = kk.start_mark.line + 1
            elif isinstance(v, yaml.SequenceNode):
                for i, item in enumerate(v.value):
                    lines[f"{k.value}[{i}]"] = item.start_mark.line + 1
        return cls(path, data, lines)

    def section(self, key) -> "_Doc":
        """An inline mapping under ``key``, reported against this file."""
        prefix = key + "."
        lines = {k[len(prefix):]: v for k, v in self.lines.items() if k.startswith(prefix)}
        return _Doc(self.path, self.data[key], lines)

    @classmethod
    def read(cls, path) -> "_Doc":
        path = Path(path)
        try:
            text = path.read_text()
        except FileNotFoundError:
            raise FormatError("file not found", path) from None
        return cls.parse(text, path)

    def error(self, key, message) -> FormatError:
        return FormatError(f"{key}: {message}", self.path, self.lines.get(key))

    def require(self, key):
        if key not in self.data:
            raise FormatError(f"missing required key {key!r}", self.path)
        return self.data[key]

    def resolve(self, rel) -> Path:
        rel = Path(rel)
        if rel.is_absolute() or self.path is None:
            return rel
        return self.path.parent / rel


def _float_list(doc, key, value):
    if not isinstance(value, list) or not value:
        raise doc.error(key, "expected a non-empty list of numbers")
    out = []
    for v in value:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise doc.error(key, f"expected a number, got {v!r}")
        out.append(float(v))
    return out


def _positive(doc, key, value):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not value > 0:
        raise doc.error(key, f"expected a positive number, got {value!r}")
    return float(value)


def _labels(doc, key, n):
    value = doc.data.get(key)
    if value is None:
        return None
    if not isinstance(value, list) or len(value) != n:
        raise doc.error(key, f"expected a list of {n} names")
    return tuple(str(v) for v in value)


# -- scenarios ------------------------------------------------------------------

def _scenario_from_doc(doc: _Doc) -> Scenario:
    p_tx = _positive(doc, "p_tx_watts", doc.require("p_tx_watts"))

    if "ckm_file" in doc.data:
        if "alpha_per_watt" in doc.data or "beta_per_watt" in doc.data:
            raise doc.error("ckm_file", "give either ckm_file or alpha/beta, not both")
        ckm = read_ckm(doc.resolve(doc.data["ckm_file"]))
        rx = _float_list(doc, "rx_snr", doc.require("rx_snr"))
        if len(rx) != ckm.n_angles:
            raise doc.error("rx_snr", f"has {len(rx)} entries but the CKM has "
                                      f"{ckm.n_angles} angles")
        if min(rx) < 0:
            raise doc.error("rx_snr", "receiver SNRs must be >= 0")
        return build_scenario(ckm, rx, p_tx, beam_labels=_labels(doc, "beam_labels", len(rx)))

    alpha = _float_list(doc, "alpha_per_watt", doc.require("alpha_per_watt"))
    rows = doc.require("beta_per_watt")
    if not isinstance(rows, list) or not rows:
        raise doc.error("beta_per_watt", "expected a list of rows (one per location)")
    beta = []
    for j, row in enumerate(rows):
        key = f"beta_per_watt[{j}]"
        if not isinstance(row, list):
            raise doc.error(key, "row is not a list")
        r = _float_list(doc, key, row)
        if len(r) != len(alpha):
            raise doc.error(
                key,
                f"row {j} has {len(r)} columns but alpha_per_watt has {len(alpha)} beams "
                f"(beta is {len(rows)}x{len(r)}, expected {len(rows)}x{len(alpha)})",
            )
        beta.append(r)
    if min(alpha) < 0:
        raise doc.error("alpha_per_watt", "gains must be >= 0")
    for j, r in enumerate(beta):
        if min(r) < 0:
            raise doc.error(f"beta_per_watt[{j}]", "gains must be >= 0")
    return Scenario(alpha, beta, p_tx,
                    beam_labels=_labels(doc, "beam_labels", len(alpha)),
                    location_labels=_labels(doc, "location_labels", len(beta)))


def _solver_from_doc(doc: _Doc, key="solver", base: SolverConfig | None = None) -> SolverConfig:
    base = base or SolverConfig()
    overrides = doc.data.get(key) or {}
    if not isinstance(overrides, dict):
        raise doc.error(key, "expected a mapping of solver options")
    known = {f.name for f in fields(SolverConfig)}
    for k in overrides:
        if k not in known:
            raise FormatError(f"{key}: unknown solver option {k!r}", doc.path,
                              doc.lines.get(f"{key}.{k}"))
    merged = {f.name: getattr(base, f.name) for f in fields(SolverConfig)}
    merged.update(overrides)
    try:
        return SolverConfig(**merged)
    except InvalidInputError as exc:
        raise doc.error(key, str(exc)) from None


def load_scenario(path) -> Scenario:
    """Read an inline (alpha/beta) or CKM-backed scenario file."""
    return _scenario_from_doc(_Doc.read(path))


def load_scenario_config(path) -> SolverConfig:
    """Solver settings from a scenario file's optional ``solver`` section."""
    return _solver_from_doc(_Doc.read(path))


# -- experiments ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ExperimentSpec:
    scenario: Scenario
    schemes: tuple = SCHEMES
    sweep: str = "none"
    sweep_values: tuple = ()
    output: Path | None = None
    solver: SolverConfig = field(default_factory=SolverConfig)
    oracle_check: bool = False
    oracle_grid: GridSpec = field(default_factory=GridSpec)
    los_index: int = 0

    def __post_init__(self):
        if self.sweep not in SWEEP_KINDS:
            raise InvalidInputError(f"sweep must be one of {SWEEP_KINDS}, got {self.sweep!r}")
        if not self.schemes:
            raise InvalidInputError("at least one scheme is required")
        for s in self.schemes:
            if s not in SCHEMES:
                raise InvalidInputError(f"unknown scheme {s!r}; expected one of {SCHEMES}")
        if len(set(self.schemes)) != len(self.schemes):
            raise InvalidInputError("schemes must not repeat")
        vals = tuple(float(v) for v in self.sweep_values)
        if self.sweep != "none":
            if not vals:
                raise InvalidInputError("sweep values must be non-empty")
            if any(b <= a for a, b in zip(vals, vals[1:])):
                raise InvalidInputError("sweep values must be strictly increasing")
            if any(not (v > 0 if self.sweep == "total_power" else v >= 0) for v in vals):
                raise InvalidInputError("sweep values out of range")
        object.__setattr__(self, "sweep_values", vals)
        if not 0 <= self.los_index < self.scenario.n_beams:
            raise InvalidInputError(f"los_index {self.los_index} out of range")
        if self.oracle_check and self.scenario.n_beams > MAX_BEAMS:
            raise InvalidInputError(f"oracle_check needs at most {MAX_BEAMS} beams")


def load_experiment(path) -> ExperimentSpec:
    """Read an experiment file.

    ``scenario`` is either a path to a scenario file or an inline mapping
    with the same keys.  Solver options from the scenario file are applied
    first and the experiment's own ``solver`` section overrides them.
    """
    doc = _Doc.read(path)
    src = doc.require("scenario")
    if isinstance(src, str):
        sdoc = _Doc.read(doc.resolve(src))
    elif isinstance(src, dict):
        sdoc = doc.section("scenario")
    else:
        raise doc.error("scenario", "expected a file path or a mapping")
    scenario = _scenario_from_doc(sdoc)
    solver = _solver_from_doc(doc, base=_solver_from_doc(sdoc))

    schemes = doc.data.get("schemes", list(SCHEMES))
    if not isinstance(schemes, list):
        raise doc.error("schemes", "expected a list")
    sweep = doc.data.get("sweep") or {"kind": "none"}
    if not isinstance(sweep, dict):
        raise doc.error("sweep", "expected a mapping with 'kind' and 'values'")
    kind = sweep.get("kind", "none")
    values = sweep.get("values", [])
    if kind != "none":
        values = _float_list(doc, "sweep", values)
    grid = doc.data.get("oracle_grid") or {}
    output = doc.data.get("output")
    try:
        return ExperimentSpec(
            scenario=scenario,
            schemes=tuple(schemes),
            sweep=kind,
            sweep_values=tuple(values),
            output=Path(output) if output else None,
            solver=solver,
            oracle_check=bool(doc.data.get("oracle_check", False)),
            oracle_grid=GridSpec(**grid),
            los_index=int(doc.data.get("los_index", 0)),
        )
    except (InvalidInputError, TypeError) as exc:
        raise FormatError(str(exc), doc.path) from None


@dataclass
class ExperimentResult:
    n_beams: int
    oracle_checked: bool
    rows: list  # dicts, see ``columns``
    warnings: list = field(default_factory=list)

    @property
    def columns(self) -> list:
        L = self.n_beams
        cols = ["sweep_value", "scheme", "c_bits"]
        cols += [f"t_{l + 1}" for l in range(L)] + [f"p_{l + 1}" for l in range(L)]
        cols += ["iterations", "converged", "status"]
        if self.oracle_checked:
            cols.append("oracle_gap")
        return cols

    @property
    def all_converged(self) -> bool:
        return all(r["converged"] for r in self.rows if r["status"] != "infeasible")

    def rows_for(self, scheme):
        return [r for r in self.rows if r["scheme"] == scheme]


def _row(sweep_value, report: SolveReport | None, scheme, L, status=None, gap=None):
    if report is None:
        return {"sweep_value": sweep_value, "scheme": scheme, "c_bits": None,
                "t": [None] * L, "p": [None] * L, "iterations": 0, "converged": False,
                "status": status or "infeasible", "oracle_gap": gap}
    return {
        "sweep_value": sweep_value,
        "scheme": scheme,
        "c_bits": report.secrecy_bits,
        "t": report.allocation.t.tolist(),
        "p": report.allocation.p.tolist(),
        "iterations": report.iterations,
        "converged": report.converged,
        "status": status or ("ok" if report.converged else "not_converged"),
        "oracle_gap": gap,
    }


def _pinned_powers(scenario: Scenario, los_index, p_los):
    """Uniform time shares, ``p_los`` on the LoS beam, rest of the budget split evenly.

    Returns ``None`` when the pinned LoS power alone exceeds the budget.
    """
    L = scenario.n_beams
    t = np.full(L, 1.0 / L)
    p = np.empty(L)
    p[los_index] = p_los
    if L == 1:
        return (t, p) if p_los * t[0] <= scenario.p_tx else None
    rest = scenario.p_tx - p_los * t[los_index]
    if rest < 0:
        return None
    others = np.arange(L) != los_index
    p[others] = rest / t[others].sum()
    return t, p


def _sweep_point(spec: ExperimentSpec, value, references):
    """All scheme rows for one sweep value (``references`` holds precomputed rows)."""
    base = spec.scenario
    L = base.n_beams
    if spec.sweep == "total_power":
        scenario = base.with_p_tx(value)
    else:
        scenario = base
    oracle = None
    if spec.oracle_check:
        oracle = references.get("oracle") or grid_search(scenario, spec.oracle_grid)

    def gap_of(report):
        if oracle is None or report is None:
            return None
        return verify_report(scenario, report, oracle=oracle).gap

    rows = []
    for scheme in spec.schemes:
        if spec.sweep == "los_power" and scheme in ("uniform", "time_only"):
            pinned = _pinned_powers(scenario, spec.los_index, value)
            if pinned is None:
                rows.append(_row(value, None, scheme, L))
                continue
            t, p = pinned
            if scheme == "uniform":
                report = fixed_report("uniform", scenario, Allocation(t, p))
            else:
                report = solve_time_only(scenario, spec.solver, fixed_p=p)
        elif scheme in references:
            report = references[scheme]
        elif scheme == "los_only":
            report = baseline_los_only(scenario, spec.los_index)
        else:
            report = solve_scheme(scheme, scenario, spec.solver, spec.los_index)
        rows.append(_row(value, report, scheme, L, gap=gap_of(report)))
    return rows


def _threads():
    raw = os.environ.get("SECBEAM_THREADS")
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise InvalidInputError(f"SECBEAM_THREADS must be an integer, got {raw!r}") from None
    return max(1, n)


def run_experiment(spec: ExperimentSpec, threads: int | None = None) -> ExperimentResult:
    """Run every scheme at every sweep point and collect one row per pair.

    ``los_power`` sweeps pin the LoS beam's power: ``uniform`` and
    ``time_only`` use the pinned power vector (see :func:`_pinned_powers`),
    while ``los_only``, ``power_only`` and ``joint`` do not depend on the
    pinned value and are repeated as reference rows.  ``total_power`` sweeps
    re-solve every scheme at each budget.  Rows come out sweep-value major,
    scheme minor, regardless of thread count.
    """
    threads = threads or _threads()
    references = {}
    if spec.sweep == "los_power":
        for scheme in spec.schemes:
            if scheme == "los_only":
                references[scheme] = baseline_los_only(spec.scenario, spec.los_index)
            elif scheme == "power_only":
                references[scheme] = solve_power_only(spec.scenario, spec.solver)
            elif scheme == "joint":
                references[scheme] = solve_scheme("joint", spec.scenario, spec.solver)
        if spec.oracle_check:
            references["oracle"] = grid_search(spec.scenario, spec.oracle_grid)

    values = spec.sweep_values if spec.sweep != "none" else (spec.scenario.p_tx,)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        chunks = list(pool.map(lambda v: _sweep_point(spec, v, references), values))
    rows = [r for chunk in chunks for r in chunk]

    result = ExperimentResult(spec.scenario.n_beams, spec.oracle_check, rows)
    for r in rows:
        if r["c_bits"] is None:
            continue
        sc = spec.scenario.with_p_tx(r["sweep_value"]) if spec.sweep == "total_power" \
            else spec.scenario
        rep = is_feasible(sc, Allocation(r["t"], r["p"]), tol=spec.solver.feasibility_tol)
        if not rep:
            msg = f"row ({r['sweep_value']}, {r['scheme']}) infeasible: {rep.violations}"
            log.warning(msg)
            result.warnings.append(msg)
    if spec.sweep == "total_power" and "joint" in spec.schemes:
        cs = [r["c_bits"] for r in result.rows_for("joint")]
        for v, (a, b) in zip(spec.sweep_values[1:], zip(cs, cs[1:])):
            if b < a - MONOTONE_TOL:
                msg = f"joint secrecy rate decreased at p_tx={v:g}: {a:.6g} -> {b:.6g}"
                log.warning(msg)
                result.warnings.append(msg)
    return result


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x) + 0.0  # folds -0.0
    if math.isnan(x):
        return "nan"
    return format(x, ".12g")


def format_csv(result: ExperimentResult) -> str:
    """Deterministic CSV text (12 significant digits, header row first)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(result.columns)
    for r in result.rows:
        line = [_fmt(r["sweep_value"]), r["scheme"], _fmt(r["c_bits"])]
        line += [_fmt(v) for v in r["t"]] + [_fmt(v) for v in r["p"]]
        line += [_fmt(r["iterations"]), _fmt(r["converged"]), r["status"]]
        if result.oracle_checked:
            line.append(_fmt(r["oracle_gap"]))
        w.writerow(line)
    return buf.getvalue()


def write_csv(result: ExperimentResult, path) -> None:
    Path(path).write_text(format_csv(result))

