"""Channel-knowledge maps, transmit steering vectors and scenario assembly.

A CKM stores raw expected-power samples gamma(theta_l, p_j) recorded at a
reference transmit power.  Normalisation into the per-watt gains used by the
allocator happens once, in :func:`build_scenario`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import CkmDataError, FormatError, InvalidInputError

__all__ = [
    "SteeringVector",
    "Ckm",
    "Scenario",
    "steering_vector",
    "beam_snr",
    "worst_case_beta",
    "build_scenario",
    "parse_ckm",
    "read_ckm",
    "format_ckm",
]


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SteeringVector:
    """Unit-norm ULA weight vector pointing along ``theta`` (radians)."""

    entries: np.ndarray
    theta: float
    d_over_lambda: float

    @property
    def n_t(self) -> int:
        return self.entries.shape[0]


def steering_vector(theta: float, n_t: int, d_over_lambda: float = 0.5) -> SteeringVector:
    """Transmit array response of an ``n_t``-element uniform linear array.

    Entry ``k`` is ``exp(-1j * 2*pi * d_over_lambda * k * sin(theta)) / sqrt(n_t)``.
    """
    if not math.isfinite(theta):
        raise InvalidInputError(f"theta must be finite, got {theta!r}")
    if int(n_t) != n_t or n_t < 1:
        raise InvalidInputError(f"n_t must be a positive integer, got {n_t!r}")
    if not (d_over_lambda > 0 and math.isfinite(d_over_lambda)):
        raise InvalidInputError(f"d_over_lambda must be positive, got {d_over_lambda!r}")
    k = np.arange(int(n_t))
    phase = -2.0 * np.pi * d_over_lambda * k * np.sin(theta)
    entries = np.exp(1j * phase) / np.sqrt(n_t)
    return SteeringVector(_frozen(entries, complex), float(theta), float(d_over_lambda))


def beam_snr(channel, w: SteeringVector, p_tx: float, noise_power: float) -> float:
    """Received SNR ``p_tx / noise_power * |channel^H w|^2``."""
    h = np.asarray(channel, dtype=complex).ravel()
    if h.shape[0] != w.n_t:
        raise InvalidInputError(
            f"channel has {h.shape[0]} entries but the steering vector has {w.n_t}"
        )
    if not noise_power > 0:
        raise InvalidInputError(f"noise_power must be positive, got {noise_power!r}")
    gain = np.vdot(h, w.entries)  # vdot conjugates its first argument
    return float(p_tx / noise_power * abs(gain) ** 2)


@dataclass(frozen=True, eq=False)
class Ckm:
    """Sampled expected received power over an angle grid x location grid.

    Parameters
    ----------
    angles : array_like, shape (L,)
        Angles of departure in radians.
    locations : array_like, shape (J, D)
        Candidate receiver/eavesdropper coordinates in metres (D = 2 or 3).
    samples : sequence of sequences of array_like
        ``samples[l][j]`` holds every observed power value (watts) for beam
        ``l`` at location ``j``.  Each cell needs at least one sample.
    p_tx_ref : float
        Transmit power the samples were recorded at (watts).
    """

    angles: np.ndarray
    locations: np.ndarray
    samples: tuple
    p_tx_ref: float
    location_labels: tuple | None = None

    def __post_init__(self):
        angles = _frozen(self.angles).ravel()
        locations = _frozen(self.locations)
        if locations.ndim == 1:
            locations = _frozen(locations.reshape(-1, 1))
        L, J = angles.shape[0], locations.shape[0]
        if L < 1 or J < 1:
            raise InvalidInputError("a CKM needs at least one angle and one location")
        if not np.all(np.isfinite(angles)):
            raise InvalidInputError("angles must be finite")
        if np.unique(angles).shape[0] != L:
            raise InvalidInputError("duplicate angle in CKM angle list")
        if np.unique(locations, axis=0).shape[0] != J:
            raise InvalidInputError("duplicate location in CKM location list")
        if not (self.p_tx_ref > 0 and math.isfinite(self.p_tx_ref)):
            raise InvalidInputError(f"p_tx_ref must be positive, got {self.p_tx_ref!r}")
        if len(self.samples) != L:
            raise InvalidInputError(f"samples has {len(self.samples)} angle rows, expected {L}")
        cells = []
        for l, row in enumerate(self.samples):
            if len(row) != J:
                raise InvalidInputError(
                    f"samples row {l} has {len(row)} location cells, expected {J}"
                )
            cells_l = []
            for j, cell in enumerate(row):
                arr = _frozen(cell).ravel()
                if arr.size == 0:
                    raise CkmDataError(f"CKM cell (l={l}, j={j}) has no samples")
                if not np.all(np.isfinite(arr)) or np.any(arr < 0):
                    raise InvalidInputError(
                        f"CKM cell (l={l}, j={j}) has a negative or non-finite sample"
                    )
                cells_l.append(arr)
            cells.append(tuple(cells_l))
        if self.location_labels is not None and len(self.location_labels) != J:
            raise InvalidInputError("location_labels length does not match locations")
        object.__setattr__(self, "angles", angles)
        object.__setattr__(self, "locations", locations)
        object.__setattr__(self, "samples", tuple(cells))
        object.__setattr__(self, "p_tx_ref", float(self.p_tx_ref))

    @property
    def n_angles(self) -> int:
        return self.angles.shape[0]

    @property
    def n_locations(self) -> int:
        return self.locations.shape[0]


@dataclass(frozen=True, eq=False)
class Scenario:
    """Everything the allocator needs.

    ``alpha[l]`` is the receiver gain of beam ``l`` and ``beta[j, l]`` the
    worst-case eavesdropper gain at location ``j`` on beam ``l``, both per
    watt of transmit power.
    """

    alpha: np.ndarray
    beta: np.ndarray
    p_tx: float
    beam_labels: tuple | None = None
    location_labels: tuple | None = None
    secure: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        alpha = _frozen(self.alpha).ravel()
        beta = _frozen(self.beta)
        if beta.ndim == 1:
            beta = _frozen(beta.reshape(1, -1))
        if alpha.shape[0] < 1:
            raise InvalidInputError("alpha must have at least one beam")
        if beta.ndim != 2 or beta.shape[1] != alpha.shape[0]:
            raise InvalidInputError(
                f"beta has shape {beta.shape} but alpha has {alpha.shape[0]} beams; "
                "beta must be (n_locations, n_beams)"
            )
        if not (np.all(np.isfinite(alpha)) and np.all(np.isfinite(beta))):
            raise InvalidInputError("gains must be finite")
        if np.any(alpha < 0) or np.any(beta < 0):
            raise InvalidInputError("gains must be nonnegative")
        if not (self.p_tx > 0 and math.isfinite(self.p_tx)):
            raise InvalidInputError(f"p_tx must be positive, got {self.p_tx!r}")
        if self.beam_labels is not None and len(self.beam_labels) != alpha.shape[0]:
            raise InvalidInputError("beam_labels length does not match alpha")
        if self.location_labels is not None and len(self.location_labels) != beta.shape[0]:
            raise InvalidInputError("location_labels length does not match beta rows")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "p_tx", float(self.p_tx))
        object.__setattr__(self, "secure", _frozen(alpha[None, :] >= beta, bool))

    @property
    def n_beams(self) -> int:
        return self.alpha.shape[0]

    @property
    def n_locations(self) -> int:
        return self.beta.shape[0]

    def with_p_tx(self, p_tx: float) -> "Scenario":
        return Scenario(self.alpha, self.beta, p_tx, self.beam_labels, self.location_labels)


def worst_case_beta(ckm: Ckm) -> np.ndarray:
    """Per-watt worst-case eavesdropper gains, shape ``(J, L)``.

    Each cell is the largest recorded sample divided by the reference power.
    """
    L, J = ckm.n_angles, ckm.n_locations
    beta = np.empty((J, L))
    for l in range(L):
        for j in range(J):
            cell = ckm.samples[l][j]
            if cell.size == 0:
                raise CkmDataError(f"CKM cell (l={l}, j={j}) has no samples")
            beta[j, l] = cell.max()
    return beta / ckm.p_tx_ref


def build_scenario(ckm: Ckm, rx_gains: Sequence[float], p_tx: float,
                   beam_labels=None) -> Scenario:
    """Assemble a :class:`Scenario` from a CKM and the receiver's per-beam SNRs.

    ``rx_gains[l]`` is the receiver SNR on beam ``l`` at ``ckm.p_tx_ref``.
    """
    gains = np.asarray(rx_gains, dtype=float).ravel()
    if gains.shape[0] != ckm.n_angles:
        raise InvalidInputError(
            f"rx_gains has {gains.shape[0]} entries but the CKM has {ckm.n_angles} angles"
        )
    if np.any(gains < 0) or not np.all(np.isfinite(gains)):
        raise InvalidInputError("rx_gains must be finite and nonnegative")
    if not p_tx > 0:
        raise InvalidInputError(f"p_tx must be positive, got {p_tx!r}")
    return Scenario(gains / ckm.p_tx_ref, worst_case_beta(ckm), p_tx,
                    beam_labels=beam_labels, location_labels=ckm.location_labels)


# -- CKM text format --------------------------------------------------------
#
# Grammar (see docs/formats.md):
#
#   # comment
#   n_angles <L>
#   n_locations <J>
#   p_tx_ref_watts <float>
#   angles_deg <a_1> ... <a_L>        | angles_rad <a_1> ... <a_L>
#   location <x> <y> [<z>] [label=<name>]     (exactly J lines, in order)
#   records
#   <angle_index>, <location_index>, <sample_watts>    (0-based, repeatable)

_HEADER_KEYS = ("n_angles", "n_locations", "p_tx_ref_watts")


def _num(tok, path, lineno, what, kind=float):
    try:
        return kind(tok)
    except ValueError:
        raise FormatError(f"{what}: cannot parse {tok!r}", path, lineno) from None


def parse_ckm(text: str, path=None) -> Ckm:
    """Parse the CKM text format.  Errors carry the offending line number."""
    header: dict = {}
    angles = None
    locations: list = []
    labels: list = []
    cells: dict = {}
    in_records = False
    header_line: dict = {}

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if in_records:
            parts = [s.strip() for s in line.split(",")]
            if len(parts) != 3:
                raise FormatError(
                    "record must be 'angle_index, location_index, sample_watts'", path, lineno
                )
            l = _num(parts[0], path, lineno, "angle_index", int)
            j = _num(parts[1], path, lineno, "location_index", int)
            s = _num(parts[2], path, lineno, "sample_watts")
            if not 0 <= l < header["n_angles"]:
                raise FormatError(f"angle_index {l} out of range", path, lineno)
            if not 0 <= j < header["n_locations"]:
                raise FormatError(f"location_index {j} out of range", path, lineno)
            if not (math.isfinite(s) and s >= 0):
                raise FormatError(f"sample_watts must be finite and >= 0, got {s}", path, lineno)
            cells.setdefault((l, j), []).append(s)
            continue

        key, *rest = line.split()
        if key == "records":
            missing = [k for k in _HEADER_KEYS if k not in header]
            if missing:
                raise FormatError(f"header is missing {', '.join(missing)}", path, lineno)
            if angles is None:
                raise FormatError("header is missing angles_deg/angles_rad", path, lineno)
            if len(angles) != header["n_angles"]:
                raise FormatError(
                    f"{len(angles)} angles listed but n_angles is {header['n_angles']}",
                    path, header_line["angles"],
                )
            if len(locations) != header["n_locations"]:
                raise FormatError(
                    f"{len(locations)} location lines but n_locations is "
                    f"{header['n_locations']}", path, lineno,
                )
            in_records = True
        elif key in ("n_angles", "n_locations"):
            if len(rest) != 1:
                raise FormatError(f"{key} takes one integer", path, lineno)
            n = _num(rest[0], path, lineno, key, int)
            if n < 1:
                raise FormatError(f"{key} must be >= 1", path, lineno)
            header[key] = n
        elif key == "p_tx_ref_watts":
            if len(rest) != 1:
                raise FormatError(f"{key} takes one number", path, lineno)
            v = _num(rest[0], path, lineno, key)
            if not (v > 0 and math.isfinite(v)):
                raise FormatError("p_tx_ref_watts must be positive", path, lineno)
            header[key] = v
        elif key in ("angles_deg", "angles_rad"):
            if angles is not None:
                raise FormatError("angles given twice", path, lineno)
            vals = [_num(tok, path, lineno, key) for tok in rest]
            if key == "angles_deg":
                vals = [math.radians(v) for v in vals]
            if len(set(vals)) != len(vals):
                raise FormatError("duplicate angle", path, lineno)
            angles = vals
            header_line["angles"] = lineno
        elif key == "location":
            coords = []
            label = None
            for tok in rest:
                if tok.startswith("label="):
                    label = tok[len("label="):]
                else:
                    coords.append(_num(tok, path, lineno, "location coordinate"))
            if len(coords) not in (2, 3):
                raise FormatError("location needs 2 or 3 coordinates", path, lineno)
            if locations and len(coords) != len(locations[0]):
                raise FormatError("all locations must have the same dimension", path, lineno)
            if coords in locations:
                raise FormatError("duplicate location", path, lineno)
            locations.append(coords)
            labels.append(label)
        else:
            raise FormatError(f"unknown header key {key!r}", path, lineno)

    if not in_records:
        raise FormatError("missing 'records' section", path)
    L, J = header["n_angles"], header["n_locations"]
    missing = [(l, j) for l in range(L) for j in range(J) if (l, j) not in cells]
    if missing:
        shown = ", ".join(f"({l}, {j})" for l, j in missing[:5])
        raise FormatError(f"no samples for cell(s) {shown}", path)
    samples = [[cells[(l, j)] for j in range(J)] for l in range(L)]
    loc_labels = None
    if any(lb is not None for lb in labels):
        loc_labels = tuple(lb if lb is not None else f"loc{j}" for j, lb in enumerate(labels))
    return Ckm(np.array(angles), np.array(locations), samples, header["p_tx_ref_watts"],
               location_labels=loc_labels)


def read_ckm(path) -> Ckm:
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise FormatError("file not found", path) from None
    return parse_ckm(text, path=path)


def format_ckm(ckm: Ckm) -> str:
    """Serialise a CKM to the text format read by :func:`parse_ckm` (angles in radians)."""
    out = [
        f"n_angles {ckm.n_angles}",
        f"n_locations {ckm.n_locations}",
        f"p_tx_ref_watts {ckm.p_tx_ref!r}",
        "angles_rad " + " ".join(repr(float(a)) for a in ckm.angles),
    ]
    for j, loc in enumerate(ckm.locations):
        line = "location " + " ".join(repr(float(x)) for x in loc)
        if ckm.location_labels is not None:
            line += f" label={ckm.location_labels[j]}"
        out.append(line)
    out.append("records")
    for l in range(ckm.n_angles):
        for j in range(ckm.n_locations):
            for s in ckm.samples[l][j]:
                out.append(f"{l}, {j}, {float(s)!r}")
    return "\n".join(out) + "\n"
