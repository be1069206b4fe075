import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import invariants
from secbeam import (
    Ckm,
    CkmDataError,
    FormatError,
    InvalidInputError,
    beam_snr,
    build_scenario,
    read_ckm,
    steering_vector,
    worst_case_beta,
)
from secbeam.ckm import format_ckm, parse_ckm


def test_steering_broadside_is_flat():
    w = steering_vector(0.0, 4, 0.5)
    np.testing.assert_allclose(w.entries, np.full(4, 0.5), atol=1e-15)


def test_steering_endfire_alternates():
    w = steering_vector(math.pi / 2, 2, 0.5)
    np.testing.assert_allclose(w.entries, [1 / math.sqrt(2), -1 / math.sqrt(2)], atol=1e-15)


def test_steering_phases_match_scalar_formula():
    w = steering_vector(0.3, 8, 0.5)
    for k, e in enumerate(w.entries):
        assert abs(e) == pytest.approx(1 / math.sqrt(8), abs=1e-15)
        expected = cmath.exp(-1j * math.pi * k * math.sin(0.3)) / math.sqrt(8)
        assert e == pytest.approx(expected, abs=1e-15)
    assert w.n_t == 8 and w.theta == 0.3


@pytest.mark.parametrize("theta,n_t,d", [(math.nan, 4, 0.5), (math.inf, 4, 0.5),
                                         (0.1, 0, 0.5), (0.1, 2.5, 0.5), (0.1, 4, 0.0)])
def test_steering_rejects_bad_input(theta, n_t, d):
    with pytest.raises(InvalidInputError):
        steering_vector(theta, n_t, d)


@settings(max_examples=300, deadline=None)
@given(st.floats(-10, 10), st.integers(1, 512), st.floats(0.01, 8.0))
def test_steering_norm_property(theta, n_t, d):
    w = steering_vector(theta, n_t, d)
    assert abs(np.linalg.norm(w.entries) - 1.0) <= 1e-12


def test_steering_norm_randomised():
    assert invariants.steering_norms(np.random.default_rng(1)) == 1000


def test_beam_snr_aligned_and_orthogonal():
    w = steering_vector(0.4, 4)
    assert beam_snr(w.entries, w, 1.0, 1.0) == pytest.approx(1.0, abs=1e-14)
    other = steering_vector(-0.9, 4).entries
    h = other - np.vdot(w.entries, other) * w.entries  # project out w
    assert beam_snr(h, w, 5.0, 0.5) == pytest.approx(0.0, abs=1e-24)


def test_beam_snr_matches_elementwise_sum(rng):
    w = steering_vector(0.7, 4)
    h = rng.normal(size=4) + 1j * rng.normal(size=4)
    acc = 0j
    for k in range(4):
        acc += h[k].conjugate() * w.entries[k]
    expected = 3.0 / 0.2 * (acc.real ** 2 + acc.imag ** 2)
    assert beam_snr(h, w, 3.0, 0.2) == pytest.approx(expected, rel=1e-13)


@settings(max_examples=200, deadline=None)
@given(st.floats(-math.pi, math.pi), st.integers(0, 2 ** 32 - 1))
def test_beam_snr_phase_invariant(phi, seed):
    r = np.random.default_rng(seed)
    w = steering_vector(float(r.uniform(-1, 1)), 6)
    h = r.normal(size=6) + 1j * r.normal(size=6)
    a = beam_snr(h, w, 2.0, 1.0)
    b = beam_snr(np.exp(1j * phi) * h, w, 2.0, 1.0)
    assert b == pytest.approx(a, rel=1e-12, abs=1e-300)


def test_beam_snr_errors():
    w = steering_vector(0.0, 4)
    with pytest.raises(InvalidInputError, match="3 entries"):
        beam_snr(np.ones(3), w, 1.0, 1.0)
    with pytest.raises(InvalidInputError):
        beam_snr(np.ones(4), w, 1.0, 0.0)


def _ckm(samples, p_ref=10.0):
    L, J = len(samples), len(samples[0])
    return Ckm(np.arange(L) * 0.2, np.arange(J, dtype=float), samples, p_ref)


def test_worst_case_beta_max_then_normalise():
    assert worst_case_beta(_ckm([[[0.5, 2.0, 1.0]]]))[0, 0] == pytest.approx(0.2)


def test_worst_case_beta_all_zero():
    beta = worst_case_beta(_ckm([[[0.0], [0.0]], [[0.0], [0.0]]]))
    assert beta.shape == (2, 2) and not beta.any()


def test_worst_case_beta_matches_scan(rng):
    samples = [[list(rng.exponential(1.0, 5)) for _ in range(2)] for _ in range(3)]
    beta = worst_case_beta(_ckm(samples, 4.0))
    assert beta.shape == (2, 3)
    for l in range(3):
        for j in range(2):
            m = samples[l][j][0]
            for s in samples[l][j][1:]:
                m = s if s > m else m
            assert beta[j, l] == m / 4.0


def test_worst_case_beta_invariants_randomised():
    assert invariants.beta_monotone(np.random.default_rng(2)) == 1000


def test_ckm_validation():
    with pytest.raises(CkmDataError, match=r"l=1, j=0"):
        _ckm([[[1.0], [1.0]], [[], [1.0]]])
    with pytest.raises(InvalidInputError, match="duplicate angle"):
        Ckm([0.1, 0.1], [0.0], [[[1.0]], [[1.0]]], 1.0)
    with pytest.raises(InvalidInputError, match="duplicate location"):
        Ckm([0.1], [[0.0, 1.0], [0.0, 1.0]], [[[1.0], [1.0]]], 1.0)
    with pytest.raises(InvalidInputError, match="negative"):
        _ckm([[[-1.0]]])


def test_build_scenario_normalises_gains():
    ckm = read_ckm(pytest.importorskip("secbeam").data_path("two_beam.ckm"))
    sc = build_scenario(ckm, [20.0, 2.0], 10.0)
    np.testing.assert_allclose(sc.alpha, [2.0, 0.2])
    np.testing.assert_allclose(sc.beta, [[2.0, 0.0], [0.0, 0.2]])
    assert sc.beta[0, 0] == sc.alpha[0]
    assert sc.location_labels == ("on_los_path", "on_nlos_path")


def test_build_scenario_zero_gains():
    sc = build_scenario(_ckm([[[0.0], [1.0]]]), [0.0], 5.0)
    assert not sc.alpha.any()
    # only locations with zero leakage keep the beam (a tie at zero)
    assert sc.secure[:, 0].tolist() == [True, False]


def test_build_scenario_errors():
    with pytest.raises(InvalidInputError, match="2 entries"):
        build_scenario(_ckm([[[1.0]]]), [1.0, 2.0], 1.0)


GOOD = """\
# comment
n_angles 2
n_locations 1
p_tx_ref_watts 2
angles_deg 0 90
location 1 2 label=a
records
0, 0, 1.0
1, 0, 0.5
1, 0, 1.5   # repeated cell accumulates
"""


def test_parse_ckm():
    ckm = parse_ckm(GOOD)
    np.testing.assert_allclose(ckm.angles, [0.0, math.pi / 2])
    assert ckm.samples[1][0].tolist() == [0.5, 1.5]
    assert ckm.location_labels == ("a",)
    np.testing.assert_allclose(worst_case_beta(ckm), [[0.5, 0.75]])


@pytest.mark.parametrize("bad,line,msg", [
    (GOOD.replace("angles_deg 0 90", "angles_deg 0 0"), 5, "duplicate angle"),
    (GOOD.replace("1, 0, 0.5", "1, 3, 0.5"), 9, "out of range"),
    (GOOD.replace("1, 0, 0.5", "1, 0"), 9, "record must be"),
    (GOOD.replace("1, 0, 0.5", "1, 0, -2"), 9, ">= 0"),
    (GOOD.replace("p_tx_ref_watts 2", "p_tx_ref_watts x"), 4, "cannot parse"),
    (GOOD.replace("n_locations 1", "n_locatoins 1"), 3, "unknown header key"),
])
def test_parse_ckm_errors_carry_line(bad, line, msg):
    with pytest.raises(FormatError, match=msg) as ei:
        parse_ckm(bad, path="m.ckm")
    assert ei.value.line == line
    assert str(ei.value).startswith(f"m.ckm:{line}:")


def test_parse_ckm_missing_cell():
    text = GOOD.replace("0, 0, 1.0\n", "")
    with pytest.raises(FormatError, match=r"\(0, 0\)"):
        parse_ckm(text)


def test_parse_ckm_duplicate_location():
    text = GOOD.replace("n_locations 1", "n_locations 2").replace(
        "location 1 2 label=a", "location 1 2\nlocation 1 2")
    with pytest.raises(FormatError, match="duplicate location") as ei:
        parse_ckm(text)
    assert ei.value.line == 7


def test_ckm_round_trip(rng):
    samples = [[list(rng.exponential(1.0, 3)) for _ in range(2)] for _ in range(3)]
    ckm = Ckm([0.1, -0.4, 1.2], [[0.0, 1.0], [3.5, -2.0]], samples, 7.5,
              location_labels=("x", "y"))
    back = parse_ckm(format_ckm(ckm))
    np.testing.assert_array_equal(back.angles, ckm.angles)
    np.testing.assert_array_equal(back.locations, ckm.locations)
    assert back.location_labels == ("x", "y")
    for l in range(3):
        for j in range(2):
            np.testing.assert_array_equal(back.samples[l][j], ckm.samples[l][j])
