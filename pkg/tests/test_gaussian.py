import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spdcsim.closed_forms import sagnac_explicit
from spdcsim.errors import InvalidArgument
from spdcsim.experiments import sagnac_source
from spdcsim.gaussian import (
    GaussianState,
    MismatchSpec,
    apply_loss,
    apply_symplectic,
    beam_splitter,
    evaluate_characteristic_function,
    expand_mode_mismatch,
    make_coherent,
    make_thermal,
    make_tmsv,
    make_vacuum,
    mode_swap,
    partial_trace,
    phase_shift,
    polarizer,
    symplectic_form,
    tensor,
)

unit = st.floats(0.0, 1.0)
mus = st.floats(0.0, 5.0)


def test_vacuum_is_identity():
    s = make_vacuum(3)
    assert np.array_equal(s.cov, np.eye(6))
    assert not np.any(s.disp)
    assert s.mean_photon_number() == 0.0


def test_coherent_displacement_and_photons():
    s = make_coherent(0.3, -0.4, "c")
    np.testing.assert_allclose(s.disp, math.sqrt(2) * np.array([0.3, -0.4]))
    assert s.mean_photon_number() == pytest.approx(0.25)


def test_tmsv_blocks():
    mu = 0.2
    s = make_tmsv(mu, "+")
    a, c = 2 * mu + 1, 2 * math.sqrt(mu * (mu + 1))
    expected = np.array([[a, c, 0, 0], [c, a, 0, 0], [0, 0, a, -c], [0, 0, -c, a]])
    np.testing.assert_allclose(s.cov, expected)
    minus = make_tmsv(mu, "-")
    np.testing.assert_allclose(minus.cov[0, 1], -c)
    assert s.mean_photon_number() == pytest.approx(2 * mu)


def test_tmsv_marginal_is_thermal():
    s = make_tmsv(0.7)
    np.testing.assert_allclose(partial_trace(s, [0]).cov, make_thermal(0.7).cov)


def test_sagnac_source_matches_written_matrix():
    for sign in "+-":
        np.testing.assert_allclose(sagnac_source(0.13, sign).cov, sagnac_explicit(0.13, sign), atol=1e-15)


def test_state_validation():
    with pytest.raises(InvalidArgument):
        GaussianState(np.eye(3), np.zeros(3), ("a", "b", "c"))
    with pytest.raises(InvalidArgument):
        GaussianState(np.eye(4), np.zeros(4), ("a", "a"))
    with pytest.raises(InvalidArgument):
        make_tmsv(-0.1)
    with pytest.raises(InvalidArgument):
        beam_splitter(1.5, 0, 1)
    with pytest.raises(InvalidArgument):
        apply_loss(make_vacuum(1), -0.1)
    with pytest.raises(InvalidArgument):
        MismatchSpec(1.2, ("a", "b"))


def test_unphysical_matrix_is_flagged():
    s = GaussianState(0.5 * np.eye(2), np.zeros(2), ("a",))
    assert not s.is_physical()
    assert make_thermal(0.3).is_physical()


@given(t=unit, theta=st.floats(-7, 7), phi=st.floats(-7, 7))
def test_passive_ops_are_symplectic_and_orthogonal(t, theta, phi):
    for op in (beam_splitter(t, 0, 1), polarizer(theta, 0, 1), phase_shift(phi, 0), mode_swap(0, 1)):
        assert op.is_symplectic()
        assert op.is_orthogonal()


@given(theta=st.floats(0.0, math.pi / 2))
def test_polarizer_is_beam_splitter_cos2(theta):
    # sqrt(1 - cos^2) loses about half the digits near theta = 0
    np.testing.assert_allclose(
        polarizer(theta, 0, 1).matrix, beam_splitter(math.cos(theta) ** 2, 0, 1).matrix, atol=3e-8
    )


@given(mu1=mus, mu2=mus, t=unit, phi=st.floats(0, 2 * math.pi))
def test_passive_network_keeps_photon_number_and_physicality(mu1, mu2, t, phi):
    s = tensor(make_tmsv(mu1, labels=("a", "b")), make_thermal(mu2, "c"))
    n0 = s.mean_photon_number()
    s = apply_symplectic(s, beam_splitter(t, "a", "c"))
    s = apply_symplectic(s, phase_shift(phi, "b"))
    s = apply_symplectic(s, beam_splitter(1 - t, "b", "c"))
    assert s.mean_photon_number() == pytest.approx(n0, rel=1e-12, abs=1e-12)
    assert s.is_physical()
    np.testing.assert_allclose(s.cov, s.cov.T, atol=0)


@given(mu=mus, t=unit, re=st.floats(-2, 2), im=st.floats(-2, 2))
def test_loss_scales_photon_number(mu, t, re, im):
    s = tensor(make_thermal(mu, "a"), make_coherent(re, im, "b"))
    out = apply_loss(s, t)
    assert out.mean_photon_number() == pytest.approx(t * s.mean_photon_number(), rel=1e-12, abs=1e-14)
    assert out.is_physical()


def test_loss_limits():
    s = make_tmsv(0.4)
    np.testing.assert_allclose(apply_loss(s, 1.0).cov, s.cov)
    np.testing.assert_allclose(apply_loss(s, 0.0).cov, np.eye(4))


def test_loss_of_thermal_is_thermal():
    np.testing.assert_allclose(apply_loss(make_thermal(2.0), 0.3).cov, make_thermal(0.6).cov)


def test_beam_splitter_moves_coherent_amplitude_along_rows():
    # d -> S^T d: the amplitude entering a follows the first row, (sqrt t, sqrt(1-t))
    s = tensor(make_coherent(1.0, 0.0, "a"), make_vacuum(1, ("b",)))
    out = apply_symplectic(s, beam_splitter(0.36, "a", "b"))
    np.testing.assert_allclose(out.disp[:2] / math.sqrt(2), [0.6, 0.8])


def test_phase_shift_rotates_coherent_amplitude():
    out = apply_symplectic(make_coherent(1.0, 0.0), phase_shift(math.pi / 2, 0))
    np.testing.assert_allclose(out.disp / math.sqrt(2), [0.0, 1.0], atol=1e-15)


def test_mode_match_one_leaves_aux_in_vacuum():
    s = expand_mode_mismatch(make_tmsv(0.3, labels=("A", "B")), MismatchSpec(1.0, ("A", "B")))
    np.testing.assert_allclose(partial_trace(s, ["A.2", "B.2", "A.3", "B.3"]).cov, np.eye(8), atol=1e-15)
    np.testing.assert_allclose(partial_trace(s, ["A", "B"]).cov, make_tmsv(0.3).cov, atol=1e-15)


def test_mode_match_zero_moves_pulses_out():
    s = expand_mode_mismatch(make_tmsv(0.3, labels=("A", "B")), MismatchSpec(0.0, ("A", "B")))
    np.testing.assert_allclose(partial_trace(s, ["A", "B"]).cov, np.eye(4), atol=1e-15)
    np.testing.assert_allclose(partial_trace(s, ["A.2", "B.3"]).cov, make_tmsv(0.3).cov, atol=1e-15)


def test_symplectic_form():
    om = symplectic_form(2)
    np.testing.assert_array_equal(om @ om, -np.eye(4))


@given(mu=mus, x=st.lists(st.floats(-2, 2), min_size=2, max_size=2))
def test_characteristic_function_of_thermal(mu, x):
    # chi(x) = exp(-(2 mu + 1) |x|^2 / 4)
    chi = evaluate_characteristic_function(make_thermal(mu), x)
    assert chi == pytest.approx(math.exp(-(2 * mu + 1) * (x[0] ** 2 + x[1] ** 2) / 4))
    assert evaluate_characteristic_function(make_thermal(mu), [0, 0]) == 1


def test_tensor_and_partial_trace_roundtrip():
    a, b = make_thermal(0.2, "a"), make_coherent(0.5, 0.1, "b")
    s = tensor(a, b)
    assert s.mode_labels == ("a", "b")
    np.testing.assert_allclose(partial_trace(s, ["b"]).disp, b.disp)
    with pytest.raises(InvalidArgument):
        tensor(a, a)
