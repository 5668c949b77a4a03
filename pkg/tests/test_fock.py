import math

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from scipy.stats import poisson

from fieldsculpt.errors import InvalidStateError, TruncationError
from fieldsculpt.fock import (
    DesiredState,
    FieldState,
    coherent_state,
    default_n_max,
    fidelity,
    fock_state,
    mean_amplitude,
    mean_photon,
    phase_state,
    required_coherent_n_max,
)



def test_vacuum_coherent():
    s = coherent_state(0, 10)
    assert s.n_max == 10
    np.testing.assert_allclose(s.amps, np.eye(11)[0], atol=0)


def test_coherent_vacuum_weight_matches_poisson():
    s = coherent_state(1.6, 30)
    assert abs(s.amps[0]) ** 2 == pytest.approx(math.exp(-2.56), rel=1e-12)
    assert abs(s.amps[0]) ** 2 == pytest.approx(0.07730, abs=5e-6)
    assert abs(s.amps[0]) ** 2 == pytest.approx(poisson.pmf(0, 2.56), rel=1e-12)


@pytest.mark.parametrize("alpha", [0.3, 1.0, 1.6, 2.0])
def test_coherent_distribution_is_poisson(alpha):
    nbar = alpha**2
    s = coherent_state(alpha, 60)
    n = np.arange(61)
    np.testing.assert_allclose(s.probabilities, poisson.pmf(n, nbar), rtol=1e-12, atol=1e-300)


def test_coherent_mean_photon():
    assert mean_photon(coherent_state(1.6, 30)) == pytest.approx(2.56, abs=1e-8)


def test_complex_alpha_phase():
    a = 1.2 * np.exp(0.7j)
    s = coherent_state(a, 40)
    assert mean_amplitude(s) == pytest.approx(a, abs=1e-9)
    assert mean_photon(s) == pytest.approx(1.44, abs=1e-9)


def test_coherent_truncation_error_reports_requirement():
    with pytest.raises(TruncationError) as err:
        coherent_state(1.6, 8)
    need = err.value.required_n_max
    assert need == required_coherent_n_max(1.6)
    coherent_state(1.6, need)
    with pytest.raises(TruncationError):
        coherent_state(1.6, need - 1)


def test_default_n_max_covers_coherent_tail():
    for nbar in [0.0, 0.36, 1.0, 2.56, 4.0, 25.0]:
        assert default_n_max(4, 2, nbar) >= required_coherent_n_max(math.sqrt(nbar)) + 6
        # no atoms and a vacuum target still need the coherent tail
        coherent_state(math.sqrt(nbar), default_n_max(0, 0, nbar))
    assert default_n_max(4, 2, 2.56) == 4 + 2 + 18


def test_mean_photon_trivial():
    assert mean_photon(fock_state(0, 5)) == 0
    assert mean_photon(fock_state(3, 5)) == pytest.approx(3)


def test_fidelity_trivial():
    psi = phase_state(4)
    assert fidelity(psi, psi.as_field(10)) == pytest.approx(1.0)
    assert fidelity(fock_state(0, 3), fock_state(1, 3)) == 0.0


def test_fidelity_zero_pads_shorter_vector():
    a = FieldState([1, 1])
    b = FieldState([1, 1, 0, 0, 0])
    assert fidelity(a, b) == pytest.approx(1.0)
    assert fidelity(b, a) == pytest.approx(1.0)


def test_zero_norm_rejected():
    with pytest.raises(InvalidStateError):
        FieldState([0, 0])
    with pytest.raises(InvalidStateError):
        fidelity([0, 0], [1, 0])
    with pytest.raises(InvalidStateError):
        DesiredState([0.0])


def test_desired_state_is_tight():
    d = DesiredState([1, 1j, 0, 0])
    assert d.N_d == 1
    assert np.sum(np.abs(d.d) ** 2) == pytest.approx(1.0, abs=1e-12)
    assert phase_state(4).N_d == 4
    np.testing.assert_allclose(phase_state(4).d, np.full(5, 1 / math.sqrt(5)))


def test_json_round_trip():
    s = coherent_state(0.5 + 0.2j, 20)
    back = FieldState.from_json(s.to_json())
    np.testing.assert_array_equal(back.amps, s.amps)
    d = phase_state(3)
    assert DesiredState.from_json(d.to_json()).N_d == 3
    assert d.to_json()["N_d"] == 3
    with pytest.raises(InvalidStateError):
        FieldState.from_json({"n_max": 3, "amps": [[1, 0]]})


def test_states_are_immutable():
    s = coherent_state(1.0, 20)
    with pytest.raises(ValueError):
        s.amps[0] = 0


amp = st.floats(-3, 3, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(amp, amp), min_size=1, max_size=12).filter(lambda v: sum(a * a + b * b for a, b in v) > 1e-6))
def test_constructor_normalizes(pairs):
    s = FieldState([complex(a, b) for a, b in pairs])
    assert np.sum(s.probabilities) == pytest.approx(1.0, abs=1e-9)


@settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(st.integers(0, 2**32 - 1))
def test_fidelity_properties(make_state, seed):
    rng = np.random.default_rng(seed)
    a = make_state(rng, 8, headroom=0)
    b = make_state(rng, 8, headroom=0)
    f = fidelity(a, b)
    assert 0.0 <= f <= 1.0
    assert f == pytest.approx(fidelity(b, a), abs=1e-14)
    phase = np.exp(1j * rng.uniform(0, 2 * np.pi))
    assert fidelity(a, FieldState(3.0 * phase * a.amps)) == pytest.approx(1.0, abs=1e-12)
