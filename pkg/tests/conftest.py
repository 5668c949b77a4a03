import numpy as np
import pytest

from fieldsculpt.fock import FieldState, phase_state
from fieldsculpt.interaction import AtomStep

# Ramsey settings and interaction angles published for nbar = 2.56 (alpha = 1.6)
REF_ALPHA = 1.6
REF_ROOT_POLAR = [
    # omega_tau, |eps|, theta, |beta|, phi, P_k
    (5.8, 0.4247, 4.7124, 0.7684, 4.7124, 0.7576),
    (4.2, 0.4616, 4.7124, 0.6583, -1.5708, 0.7379),
]


@pytest.fixture
def ref_steps():
    return [AtomStep.from_polar(t, ea, ep, ba, bp) for t, ea, ep, ba, bp, _ in REF_ROOT_POLAR]


@pytest.fixture
def phase4():
    return phase_state(4)


@pytest.fixture
def make_state():
    """Random normalized state on 0..n_max with the top `headroom` levels empty."""

    def make(rng, n_max, headroom=1):
        amps = np.zeros(n_max + 1, dtype=complex)
        k = n_max + 1 - headroom
        amps[:k] = rng.normal(size=k) + 1j * rng.normal(size=k)
        return FieldState(amps)

    return make


# acceptance lines collected by test_acceptance.report, echoed after the run
GATE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if GATE_LINES:
        terminalreporter.section("acceptance gate")
        for line in sorted(GATE_LINES, key=lambda s: s.split(":")[0]):
            terminalreporter.write_line(line)
