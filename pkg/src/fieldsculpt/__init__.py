"""Sculpting cavity-field states from a coherent state by conditional atom detection."""

from .errors import InvalidStateError, SculptError, TruncationError, ZeroProbabilityError
from .fock import DesiredState, FieldState, coherent_state, fidelity, fock_state, mean_photon, phase_state
from .interaction import (
    AtomStep,
    EntangledState,
    SculptOutcome,
    gamma_recurrence,
    jc_entangle,
    jc_exact_unitary,
    project_detect,
    sculpt_forward,
)
from .optimizer import ScanResult, ScanSpec, scan_tau, suggest_nbar, sweep_nbar
from .solver import RootCandidate, SolveProblem, SolverOptions, min_atoms, residual, solve_roots
from .wigner import PhaseGrid, displacement_matrix, wigner_at, wigner_grid

__version__ = "0.1.0"
