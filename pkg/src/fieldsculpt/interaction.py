"""Resonant atom-field steps, conditional detection and the sculpting loop.

Two independent routes compute the same conditional field update:

* ``jc_entangle`` followed by ``project_detect`` builds the joint atom-field
  state explicitly and then projects it;
* ``gamma_recurrence`` applies the closed three-term recurrence directly.

``jc_exact_unitary`` gives a third, matrix-based check of the first route.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidStateError, TruncationError, ZeroProbabilityError
from .fock import DesiredState, FieldState, coherent_state, default_n_max, fidelity

PAD_TOL = 1e-10
ZERO_PROB = 1e-14


def _complex_from_json(value) -> complex:
    if isinstance(value, dict):
        return cmath.rect(float(value["abs"]), float(value["phase"]))
    if isinstance(value, (list, tuple)):
        re, im = value
        return complex(float(re), float(im))
    return complex(value)


@dataclass(frozen=True)
class AtomStep:
    """Control knobs for one atom: interaction angle and the two Ramsey settings."""

    omega_tau: float
    beta: complex = 0j
    epsilon: complex = 0j

    def __post_init__(self):
        object.__setattr__(self, "omega_tau", float(self.omega_tau))
        object.__setattr__(self, "beta", complex(self.beta))
        object.__setattr__(self, "epsilon", complex(self.epsilon))
        if not math.isfinite(self.omega_tau) or self.omega_tau < 0:
            raise ValueError(f"omega_tau must be finite and >= 0, got {self.omega_tau}")
        if not (cmath.isfinite(self.beta) and cmath.isfinite(self.epsilon)):
            raise ValueError("Ramsey parameters must be finite")

    @property
    def norm_beta(self) -> float:
        return 1.0 / math.sqrt(1.0 + abs(self.beta) ** 2)

    @property
    def norm_epsilon(self) -> float:
        return 1.0 / math.sqrt(1.0 + abs(self.epsilon) ** 2)

    @classmethod
    def from_polar(cls, omega_tau, eps_abs, eps_phase, beta_abs, beta_phase) -> "AtomStep":
        return cls(omega_tau, cmath.rect(beta_abs, beta_phase), cmath.rect(eps_abs, eps_phase))

    def to_json(self) -> dict:
        return {
            "omega_tau": self.omega_tau,
            "beta": [self.beta.real, self.beta.imag],
            "epsilon": [self.epsilon.real, self.epsilon.imag],
        }

    @classmethod
    def from_json(cls, data: dict) -> "AtomStep":
        return cls(
            float(data["omega_tau"]),
            _complex_from_json(data.get("beta", 0)),
            _complex_from_json(data.get("epsilon", 0)),
        )


@dataclass(frozen=True, eq=False)
class EntangledState:
    """Joint state sum_n e_n |e,n> + g_n |g,n>."""

    e_amps: np.ndarray
    g_amps: np.ndarray

    @property
    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.e_amps) ** 2) + np.sum(np.abs(self.g_amps) ** 2)))

    def as_vector(self) -> np.ndarray:
        """Stacked (e block, g block), the basis order used by jc_exact_unitary."""
        return np.concatenate([self.e_amps, self.g_amps])


@dataclass(frozen=True, eq=False)
class SculptOutcome:
    final: FieldState
    fidelity: float
    step_probs: tuple
    total_prob: float
    rate: float
    # field state after each detection, starting with the initial coherent state
    history: tuple = field(default=(), repr=False)

    def to_json(self) -> dict:
        return {
            "fidelity": self.fidelity,
            "step_probs": list(self.step_probs),
            "total_prob": self.total_prob,
            "rate": self.rate,
            "final": self.final.to_json(),
        }


def rabi_factors(n_max: int, omega_tau: float):
    """C_n, S_n for n = 0..n_max plus the shifted C_{n-1}, S_{n-1}.

    C_{-1} = 1 and S_{-1} = 0: the |g,0> level does not couple.
    """
    angles = np.sqrt(np.arange(1, n_max + 2)) * omega_tau
    c, s = np.cos(angles), np.sin(angles)
    c_prev = np.concatenate([[1.0], c[:-1]])
    s_prev = np.concatenate([[0.0], s[:-1]])
    return c, s, c_prev, s_prev


def _check_headroom(amps: np.ndarray, tol: float = PAD_TOL):
    top = abs(amps[-1]) ** 2
    if top > tol:
        raise TruncationError(
            f"top Fock amplitude carries weight {top:.3e} > {tol:g}; the n -> n+1 shift would "
            f"lose it, increase n_max beyond {amps.size - 1}",
            required_n_max=amps.size,
        )


def jc_entangle(state: FieldState, omega_tau: float, beta: complex) -> EntangledState:
    """Atom prepared in N_b(|e> + b|g>) interacts resonantly with the field."""
    lam = state.amps
    _check_headroom(lam)
    c, s, c_prev, s_prev = rabi_factors(state.n_max, omega_tau)
    nb = 1.0 / math.sqrt(1.0 + abs(beta) ** 2)
    lam_up = np.concatenate([lam[1:], [0.0]])  # Lambda_{n+1}
    lam_down = np.concatenate([[0.0], lam[:-1]])  # Lambda_{n-1}
    e = nb * (c * lam - 1j * beta * s * lam_up)
    g = nb * (beta * c_prev * lam - 1j * s_prev * lam_down)
    return EntangledState(e, g)


def project_detect(ent: EntangledState, epsilon: complex):
    """Condition on detecting the atom in N_e(|e> + conj(eps)|g>).

    Returns the normalized field state and the branch probability.
    """
    if abs(ent.norm - 1.0) > 1e-9:
        raise InvalidStateError(f"entangled state has norm {ent.norm}, expected 1")
    ne = 1.0 / math.sqrt(1.0 + abs(epsilon) ** 2)
    u = ne * (ent.e_amps + epsilon * ent.g_amps)
    prob = float(np.sum(np.abs(u) ** 2))
    if not prob >= ZERO_PROB:
        raise ZeroProbabilityError(f"detection branch probability {prob:.3e} below {ZERO_PROB:g}")
    return FieldState(u / math.sqrt(prob)), prob


def gamma_recurrence(prev, step: AtomStep) -> np.ndarray:
    """Unnormalized Gamma_n^{(k)} from Lambda^{(k-1)} (three-term recurrence)."""
    lam = np.asarray(prev.amps if isinstance(prev, FieldState) else prev, dtype=complex)
    _check_headroom(lam)
    c, s, c_prev, s_prev = rabi_factors(lam.size - 1, step.omega_tau)
    eps, beta = step.epsilon, step.beta
    lam_up = np.concatenate([lam[1:], [0.0]])
    lam_down = np.concatenate([[0.0], lam[:-1]])
    return (c + eps * beta * c_prev) * lam - 1j * beta * s * lam_up - 1j * eps * s_prev * lam_down


def jc_generator(n_max: int) -> np.ndarray:
    """Resonant coupling sum_n sqrt(n+1)(|e,n><g,n+1| + h.c.), (e block, g block) order."""
    dim = n_max + 1
    h = np.zeros((2 * dim, 2 * dim))
    for n in range(n_max):
        h[n, dim + n + 1] = h[dim + n + 1, n] = math.sqrt(n + 1)
    return h


def jc_exact_unitary(n_max: int, omega_tau: float) -> np.ndarray:
    """exp(-i omega_tau H) assembled from its 2x2 rotation blocks.

    |e,n_max> has no partner inside the truncation and is left unchanged,
    as is |g,0>.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    dim = n_max + 1
    u = np.eye(2 * dim, dtype=complex)
    for n in range(n_max):
        theta = math.sqrt(n + 1) * omega_tau
        i, j = n, dim + n + 1
        u[i, i] = u[j, j] = math.cos(theta)
        u[i, j] = u[j, i] = -1j * math.sin(theta)
    return u


def atom_field_product(state: FieldState, beta: complex) -> np.ndarray:
    """N_b(|e> + b|g>) (x) state in (e block, g block) order."""
    nb = 1.0 / math.sqrt(1.0 + abs(beta) ** 2)
    return nb * np.concatenate([state.amps, beta * state.amps])


def sculpt_forward(
    alpha: complex,
    steps,
    desired: DesiredState,
    n_max: int | None = None,
) -> SculptOutcome:
    """Run the atoms through the cavity starting from |alpha> and score the result."""
    steps = list(steps)
    if n_max is None:
        n_max = default_n_max(desired.N_d, len(steps), abs(alpha) ** 2)
    state = coherent_state(alpha, n_max)
    history = [state]
    probs = []
    for step in steps:
        state, p = project_detect(jc_entangle(state, step.omega_tau, step.beta), step.epsilon)
        probs.append(p)
        history.append(state)
    total = float(np.prod(probs)) if probs else 1.0
    f = fidelity(desired, state)
    return SculptOutcome(
        final=state,
        fidelity=f,
        step_probs=tuple(probs),
        total_prob=total,
        rate=f * total,
        history=tuple(history),
    )

