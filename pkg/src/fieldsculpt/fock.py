"""Truncated Fock-space states of a single cavity mode."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidStateError, TruncationError

NORM_TOL = 1e-9
COHERENT_TAIL_TOL = 1e-10


def _as_amps(values) -> np.ndarray:
    amps = np.array(values, dtype=complex).reshape(-1)
    if amps.size == 0:
        raise InvalidStateError("state needs at least one amplitude")
    if not np.all(np.isfinite(amps)):
        raise InvalidStateError("state amplitudes must be finite")
    return amps


def _normalized(amps: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(amps)
    if norm == 0.0 or not np.isfinite(norm):
        raise InvalidStateError("cannot normalize a zero-norm state")
    out = amps / norm
    out.setflags(write=False)
    return out


def _amps_to_json(amps):
    return [[float(a.real), float(a.imag)] for a in amps]


def _amps_from_json(rows):
    try:
        return np.array([complex(re, im) for re, im in rows], dtype=complex)
    except (TypeError, ValueError) as exc:
        raise InvalidStateError(f"amplitudes must be [re, im] pairs: {exc}") from exc


@dataclass(frozen=True, eq=False)
class FieldState:
    """Normalized pure state of the field, amplitudes for n = 0..n_max."""

    amps: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "amps", _normalized(_as_amps(self.amps)))

    @property
    def n_max(self) -> int:
        return self.amps.size - 1

    @property
    def probabilities(self) -> np.ndarray:
        return np.abs(self.amps) ** 2

    def padded(self, n_max: int) -> np.ndarray:
        """Amplitudes zero-padded (never cut) to length n_max + 1."""
        if n_max < self.n_max:
            raise TruncationError(
                f"cannot shrink state from n_max={self.n_max} to {n_max}",
                required_n_max=self.n_max,
            )
        out = np.zeros(n_max + 1, dtype=complex)
        out[: self.amps.size] = self.amps
        return out

    def to_json(self) -> dict:
        return {"n_max": self.n_max, "amps": _amps_to_json(self.amps)}

    @classmethod
    def from_json(cls, data: dict) -> "FieldState":
        amps = _amps_from_json(data["amps"])
        if "n_max" in data and int(data["n_max"]) != amps.size - 1:
            raise InvalidStateError("n_max does not match the number of amplitudes")
        return cls(amps)


@dataclass(frozen=True, eq=False)
class DesiredState:
    """Target superposition sum_{n<=N_d} d_n |n>, with d_{N_d} != 0.

    Trailing zero amplitudes are dropped so that N_d is always tight.
    """

    d: np.ndarray

    def __post_init__(self):
        amps = _as_amps(self.d)
        nz = np.flatnonzero(amps)
        if nz.size == 0:
            raise InvalidStateError("desired state has zero norm")
        object.__setattr__(self, "d", _normalized(amps[: nz[-1] + 1]))

    @property
    def N_d(self) -> int:
        return self.d.size - 1

    def as_field(self, n_max: int | None = None) -> FieldState:
        n_max = self.N_d if n_max is None else n_max
        if n_max < self.N_d:
            raise TruncationError("n_max below N_d", required_n_max=self.N_d)
        amps = np.zeros(n_max + 1, dtype=complex)
        amps[: self.d.size] = self.d
        return FieldState(amps)

    def to_json(self) -> dict:
        return {"N_d": self.N_d, "amps": _amps_to_json(self.d)}

    @classmethod
    def from_json(cls, data: dict) -> "DesiredState":
        state = cls(_amps_from_json(data["amps"]))
        if "N_d" in data and int(data["N_d"]) != state.N_d:
            raise InvalidStateError("N_d does not match the last nonzero amplitude")
        return state


def fock_state(n: int, n_max: int) -> FieldState:
    if not 0 <= n <= n_max:
        raise TruncationError(f"|{n}> does not fit in n_max={n_max}", required_n_max=n)
    amps = np.zeros(n_max + 1, dtype=complex)
    amps[n] = 1.0
    return FieldState(amps)


def phase_state(N_d: int) -> DesiredState:
    """Truncated phase state, equal weights on |0>..|N_d>."""
    if N_d < 0:
        raise ValueError("N_d must be non-negative")
    return DesiredState(np.ones(N_d + 1))


def coherent_amplitudes(alpha: complex, n_max: int) -> np.ndarray:
    """Unnormalized e^{-|a|^2/2} a^n / sqrt(n!) for n = 0..n_max.

    Built with the running ratio a / sqrt(n) so no factorial is formed.
    """
    alpha = complex(alpha)
    amps = np.empty(n_max + 1, dtype=complex)
    amps[0] = math.exp(-abs(alpha) ** 2 / 2)
    for n in range(1, n_max + 1):
        amps[n] = amps[n - 1] * alpha / math.sqrt(n)
    return amps


def required_coherent_n_max(alpha: complex, tol: float = COHERENT_TAIL_TOL) -> int:
    """Smallest n_max whose truncated coherent tail weight is below tol."""
    alpha = complex(alpha)
    term = math.exp(-abs(alpha) ** 2)  # Poisson weight at n = 0
    kept = term
    n = 0
    while 1.0 - kept >= tol:
        n += 1
        term *= abs(alpha) ** 2 / n
        kept += term
    return n


def coherent_state(alpha: complex, n_max: int, tol: float = COHERENT_TAIL_TOL) -> FieldState:
    """Coherent state |alpha>, truncated at n_max and renormalized.

    Raises TruncationError if the discarded Poisson tail is not below `tol`.
    """
    if n_max < 0:
        raise ValueError("n_max must be non-negative")
    amps = coherent_amplitudes(alpha, n_max)
    tail = 1.0 - float(np.sum(np.abs(amps) ** 2))
    if tail >= tol:
        need = required_coherent_n_max(alpha, tol)
        raise TruncationError(
            f"coherent state alpha={alpha} loses tail weight {tail:.3e} at n_max={n_max}; "
            f"need n_max >= {need}",
            required_n_max=need,
        )
    return FieldState(amps)


def default_n_max(N_d: int, n_atoms: int, nbar: float) -> int:
    """Truncation used for sculpting runs.

    N_d + M levels of headroom on top of max(ceil(nbar + 6 sqrt(nbar + 1)), the
    level where the coherent tail drops below tolerance).
    """
    body = max(math.ceil(nbar + 6.0 * math.sqrt(nbar + 1.0)), required_coherent_n_max(math.sqrt(nbar)))
    return int(N_d + n_atoms + body)


def _vector(s) -> np.ndarray:
    if isinstance(s, FieldState):
        return s.amps
    if isinstance(s, DesiredState):
        return s.d
    return _as_amps(s)


def fidelity(a, b) -> float:
    """|<a|b>|^2 for normalized inputs; the shorter vector is zero-padded."""
    va, vb = _vector(a), _vector(b)
    na, nb = np.linalg.norm(va), np.linalg.norm(vb)
    if na == 0.0 or nb == 0.0:
        raise InvalidStateError("fidelity of a zero-norm state")
    n = min(va.size, vb.size)
    overlap = np.vdot(va[:n], vb[:n]) / (na * nb)
    return float(min(1.0, abs(overlap) ** 2))


def mean_photon(s: FieldState) -> float:
    p = np.abs(_vector(s)) ** 2
    return float(np.dot(np.arange(p.size), p) / p.sum())


def mean_amplitude(s: FieldState) -> complex:
    """<a> = sum_n sqrt(n+1) conj(c_n) c_{n+1}."""
    c = _vector(s)
    if c.size < 2:
        return 0j
    return complex(np.sum(np.sqrt(np.arange(1, c.size)) * np.conj(c[:-1]) * c[1:]))
