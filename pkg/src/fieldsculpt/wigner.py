"""Wigner functions of truncated field states.

Convention: gamma = q + i p, W integrates to 1 over d^2 gamma = dq dp, and a
coherent state |a> has W(gamma) = (2/pi) exp(-2 |gamma - a|^2).  Values are
obtained from the displaced parity,

    W(gamma) = (2/pi) sum_n (-1)^n |<n| D(-gamma) |psi>|^2,

with displacement matrix elements from associated Laguerre polynomials.
"""

from __future__ import annotations

import csv
import hashlib
import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import TruncationError
from .fock import FieldState, mean_amplitude, mean_photon

# points per vectorized block in grid evaluation
BLOCK = 512


def laguerre_table(n_max: int, k_max: int, x) -> np.ndarray:
    """L_n^{(k)}(x) for n <= n_max, k <= k_max; shape (n_max+1, k_max+1, *x.shape).

    Upward three-term recurrence in n at fixed order k:
    (n+1) L_{n+1} = (2n + 1 + k - x) L_n - (n + k) L_{n-1}.
    """
    x = np.asarray(x, dtype=float)
    k = np.arange(k_max + 1, dtype=float).reshape((-1,) + (1,) * x.ndim)
    out = np.empty((n_max + 1, k_max + 1) + x.shape)
    out[0] = 1.0
    if n_max >= 1:
        out[1] = 1.0 + k - x
    for n in range(1, n_max):
        out[n + 1] = ((2 * n + 1 + k - x) * out[n] - (n + k) * out[n - 1]) / (n + 1)
    return out


def _log_factorials(n: int) -> np.ndarray:
    return np.concatenate([[0.0], np.cumsum(np.log(np.arange(1, n + 1)))])


def displacement_pad(gamma: complex) -> int:
    r = abs(gamma)
    return int(math.ceil(r * r + 6 * r))


def _displacement_elements(gamma, rows: int, cols: int) -> np.ndarray:
    """<m|D(gamma)|n> for m < rows, n < cols; gamma may be an array (trailing axes)."""
    g = np.asarray(gamma, dtype=complex)
    r2 = np.abs(g) ** 2
    size = max(rows, cols)
    lag = laguerre_table(min(rows, cols) - 1, size - 1, r2)
    lf = _log_factorials(size)
    with np.errstate(divide="ignore"):
        log_r = np.log(np.abs(g))
    phase = np.where(np.abs(g) > 0, g / np.where(np.abs(g) > 0, np.abs(g), 1.0), 1.0)
    m = np.arange(rows)[:, None]
    n = np.arange(cols)[None, :]
    lo, hi = np.minimum(m, n), np.maximum(m, n)
    k = hi - lo
    expand = (...,) + (None,) * g.ndim
    with np.errstate(invalid="ignore"):
        mag = np.exp(k[expand] * log_r - r2 / 2 + 0.5 * (lf[lo] - lf[hi])[expand])
    # 0 * log(0) on the diagonal, and gamma = 0 off it
    mag = np.where(k[expand] == 0, np.exp(-r2 / 2), np.where(r2 > 0, mag, 0.0))
    powers = np.cumprod(np.concatenate([np.ones((1,) + g.shape), np.broadcast_to(phase, (size - 1,) + g.shape)]), axis=0)
    ph = np.where((m >= n)[expand], powers[k], np.conj(powers[k]) * (-1.0) ** k[expand])
    out = mag * ph * lag[lo, k]
    return out


def displacement_matrix(gamma: complex, n_max: int) -> np.ndarray:
    """Truncated D(gamma) on |0>..|n_max>.

    Only the leading block n <= n_max - pad (pad = ceil(|g|^2 + 6|g|)) is
    close to unitary; columns beyond it leak out of the truncation.
    """
    pad = displacement_pad(gamma)
    if n_max < pad:
        raise TruncationError(
            f"n_max={n_max} too small to displace by |gamma|={abs(gamma):.3g}; need >= {pad}",
            required_n_max=pad,
        )
    return _displacement_elements(complex(gamma), n_max + 1, n_max + 1)


def _wigner_points(amps: np.ndarray, gammas: np.ndarray) -> np.ndarray:
    gammas = np.asarray(gammas, dtype=complex).reshape(-1)
    rmax = float(np.max(np.abs(gammas))) if gammas.size else 0.0
    rows = amps.size + displacement_pad(rmax)
    out = np.empty(gammas.size)
    sign = (-1.0) ** np.arange(rows)
    for lo in range(0, gammas.size, BLOCK):
        g = gammas[lo : lo + BLOCK]
        dm = _displacement_elements(-g, rows, amps.size)  # (rows, cols, pts)
        v = np.einsum("mnp,n->mp", dm, amps)
        out[lo : lo + BLOCK] = (2 / np.pi) * np.einsum("m,mp->p", sign, np.abs(v) ** 2)
    return out


def wigner_at(state: FieldState, gamma: complex) -> float:
    return float(_wigner_points(state.amps, np.array([gamma]))[0])


@dataclass(eq=False)
class PhaseGrid:
    q_min: float
    q_max: float
    p_min: float
    p_max: float
    nq: int
    np: int
    values: np.ndarray  # shape (nq, np), values[i, j] at q_i + i p_j
    state_hash: str = ""

    @property
    def q(self) -> np.ndarray:
        return np.linspace(self.q_min, self.q_max, self.nq)

    @property
    def p(self) -> np.ndarray:
        return np.linspace(self.p_min, self.p_max, self.np)

    @property
    def cell_area(self) -> float:
        return (self.q_max - self.q_min) / (self.nq - 1) * (self.p_max - self.p_min) / (self.np - 1)

    def integral(self) -> float:
        return float(np.sum(self.values) * self.cell_area)

    def to_csv(self) -> str:
        """(q, p, W) rows, q varying fastest; bounds and sizes in comment lines."""
        buf = io.StringIO()
        buf.write(f"# q_min={self.q_min!r} q_max={self.q_max!r} nq={self.nq}\n")
        buf.write(f"# p_min={self.p_min!r} p_max={self.p_max!r} np={self.np}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["q", "p", "W"])
        q, p = self.q, self.p
        for j in range(self.np):
            for i in range(self.nq):
                w.writerow([repr(float(q[i])), repr(float(p[j])), repr(float(self.values[i, j]))])
        return buf.getvalue()

    def to_json(self) -> dict:
        return {
            "bounds": [self.q_min, self.q_max, self.p_min, self.p_max],
            "nq": self.nq,
            "np": self.np,
            "state_hash": self.state_hash,
            # row-major over p, q fastest, matching the CSV order
            "values": [float(v) for v in self.values.T.reshape(-1)],
        }


def state_hash(state: FieldState) -> str:
    return hashlib.sha256(np.ascontiguousarray(state.amps).tobytes()).hexdigest()[:16]


def auto_bounds(state: FieldState):
    c = mean_amplitude(state)
    h = 1.5 + 3.0 * math.sqrt(mean_photon(state) + 1.0)
    return (c.real - h, c.real + h, c.imag - h, c.imag + h)


def wigner_grid(state: FieldState, bounds=None, nq: int = 81, np_: int = 81) -> PhaseGrid:
    """Evaluate W on the rectangle bounds = (q_min, q_max, p_min, p_max), endpoints included."""
    if nq < 2 or np_ < 2:
        raise ValueError("grid needs at least 2 points per axis")
    q_min, q_max, p_min, p_max = auto_bounds(state) if bounds is None else map(float, bounds)
    q = np.linspace(q_min, q_max, nq)
    p = np.linspace(p_min, p_max, np_)
    gam = q[:, None] + 1j * p[None, :]
    vals = _wigner_points(state.amps, gam.reshape(-1)).reshape(nq, np_)
    return PhaseGrid(q_min, q_max, p_min, p_max, nq, np_, vals, state_hash(state))


def grid_overlap(a: PhaseGrid, b: PhaseGrid) -> float:
    """pi * integral W_a W_b d^2 gamma, which equals |<a|b>|^2 for pure states."""
    if a.values.shape != b.values.shape or (a.q_min, a.q_max, a.p_min, a.p_max) != (b.q_min, b.q_max, b.p_min, b.p_max):
        raise ValueError("grids must share bounds and sizes")
    return float(np.pi * np.sum(a.values * b.values) * a.cell_area)


def sculpt_sequence(outcome, desired, bounds, nq: int = 81, np_: int = 81) -> list:
    """Wigner grids for the initial state, the state after each atom, and the target."""
    states = list(outcome.history) + [desired.as_field()]
    return [wigner_grid(s, bounds, nq, np_) for s in states]
