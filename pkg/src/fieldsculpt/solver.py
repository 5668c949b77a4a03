"""Ramsey-parameter solver.

Given the initial coherent amplitude and the interaction angles of M atoms,
find (epsilon_k, beta_k) such that the head n <= N_d of the final field
state is proportional to the desired amplitudes.  Proportionality is
expressed against a pivot level, which removes the overall normalization
from the unknowns:

    r_n = Gamma_n d_pivot - Gamma_pivot d_n,   n in {0..N_d} \\ {pivot}

The tail n > N_d is left free; its weight is what keeps the fidelity below 1.

Roots are searched with a vectorized multi-start Levenberg-Marquardt
iteration on the real/imaginary split of the residual.  The Jacobian is
propagated exactly through the recurrence, including the renormalization
between atoms.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import SculptError
from .fock import DesiredState, coherent_state, default_n_max
from .interaction import AtomStep, SculptOutcome, _complex_from_json, gamma_recurrence, sculpt_forward

log = logging.getLogger(__name__)

# starts advanced together; bounds the (starts, 4M, n) Jacobian temporaries
CHUNK = 2048


def min_atoms(N_d: int) -> int:
    """Minimum number of atoms that makes the system solvable: int[(N_d + 1) / 2]."""
    if N_d < 0:
        raise ValueError("N_d must be non-negative")
    return (N_d + 1) // 2


@dataclass(frozen=True)
class SolverOptions:
    root_tol: float = 1e-10
    dedupe_tol: float = 1e-6
    n_starts: int = 64
    seed: int = 0
    max_iters: int = 200
    # initial |epsilon|, |beta| drawn uniformly from [0, modulus_max]
    modulus_max: float = 2.0
    # keep least-squares minima above root_tol (overdetermined problems)
    allow_inexact: bool = False

    def __post_init__(self):
        for name in ("root_tol", "dedupe_tol", "n_starts", "max_iters", "modulus_max"):
            if not getattr(self, name) > 0:
                raise ValueError(f"SolverOptions.{name} must be positive")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, data: dict) -> "SolverOptions":
        known = {k: data[k] for k in cls.__dataclass_fields__ if k in data}
        return cls(**known)


@dataclass(frozen=True, eq=False)
class SolveProblem:
    desired: DesiredState
    alpha: complex
    omega_taus: tuple
    options: SolverOptions = field(default_factory=SolverOptions)
    n_max: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "alpha", complex(self.alpha))
        object.__setattr__(self, "omega_taus", tuple(float(t) for t in self.omega_taus))
        if any(not math.isfinite(t) or t < 0 for t in self.omega_taus):
            raise ValueError("omega_taus must be finite and non-negative")
        if self.n_max is None:
            object.__setattr__(
                self, "n_max", default_n_max(self.desired.N_d, self.n_atoms, abs(self.alpha) ** 2)
            )

    @property
    def n_atoms(self) -> int:
        return len(self.omega_taus)

    @property
    def pivot(self) -> int:
        return int(np.argmax(np.abs(self.desired.d)))

    def initial_amplitudes(self) -> np.ndarray:
        return coherent_state(self.alpha, self.n_max).amps

    def to_json(self) -> dict:
        return {
            "desired": self.desired.to_json(),
            "alpha": [self.alpha.real, self.alpha.imag],
            "omega_taus": list(self.omega_taus),
            "options": self.options.to_json(),
            "n_max": self.n_max,
        }

    @classmethod
    def from_json(cls, data: dict) -> "SolveProblem":
        return cls(
            desired=DesiredState.from_json(data["desired"]),
            alpha=_complex_from_json(data["alpha"]),
            omega_taus=tuple(data["omega_taus"]),
            options=SolverOptions.from_json(data.get("options", {})),
            n_max=data.get("n_max"),
        )


@dataclass(frozen=True, eq=False)
class RootCandidate:
    epsilons: tuple
    betas: tuple
    residual_norm: float
    outcome: SculptOutcome
    omega_taus: tuple = ()

    @property
    def rate(self) -> float:
        return self.outcome.rate

    @property
    def steps(self) -> list:
        return [AtomStep(t, b, e) for t, e, b in zip(self.omega_taus, self.epsilons, self.betas)]

    @property
    def coords(self) -> np.ndarray:
        return pack(self.epsilons, self.betas)

    def polar(self) -> list:
        """Per atom: (omega_tau, |eps|, arg eps, |beta|, arg beta), args in [0, 2pi)."""
        rows = []
        for t, e, b in zip(self.omega_taus, self.epsilons, self.betas):
            rows.append((t, abs(e), _phase(e), abs(b), _phase(b)))
        return rows

    def to_json(self) -> dict:
        return {
            "omega_taus": list(self.omega_taus),
            "epsilons": [[e.real, e.imag] for e in self.epsilons],
            "betas": [[b.real, b.imag] for b in self.betas],
            "polar": [
                {"omega_tau": t, "eps_abs": ea, "eps_phase": ep, "beta_abs": ba, "beta_phase": bp}
                for t, ea, ep, ba, bp in self.polar()
            ],
            "residual_norm": self.residual_norm,
            "outcome": self.outcome.to_json(),
        }

    @classmethod
    def from_json(cls, data: dict, alpha: complex, desired: DesiredState, n_max=None) -> "RootCandidate":
        """Rebuild a candidate; the outcome is recomputed, not trusted from the file."""
        eps = tuple(_complex_from_json(v) for v in data["epsilons"])
        betas = tuple(_complex_from_json(v) for v in data["betas"])
        taus = tuple(float(t) for t in data["omega_taus"])
        steps = [AtomStep(t, b, e) for t, e, b in zip(taus, eps, betas)]
        outcome = sculpt_forward(alpha, steps, desired, n_max=n_max)
        return cls(eps, betas, float(data["residual_norm"]), outcome, taus)


def _phase(z: complex) -> float:
    return math.atan2(z.imag, z.real) % (2 * math.pi)


def pack(epsilons, betas) -> np.ndarray:
    """Flatten to (Re e1, Im e1, Re b1, Im b1, Re e2, ...)."""
    out = []
    for e, b in zip(epsilons, betas):
        out += [e.real, e.imag, b.real, b.imag]
    return np.array(out, dtype=float)


def unpack(x):
    x = np.asarray(x, dtype=float)
    eps = tuple(complex(x[4 * k], x[4 * k + 1]) for k in range(x.size // 4))
    betas = tuple(complex(x[4 * k + 2], x[4 * k + 3]) for k in range(x.size // 4))
    return eps, betas


def _head_residual(gamma: np.ndarray, d: np.ndarray, pivot: int) -> np.ndarray:
    others = np.delete(np.arange(d.size), pivot)
    r = gamma[others] * d[pivot] - gamma[pivot] * d[others]
    return np.concatenate([r.real, r.imag])


def final_gamma(lam0: np.ndarray, steps) -> np.ndarray:
    """Gamma^{(M)}: recurrence applied M times, renormalizing between atoms."""
    lam = np.asarray(lam0, dtype=complex)
    steps = list(steps)
    for k, step in enumerate(steps):
        gam = gamma_recurrence(lam, step)
        if k == len(steps) - 1:
            return gam
        lam = gam / np.linalg.norm(gam)
    return lam


def residual(problem: SolveProblem, epsilons, betas) -> np.ndarray:
    """Real residual vector of length 2 N_d (real parts, then imaginary parts)."""
    steps = [AtomStep(t, b, e) for t, e, b in zip(problem.omega_taus, epsilons, betas)]
    gam = final_gamma(problem.initial_amplitudes(), steps)
    return _head_residual(gam, problem.desired.d, problem.pivot)


def _shift_up(a):
    # a[..., n] -> a[..., n + 1], zero beyond the truncation
    out = np.zeros_like(a)
    out[..., :-1] = a[..., 1:]
    return out


def _shift_down(a):
    out = np.zeros_like(a)
    out[..., 1:] = a[..., :-1]
    return out


def _batch_residual(lam0, taus, x, d, pivot, jacobian=True):
    """Residuals (S, R) and Jacobians (S, R, 4M) for S parameter sets at once."""
    S, M = taus.shape
    n = lam0.size
    nn = np.sqrt(np.arange(1, n + 1))
    lam = np.broadcast_to(lam0, (S, n)).astype(complex)
    dlam = np.zeros((S, 4 * M, n), dtype=complex) if jacobian else None
    gam = lam
    dgam = dlam
    for k in range(M):
        ang = taus[:, k, None] * nn
        c, s = np.cos(ang), np.sin(ang)
        cp = np.concatenate([np.ones((S, 1)), c[:, :-1]], axis=1)
        sp = np.concatenate([np.zeros((S, 1)), s[:, :-1]], axis=1)
        e = (x[:, 4 * k] + 1j * x[:, 4 * k + 1])[:, None]
        b = (x[:, 4 * k + 2] + 1j * x[:, 4 * k + 3])[:, None]
        up, down = _shift_up(lam), _shift_down(lam)
        diag = c + e * b * cp
        gam = diag * lam - 1j * b * s * up - 1j * e * sp * down
        if jacobian:
            dgam = (
                diag[:, None] * dlam
                - 1j * (b * s)[:, None] * _shift_up(dlam)
                - 1j * (e * sp)[:, None] * _shift_down(dlam)
            )
            d_eps = b * cp * lam - 1j * sp * down
            d_beta = e * cp * lam - 1j * s * up
            dgam[:, 4 * k] += d_eps
            dgam[:, 4 * k + 1] += 1j * d_eps
            dgam[:, 4 * k + 2] += d_beta
            dgam[:, 4 * k + 3] += 1j * d_beta
        if k < M - 1:
            norm = np.linalg.norm(gam, axis=1)
            lam = gam / norm[:, None]
            if jacobian:
                proj = np.real(np.einsum("sn,spn->sp", np.conj(gam), dgam))
                dlam = dgam / norm[:, None, None] - gam[:, None, :] * (proj / norm[:, None] ** 3)[..., None]
    others = np.delete(np.arange(d.size), pivot)
    r = gam[:, others] * d[pivot] - gam[:, pivot, None] * d[others]
    res = np.concatenate([r.real, r.imag], axis=1)
    if not jacobian:
        return res, None
    dr = dgam[:, :, others] * d[pivot] - dgam[:, :, pivot, None] * d[others]
    jac = np.concatenate([dr.real, dr.imag], axis=2).transpose(0, 2, 1)
    return res, jac


def _lm_chunk(lam0, taus, x0, d, pivot, max_iters, stop_tol):
    """Damped Gauss-Newton with per-start damping. Returns (x, |r|)."""
    x = x0.copy()
    S, P = x.shape
    with np.errstate(all="ignore"):
        r, J = _batch_residual(lam0, taus, x, d, pivot)
        cost = np.sum(r * r, axis=1)
        damp = np.full(S, 1e-3)
        active = np.isfinite(cost) & (np.sqrt(cost) > stop_tol)
        for _ in range(max_iters):
            idx = np.flatnonzero(active)
            if idx.size == 0:
                break
            Ja, ra = J[idx], r[idx]
            A = np.einsum("srp,srq->spq", Ja, Ja)
            g = np.einsum("srp,sr->sp", Ja, ra)
            scale = np.maximum(np.einsum("spp->sp", A), 1e-12)
            lhs = A + damp[idx, None, None] * (scale[:, :, None] * np.eye(P))
            ok = np.all(np.isfinite(lhs), axis=(1, 2)) & np.all(np.isfinite(g), axis=1)
            step = np.zeros((idx.size, P))
            if ok.any():
                try:
                    step[ok] = -np.linalg.solve(lhs[ok], g[ok][..., None])[..., 0]
                except np.linalg.LinAlgError:
                    step[ok] = -np.einsum("spq,sq->sp", np.linalg.pinv(lhs[ok]), g[ok])
            xn = x[idx] + step
            rn, Jn = _batch_residual(lam0, taus[idx], xn, d, pivot)
            cn = np.sum(rn * rn, axis=1)
            better = np.isfinite(cn) & (cn < cost[idx]) & ok
            bi = idx[better]
            x[bi], r[bi], J[bi], cost[bi] = xn[better], rn[better], Jn[better], cn[better]
            damp[bi] = np.maximum(damp[bi] / 3.0, 1e-10)
            worse = idx[~better]
            damp[worse] *= 4.0
            tiny = np.linalg.norm(step, axis=1) <= 1e-15 * (1.0 + np.linalg.norm(x[idx], axis=1))
            done = (
                (np.sqrt(cost[idx]) <= stop_tol)
                | (damp[idx] > 1e16)
                | (tiny & better)
                | ~np.all(np.isfinite(x[idx]), axis=1)
            )
            active[idx[done]] = False
    rnorm = np.sqrt(cost)
    rnorm[~np.all(np.isfinite(x), axis=1)] = np.inf
    return x, rnorm


def run_starts(lam0, taus, x0, d, pivot, options: SolverOptions):
    """Run LM from every row of x0 (with its own row of taus), in fixed chunks.

    Rows evolve independently, so the result does not depend on how rows are
    grouped into chunks.
    """
    taus = np.atleast_2d(np.asarray(taus, dtype=float))
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    stop_tol = 1e-3 * options.root_tol
    xs, rs = [], []
    for lo in range(0, x0.shape[0], CHUNK):
        x, r = _lm_chunk(lam0, taus[lo : lo + CHUNK], x0[lo : lo + CHUNK], d, pivot, options.max_iters, stop_tol)
        xs.append(x)
        rs.append(r)
    if not xs:
        return np.zeros((0, x0.shape[1])), np.zeros(0)
    return np.concatenate(xs), np.concatenate(rs)


def initial_points(n_atoms: int, n_starts: int, seed, modulus_max: float = 2.0) -> np.ndarray:
    """Random starts: moduli uniform in [0, modulus_max], phases in [0, 2 pi)."""
    rng = np.random.default_rng(seed)
    mod = rng.uniform(0.0, modulus_max, size=(n_starts, 2 * n_atoms))
    ph = rng.uniform(0.0, 2 * np.pi, size=(n_starts, 2 * n_atoms))
    z = mod * np.exp(1j * ph)
    x = np.empty((n_starts, 4 * n_atoms))
    x[:, 0::2] = z.real
    x[:, 1::2] = z.imag
    return x


def _rank_key(c: RootCandidate):
    # R rounded so that mirror-image roots tie exactly and fall back to coordinates
    return (-round(c.rate, 12), tuple(c.coords))


def collect_candidates(problem: SolveProblem, xs, rnorms) -> list:
    """Deduplicate converged points, forward-evaluate and rank by rate."""
    opts = problem.options
    xs = np.asarray(xs, dtype=float).reshape(len(rnorms), -1)
    rnorms = np.asarray(rnorms, dtype=float)
    good = np.isfinite(rnorms) & np.all(np.isfinite(xs), axis=1)
    if not opts.allow_inexact:
        good &= rnorms < opts.root_tol
    pts = xs[good]
    if pts.shape[0] == 0:
        return []
    order = np.lexsort(pts.T[::-1]) if pts.shape[1] else np.arange(1)
    reps = []
    for i in order:
        p = pts[i]
        if any(np.max(np.abs(p - q), initial=0.0) < opts.dedupe_tol for q in reps):
            continue
        reps.append(p)
    out = []
    for p in reps:
        eps, betas = unpack(p)
        steps = [AtomStep(t, b, e) for t, e, b in zip(problem.omega_taus, eps, betas)]
        # roots that push weight onto the truncation edge are not trustworthy there
        try:
            rn = float(np.linalg.norm(residual(problem, eps, betas)))
            if not opts.allow_inexact and not rn < opts.root_tol:
                continue
            outcome = sculpt_forward(problem.alpha, steps, problem.desired, n_max=problem.n_max)
        except SculptError as exc:
            log.debug("dropping root %s: %s", p, exc)
            continue
        out.append(RootCandidate(eps, betas, rn, outcome, problem.omega_taus))
    out.sort(key=_rank_key)
    return out


def solve_roots(problem: SolveProblem) -> list:
    """All distinct roots found from the seeded starts, best rate first.

    An empty list means no start converged; that is not an error.
    """
    M = problem.n_atoms
    N_d = problem.desired.N_d
    if M != min_atoms(N_d):
        log.warning("using %d atoms; the minimum for N_d=%d is %d", M, N_d, min_atoms(N_d))
    opts = problem.options
    lam0 = problem.initial_amplitudes()
    if M == 0:
        r = _head_residual(lam0, problem.desired.d, problem.pivot)
        return collect_candidates(problem, np.zeros((1, 0)), [float(np.linalg.norm(r))])
    x0 = initial_points(M, opts.n_starts, opts.seed, opts.modulus_max)
    taus = np.tile(problem.omega_taus, (opts.n_starts, 1))
    xs, rn = run_starts(lam0, taus, x0, problem.desired.d, problem.pivot, opts)
    return collect_candidates(problem, xs, rn)


def with_options(problem: SolveProblem, **changes) -> SolveProblem:
    return replace(problem, options=replace(problem.options, **changes))
