"""Grid search of the interaction angles (and the coherent amplitude) for maximum rate."""

from __future__ import annotations

import csv
import io
import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .fock import DesiredState
from .solver import (
    CHUNK,
    RootCandidate,
    SolveProblem,
    SolverOptions,
    collect_candidates,
    initial_points,
    min_atoms,
    run_starts,
    solve_roots,
)

log = logging.getLogger(__name__)

SCAN_OPTIONS = SolverOptions(n_starts=16)


def tau_axis(step: float = 0.1, stop: float = 6.3, start: float | None = None) -> tuple:
    """Arithmetic grid start, start + step, ..., <= stop (start defaults to step)."""
    if step <= 0:
        raise ValueError("grid step must be positive")
    start = step if start is None else start
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return tuple(round(start + k * step, 10) for k in range(max(count, 0)))


def tau_window(center: float, half_width: float = 0.3, step: float = 0.1) -> tuple:
    return tau_axis(step, center + half_width, center - half_width)


def default_tau_grid(n_atoms: int, step: float = 0.1, stop: float = 6.3) -> tuple:
    return tuple(tau_axis(step, stop) for _ in range(n_atoms))


@dataclass(frozen=True, eq=False)
class ScanSpec:
    desired: DesiredState
    alpha: complex
    tau_grid: tuple = None
    solver_options: SolverOptions = SCAN_OPTIONS
    # budget for re-solving the winning cell; None skips the refinement
    refine_options: SolverOptions | None = field(default_factory=SolverOptions)
    n_atoms: int | None = None
    threads: int = 1

    def __post_init__(self):
        object.__setattr__(self, "alpha", complex(self.alpha))
        m = self.n_atoms
        if m is None:
            m = len(self.tau_grid) if self.tau_grid is not None else min_atoms(self.desired.N_d)
        object.__setattr__(self, "n_atoms", m)
        grid = self.tau_grid if self.tau_grid is not None else default_tau_grid(m)
        # canonical order: sorted, unique; cell seeds depend on position in this order
        grid = tuple(tuple(sorted(set(float(t) for t in axis))) for axis in grid)
        if len(grid) != m:
            raise ValueError(f"tau grid has {len(grid)} axes for {m} atoms")
        if any(len(axis) == 0 or min(axis) <= 0 for axis in grid):
            raise ValueError("tau grid axes must be non-empty and positive")
        object.__setattr__(self, "tau_grid", grid)

    def cells(self):
        """(index tuple, tau tuple) for every grid cell, in canonical order."""
        idx = itertools.product(*(range(len(a)) for a in self.tau_grid))
        for ii in idx:
            yield ii, tuple(self.tau_grid[k][i] for k, i in enumerate(ii))


@dataclass(eq=False)
class ScanResult:
    spec: ScanSpec
    cells: dict  # tau tuple -> RootCandidate or None
    best_taus: tuple | None
    best: RootCandidate | None

    def rate_grid(self) -> np.ndarray:
        """Rates on the grid (NaN where no root converged); 2-atom scans give a matrix."""
        shape = tuple(len(a) for a in self.spec.tau_grid)
        out = np.full(shape, np.nan)
        for ii, taus in self.spec.cells():
            c = self.cells.get(taus)
            if c is not None:
                out[ii] = c.rate
        return out

    def to_csv(self) -> str:
        M = self.spec.n_atoms
        head = [f"omega_tau_{k + 1}" for k in range(M)] + ["P", "F", "R", "residual_norm"]
        for k in range(M):
            head += [f"eps_abs_{k + 1}", f"eps_phase_{k + 1}", f"beta_abs_{k + 1}", f"beta_phase_{k + 1}"]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(head)
        for _, taus in self.spec.cells():
            c = self.cells.get(taus)
            row = [repr(t) for t in taus]
            if c is None:
                row += [""] * (len(head) - M)
            else:
                o = c.outcome
                row += [repr(o.total_prob), repr(o.fidelity), repr(o.rate), repr(c.residual_norm)]
                for _, ea, ep, ba, bp in c.polar():
                    row += [repr(ea), repr(ep), repr(ba), repr(bp)]
            w.writerow(row)
        return buf.getvalue()

    def to_json(self) -> dict:
        return {
            "alpha": [self.spec.alpha.real, self.spec.alpha.imag],
            "desired": self.spec.desired.to_json(),
            "tau_grid": [list(a) for a in self.spec.tau_grid],
            "solver_options": self.spec.solver_options.to_json(),
            "cells": [
                {"omega_taus": list(taus), "candidate": None if c is None else c.to_json()}
                for _, taus in self.spec.cells()
                for c in [self.cells.get(taus)]
            ],
            "best": None
            if self.best is None
            else {"omega_taus": list(self.best_taus), "candidate": self.best.to_json()},
        }


def cell_seed(seed: int, index: tuple, salt: int = 0) -> int:
    """Per-cell seed from (seed, cell indices); independent of evaluation order."""
    return int(np.random.SeedSequence([seed, salt, *index]).generate_state(1, np.uint64)[0])


def _better(a: RootCandidate, b: RootCandidate | None) -> bool:
    return b is None or round(a.rate, 12) > round(b.rate, 12)


def scan_tau(spec: ScanSpec) -> ScanResult:
    """Solve the Ramsey parameters in every cell of the tau grid and keep the best root per cell."""
    opts = spec.solver_options
    M = spec.n_atoms
    cells = list(spec.cells())
    template = SolveProblem(spec.desired, spec.alpha, cells[0][1], opts)
    lam0 = template.initial_amplitudes()
    d, pivot = spec.desired.d, template.pivot

    x0 = np.concatenate([initial_points(M, opts.n_starts, cell_seed(opts.seed, ii), opts.modulus_max) for ii, _ in cells])
    taus = np.repeat(np.array([t for _, t in cells], dtype=float), opts.n_starts, axis=0)

    blocks = [(lo, min(lo + CHUNK, len(x0))) for lo in range(0, len(x0), CHUNK)]

    def work(block):
        lo, hi = block
        return run_starts(lam0, taus[lo:hi], x0[lo:hi], d, pivot, opts)

    if spec.threads > 1:
        with ThreadPoolExecutor(spec.threads) as pool:
            parts = list(pool.map(work, blocks))
    else:
        parts = [work(b) for b in blocks]
    xs = np.concatenate([p[0] for p in parts])
    rn = np.concatenate([p[1] for p in parts])

    result = {}
    best_taus, best = None, None
    for c, (ii, t) in enumerate(cells):
        sl = slice(c * opts.n_starts, (c + 1) * opts.n_starts)
        problem = replace(template, omega_taus=t)
        found = collect_candidates(problem, xs[sl], rn[sl])
        top = found[0] if found else None
        result[t] = top
        if top is not None and _better(top, best):
            best_taus, best = t, top

    if best is not None and spec.refine_options is not None:
        ii = tuple(spec.tau_grid[k].index(best_taus[k]) for k in range(M))
        ropts = replace(spec.refine_options, seed=cell_seed(spec.refine_options.seed, ii, salt=1))
        refined = solve_roots(SolveProblem(spec.desired, spec.alpha, best_taus, ropts))
        if refined and _better(refined[0], best):
            best = refined[0]
            result[best_taus] = best
    log.info("scan %s cells, best %s R=%s", len(cells), best_taus, None if best is None else best.rate)
    return ScanResult(spec, result, best_taus, best)


@dataclass(frozen=True)
class TableRow:
    nbar: float
    omega_taus: tuple
    P: float
    F: float
    R: float

    @property
    def as_list(self):
        return [self.nbar, *self.omega_taus, self.P, self.F, self.R]


def sweep_nbar(desired: DesiredState, nbar_list, template: ScanSpec, tau_grids: dict | None = None) -> list:
    """One tau scan per mean photon number (real alpha = sqrt(nbar)); rows sorted by nbar.

    `tau_grids` optionally maps an nbar value to its own tau grid.
    """
    rows = []
    for nbar in sorted(float(n) for n in nbar_list):
        if not nbar > 0:
            raise ValueError("nbar values must be positive")
        grid = (tau_grids or {}).get(nbar, template.tau_grid)
        spec = replace(template, desired=desired, alpha=math.sqrt(nbar), tau_grid=grid)
        res = scan_tau(spec)
        if res.best is None:
            rows.append(TableRow(nbar, (), math.nan, math.nan, math.nan))
            continue
        o = res.best.outcome
        rows.append(TableRow(nbar, res.best_taus, o.total_prob, o.fidelity, o.rate))
    return rows


def table_csv(rows, n_atoms: int) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["nbar"] + [f"omega_tau_{k + 1}" for k in range(n_atoms)] + ["P", "F", "R"])
    for r in rows:
        taus = list(r.omega_taus) or [math.nan] * n_atoms
        w.writerow([repr(v) for v in [r.nbar, *taus, r.P, r.F, r.R]])
    return buf.getvalue()


def poisson_weight(nbar: float, m: int) -> float:
    """e^{-nbar} nbar^m / m!, by running product."""
    w = math.exp(-nbar)
    for j in range(1, m + 1):
        w *= nbar / j
    return w


def suggest_nbar(N_d: int, n_atoms: int, threshold: float, alpha_step: float = 0.1) -> float:
    """Largest nbar on the alpha lattice (0.1, 0.2, ...) keeping |<m|alpha>|^2 <= threshold,
    m = N_d - M + 1, scanning up from small alpha.

    The Poisson weight at m rises with nbar until nbar = m; the search stops at
    the first lattice point above threshold.  Returns the smallest lattice value
    if none qualifies.
    """
    if not (N_d >= n_atoms >= 1):
        raise ValueError("need N_d >= M >= 1")
    if not 0 < threshold < 1:
        raise ValueError("threshold must lie in (0, 1)")
    m = N_d - n_atoms + 1
    best = None
    k = 1
    while True:
        nbar = round((k * alpha_step) ** 2, 12)
        if poisson_weight(nbar, m) > threshold or nbar > m:
            break
        best = nbar
        k += 1
    return best if best is not None else round(alpha_step**2, 12)
