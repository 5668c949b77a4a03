"""Command line entry point: fieldsculpt {verify,sculpt,scan,table1,wigner}.

Every command reads a JSON config (``--config``), writes its results to
``--out`` and stamps each file with the config hash and the seed.  Exit codes:
0 success (empty results included), 2 bad configuration, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import sys
from pathlib import Path

from .errors import InvalidStateError, SculptError
from .fock import DesiredState, phase_state
from .interaction import AtomStep, _complex_from_json, sculpt_forward
from .optimizer import SCAN_OPTIONS, ScanSpec, default_tau_grid, scan_tau, sweep_nbar, table_csv, tau_window
from .solver import SolveProblem, SolverOptions, min_atoms, solve_roots
from .wigner import sculpt_sequence, wigner_grid

log = logging.getLogger("fieldsculpt")

EXIT_CONFIG = 2
EXIT_NUMERIC = 3

# nbar values of the published rate table
RATE_TABLE_NBAR = [0.36, 0.64, 1.0, 1.44, 1.96, 2.56, 3.24, 4.0]


class ConfigError(Exception):
    pass


def parse_desired(value) -> DesiredState:
    if isinstance(value, str):
        kind, _, arg = value.partition(":")
        if kind != "phase" or not arg.isdigit():
            raise ConfigError(f"unknown desired-state preset {value!r} (expected 'phase:N')")
        return phase_state(int(arg))
    if isinstance(value, dict):
        return DesiredState.from_json(value)
    if isinstance(value, list):
        return DesiredState([_complex_from_json(v) for v in value])
    raise ConfigError("'desired' must be a preset string, an amplitude list or {'amps': ...}")


def parse_alpha(cfg: dict) -> complex:
    has_a, has_n = "alpha" in cfg, "nbar" in cfg
    if has_a == has_n:
        raise ConfigError("give exactly one of 'alpha' and 'nbar'")
    if has_n:
        nbar = float(cfg["nbar"])
        if nbar < 0:
            raise ConfigError("'nbar' must be non-negative")
        return complex(math.sqrt(nbar))
    return _complex_from_json(cfg["alpha"])


def parse_tau_grid(cfg: dict, n_atoms: int, grid_step: float | None):
    spec = cfg.get("tau_grid", {})
    step = grid_step if grid_step is not None else float(spec.get("step", 0.1))
    if "axes" in spec:
        return tuple(tuple(float(t) for t in ax) for ax in spec["axes"])
    if "windows" in spec:
        hw = float(spec.get("half_width", 0.3))
        return tuple(tau_window(float(c), hw, step) for c in spec["windows"])
    return default_tau_grid(n_atoms, step, float(spec.get("stop", 6.3)))


def solver_options(cfg: dict, key: str, seed: int | None, base: SolverOptions) -> SolverOptions:
    data = dict(base.to_json())
    data.update(cfg.get(key, {}))
    if seed is not None:
        data["seed"] = seed
    return SolverOptions.from_json(data)


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


class Run:
    """Resolved config plus output helpers."""

    def __init__(self, cfg: dict, args):
        self.cfg = dict(cfg)
        if args.seed is not None:
            self.cfg["seed"] = args.seed
        if args.grid_step is not None:
            self.cfg.setdefault("tau_grid", {})
            self.cfg["tau_grid"] = {**self.cfg["tau_grid"], "step": args.grid_step}
        self.seed = int(self.cfg.get("seed", self.cfg.get("solver", {}).get("seed", 0)))
        self.threads = args.threads or int(self.cfg.get("threads", 1))
        self.out = Path(args.out or self.cfg.get("out", "out"))
        self.hash = config_hash({k: v for k, v in self.cfg.items() if k not in ("out", "threads")})
        self.grid_step = args.grid_step

    def meta(self) -> dict:
        return {"config_hash": self.hash, "seed": self.seed, "config": self.cfg}

    def write_json(self, name: str, payload: dict) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        path = self.out / name
        path.write_text(json.dumps({**self.meta(), **payload}, indent=2, sort_keys=True) + "\n")
        return path

    def write_text(self, name: str, text: str, comment: bool = True) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        path = self.out / name
        head = f"# config_hash={self.hash} seed={self.seed}\n" if comment else ""
        path.write_text(head + text)
        return path


def _print_roots(cands, limit=5):
    for i, c in enumerate(cands[:limit]):
        o = c.outcome
        print(f"root {i}: R={o.rate:.4f} P={o.total_prob:.4f} F={o.fidelity:.4f} |r|={c.residual_norm:.1e}")
        for k, (t, ea, ep, ba, bp) in enumerate(c.polar(), 1):
            print(f"  k={k} Omega*tau={t:.3f} |eps|={ea:.4f} theta={ep:.4f} |beta|={ba:.4f} phi={bp:.4f}")


def cmd_verify(run: Run) -> int:
    cfg = run.cfg
    desired = parse_desired(cfg["desired"])
    alpha = parse_alpha(cfg)
    if "steps" not in cfg:
        raise ConfigError("verify needs explicit 'steps'")
    steps = [AtomStep.from_json(s) for s in cfg["steps"]]
    outcome = sculpt_forward(alpha, steps, desired)
    run.write_json(
        "outcome.json",
        {"steps": [s.to_json() for s in steps], "alpha": [alpha.real, alpha.imag], "outcome": outcome.to_json()},
    )
    probs = " ".join(f"{p:.4f}" for p in outcome.step_probs)
    print(f"P_k: {probs}  P={outcome.total_prob:.4f} F={outcome.fidelity:.4f} R={outcome.rate:.4f}")
    return 0


def _sculpt_problem(run: Run) -> SolveProblem:
    cfg = run.cfg
    desired = parse_desired(cfg["desired"])
    alpha = parse_alpha(cfg)
    if "omega_taus" not in cfg:
        raise ConfigError("sculpt needs 'omega_taus'")
    opts = solver_options(cfg, "solver", run.seed, SolverOptions())
    return SolveProblem(desired, alpha, tuple(float(t) for t in cfg["omega_taus"]), opts)


def cmd_sculpt(run: Run) -> int:
    problem = _sculpt_problem(run)
    cands = solve_roots(problem)
    run.write_json("candidates.json", {"problem": problem.to_json(), "candidates": [c.to_json() for c in cands]})
    lines = ["rank,R,P,F,residual_norm," + ",".join(
        f"omega_tau_{k},eps_abs_{k},eps_phase_{k},beta_abs_{k},beta_phase_{k}" for k in range(1, problem.n_atoms + 1)
    )]
    for i, c in enumerate(cands):
        o = c.outcome
        row = [i, o.rate, o.total_prob, o.fidelity, c.residual_norm] + [v for r in c.polar() for v in r]
        lines.append(",".join(repr(v) for v in row))
    run.write_text("candidates.csv", "\n".join(lines) + "\n")
    if not cands:
        log.warning("no root converged below root_tol=%g", problem.options.root_tol)
    _print_roots(cands)
    return 0


def _scan_spec(run: Run, desired, alpha) -> ScanSpec:
    cfg = run.cfg
    m = int(cfg.get("n_atoms", min_atoms(desired.N_d)))
    grid = parse_tau_grid(cfg, m, run.grid_step)
    return ScanSpec(
        desired=desired,
        alpha=alpha,
        tau_grid=grid,
        solver_options=solver_options(cfg, "scan_solver", run.seed, SCAN_OPTIONS),
        refine_options=solver_options(cfg, "solver", run.seed, SolverOptions()),
        n_atoms=m,
        threads=run.threads,
    )


def cmd_scan(run: Run) -> int:
    desired = parse_desired(run.cfg["desired"])
    spec = _scan_spec(run, desired, parse_alpha(run.cfg))
    res = scan_tau(spec)
    run.write_text("scan.csv", res.to_csv())
    run.write_json("scan.json", res.to_json())
    if res.best is None:
        log.warning("no cell produced a root")
    else:
        o = res.best.outcome
        taus = ", ".join(f"{t:.1f}" for t in res.best_taus)
        print(f"best cell ({taus}): P={o.total_prob:.4f} F={o.fidelity:.4f} R={o.rate:.4f}")
    return 0


def cmd_table1(run: Run) -> int:
    cfg = run.cfg
    desired = parse_desired(cfg.get("desired", "phase:4"))
    nbars = [float(n) for n in cfg.get("nbar_list", RATE_TABLE_NBAR)]
    template = _scan_spec(run, desired, 0j)
    grids = None
    if "tau_windows" in cfg:
        hw = float(cfg.get("tau_grid", {}).get("half_width", 0.3))
        step = run.grid_step or float(cfg.get("tau_grid", {}).get("step", 0.1))
        grids = {float(k): tuple(tau_window(float(c), hw, step) for c in v) for k, v in cfg["tau_windows"].items()}
    rows = sweep_nbar(desired, nbars, template, grids)
    run.write_text("table1.csv", table_csv(rows, template.n_atoms))
    print("nbar    " + "  ".join(f"Ot{k + 1}" for k in range(template.n_atoms)) + "   P       F       R")
    for r in rows:
        taus = "  ".join(f"{t:.1f}" for t in r.omega_taus)
        print(f"{r.nbar:.4f}  {taus}  {r.P:.4f}  {r.F:.4f}  {r.R:.4f}")
    return 0


def cmd_wigner(run: Run) -> int:
    cfg = run.cfg
    desired = parse_desired(cfg["desired"])
    wcfg = cfg.get("wigner", {})
    bounds = wcfg.get("bounds")
    nq, np_ = int(wcfg.get("nq", 81)), int(wcfg.get("np", 81))
    if "steps" in cfg:
        steps = [AtomStep.from_json(s) for s in cfg["steps"]]
        outcome = sculpt_forward(parse_alpha(cfg), steps, desired)
        grids = sculpt_sequence(outcome, desired, bounds or (-4.0, 4.0, -4.0, 4.0), nq, np_)
        names = ["initial"] + [f"atom{k}" for k in range(1, len(steps) + 1)] + ["desired"]
    else:
        grids = [wigner_grid(desired.as_field(), bounds, nq, np_)]
        names = ["desired"]
    for i, (name, g) in enumerate(zip(names, grids)):
        run.write_text(f"wigner_{i}_{name}.csv", g.to_csv())
        run.write_json(f"wigner_{i}_{name}.json", g.to_json())
        print(f"{name}: integral={g.integral():.4f} min={g.values.min():.4f} max={g.values.max():.4f}")
    return 0


COMMANDS = {
    "verify": cmd_verify,
    "sculpt": cmd_sculpt,
    "scan": cmd_scan,
    "table1": cmd_table1,
    "wigner": cmd_wigner,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fieldsculpt", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--grid-step", type=float, default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a JSON object")
        return COMMANDS[args.command](Run(cfg, args))
    except (OSError, json.JSONDecodeError, ConfigError, KeyError, TypeError, InvalidStateError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SculptError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

if __name__ == "__main__":
    sys.exit(main())
