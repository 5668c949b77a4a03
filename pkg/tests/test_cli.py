import json
import math
from pathlib import Path

import pytest

from fieldsculpt.cli import RATE_TABLE_NBAR, config_hash, main

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def write_cfg(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def run(cmd, cfg_path, out, *extra):
    return main([cmd, "--config", str(cfg_path), "--out", str(out), *extra])


def test_verify_reference_root(tmp_path, capsys):
    assert run("verify", CONFIGS / "verify_reference_root.json", tmp_path) == 0
    data = json.loads((tmp_path / "outcome.json").read_text())
    o = data["outcome"]
    assert o["rate"] == pytest.approx(0.5288, abs=5e-3)
    assert o["total_prob"] == pytest.approx(o["step_probs"][0] * o["step_probs"][1], rel=1e-12)
    assert data["seed"] == 0
    assert data["config_hash"] == config_hash(json.loads((CONFIGS / "verify_reference_root.json").read_text()))
    assert "R=0.5288" in capsys.readouterr().out


def test_verify_zero_atoms(tmp_path):
    cfg = write_cfg(tmp_path, {"desired": "phase:4", "nbar": 2.56, "steps": []})
    assert run("verify", cfg, tmp_path / "o") == 0
    o = json.loads((tmp_path / "o" / "outcome.json").read_text())["outcome"]
    assert o["total_prob"] == 1.0
    assert o["rate"] == o["fidelity"]
    # |<phase4|alpha>|^2 for real alpha = 1.6
    amp = sum(math.exp(-1.28) * 1.6**n / math.sqrt(math.factorial(n)) for n in range(5)) / math.sqrt(5)
    assert o["fidelity"] == pytest.approx(amp**2, abs=1e-9)


@pytest.mark.parametrize(
    "text",
    ['{"desired": "phase:4", ', "[1, 2]", '{"desired": "phase:4", "alpha": 1, "nbar": 1, "steps": []}',
     '{"desired": "gauss:3", "alpha": 1, "steps": []}', '{"desired": [0, 0], "alpha": 1, "steps": []}',
     '{"desired": "phase:4", "alpha": 1}'],
)
def test_malformed_config_exits_2(tmp_path, capsys, text):
    path = tmp_path / "bad.json"
    path.write_text(text)
    assert run("verify", path, tmp_path / "o") == 2
    assert "config error" in capsys.readouterr().err


def test_missing_config_file_exits_2(tmp_path):
    assert run("verify", tmp_path / "nope.json", tmp_path) == 2


def test_physics_error_exits_3(tmp_path, capsys):
    # vacuum, full Rabi transfer to |g,1>, then post-select the empty |e> branch
    cfg = write_cfg(tmp_path, {"desired": "phase:1", "alpha": 0,
                               "steps": [{"omega_tau": math.pi / 2, "beta": 0, "epsilon": 0}]})
    assert run("verify", cfg, tmp_path / "o") == 3
    assert "error" in capsys.readouterr().err


def test_sculpt_writes_ranked_roots(tmp_path):
    cfg = write_cfg(tmp_path, {"desired": "phase:4", "nbar": 2.56, "omega_taus": [5.8, 4.2],
                               "solver": {"n_starts": 32}})
    assert run("sculpt", cfg, tmp_path / "o") == 0
    data = json.loads((tmp_path / "o" / "candidates.json").read_text())
    cands = data["candidates"]
    assert cands and cands[0]["outcome"]["rate"] >= 0.528
    assert all(c["residual_norm"] < 1e-10 for c in cands)
    csv_text = (tmp_path / "o" / "candidates.csv").read_text()
    assert csv_text.startswith(f"# config_hash={data['config_hash']} seed=0\nrank,R,P,F,residual_norm,")
    assert len(csv_text.splitlines()) == 2 + len(cands)


def test_sculpt_one_atom(tmp_path):
    cfg = write_cfg(tmp_path, {"desired": "phase:1", "nbar": 0.25, "omega_taus": [2.0],
                               "solver": {"n_starts": 16}})
    assert run("sculpt", cfg, tmp_path / "o") == 0
    cands = json.loads((tmp_path / "o" / "candidates.json").read_text())["candidates"]
    assert cands and cands[0]["residual_norm"] < 1e-10


def test_sculpt_empty_result_exits_0(tmp_path, caplog):
    cfg = write_cfg(tmp_path, {"desired": "phase:4", "nbar": 2.56, "omega_taus": [5.8, 4.2],
                               "solver": {"n_starts": 4, "max_iters": 1}})
    assert run("sculpt", cfg, tmp_path / "o") == 0
    assert json.loads((tmp_path / "o" / "candidates.json").read_text())["candidates"] == []
    assert "no root converged" in caplog.text


def test_seed_flag_is_recorded_and_changes_hash(tmp_path):
    cfg = write_cfg(tmp_path, {"desired": "phase:1", "nbar": 0.25, "omega_taus": [2.0], "solver": {"n_starts": 4}})
    run("sculpt", cfg, tmp_path / "a")
    run("sculpt", cfg, tmp_path / "b", "--seed", "7")
    a = json.loads((tmp_path / "a" / "candidates.json").read_text())
    b = json.loads((tmp_path / "b" / "candidates.json").read_text())
    assert (a["seed"], b["seed"]) == (0, 7)
    assert b["problem"]["options"]["seed"] == 7
    assert a["config_hash"] != b["config_hash"]


def test_scan_and_rerun_is_byte_identical(tmp_path):
    cfg = write_cfg(tmp_path, {"desired": "phase:4", "nbar": 2.56, "tau_grid": {"windows": [5.8, 4.2], "half_width": 0.1},
                               "scan_solver": {"n_starts": 8}, "solver": {"n_starts": 16}})
    assert run("scan", cfg, tmp_path / "a") == 0
    assert run("scan", cfg, tmp_path / "b", "--threads", "2") == 0
    for name in ("scan.csv", "scan.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    lines = (tmp_path / "a" / "scan.csv").read_text().splitlines()
    assert lines[0].startswith("# config_hash=")
    assert len(lines) == 2 + 9


def test_grid_step_flag(tmp_path):
    cfg = write_cfg(tmp_path, {"desired": "phase:4", "nbar": 2.56, "tau_grid": {"windows": [5.8, 4.2], "half_width": 0.2},
                               "scan_solver": {"n_starts": 4}, "solver": {"n_starts": 4}})
    assert run("scan", cfg, tmp_path / "o", "--grid-step", "0.2") == 0
    assert len((tmp_path / "o" / "scan.csv").read_text().splitlines()) == 2 + 9


def test_table1_rows(tmp_path):
    cfg = write_cfg(tmp_path, {"desired": "phase:4", "nbar_list": [2.56, 1.0], "tau_grid": {"half_width": 0.0},
                               "tau_windows": {"1.0": [3.2, 4.1], "2.56": [5.8, 4.2]},
                               "scan_solver": {"n_starts": 16}, "solver": {"n_starts": 16}})
    assert run("table1", cfg, tmp_path / "o") == 0
    lines = (tmp_path / "o" / "table1.csv").read_text().splitlines()
    assert lines[1] == "nbar,omega_tau_1,omega_tau_2,P,F,R"
    assert [ln.split(",")[:3] for ln in lines[2:]] == [["1.0", "3.2", "4.1"], ["2.56", "5.8", "4.2"]]
    assert len(RATE_TABLE_NBAR) == 8


def test_wigner_sequence_files(tmp_path):
    cfg = json.loads((CONFIGS / "wigner_sequence.json").read_text())
    cfg["wigner"].update(nq=21, np=21)
    assert run("wigner", write_cfg(tmp_path, cfg), tmp_path / "o") == 0
    names = sorted(p.name for p in (tmp_path / "o").iterdir())
    stems = ["wigner_0_initial", "wigner_1_atom1", "wigner_2_atom2", "wigner_3_desired"]
    assert names == sorted(f"{s}.{ext}" for s in stems for ext in ("csv", "json"))
    js = json.loads((tmp_path / "o" / "wigner_3_desired.json").read_text())
    assert js["nq"] == 21 and len(js["values"]) == 441


def test_wigner_desired_only(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {"desired": "phase:4", "wigner": {"bounds": [-4, 4, -4, 4], "nq": 41, "np": 41}})
    assert run("wigner", cfg, tmp_path / "o") == 0
    assert [p.name for p in sorted((tmp_path / "o").iterdir())] == ["wigner_0_desired.csv", "wigner_0_desired.json"]
    assert "integral=1.00" in capsys.readouterr().out
