import csv
import json
import math

import numpy as np
import pytest

from liqshock.cli import main
from liqshock.config import load_config, parse_ini

MODEL = """[model]
sigma = 0.3
mu = 0.06
nu01 = {nu01}
nu10 = 2.0
gamma = {gamma}
T = 1.0
"""


def write_cfg(tmp_path, payoff, nu01=1.0, gamma=1.0, extra="", name="run.ini"):
    path = tmp_path / name
    path.write_text(MODEL.format(nu01=nu01, gamma=gamma) + "\n[payoff]\n" + payoff + "\n" + extra)
    return path


CONST = "kind = constant\nlevel = 0.7\n"


def read_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


def test_parse_defaults_and_types():
    raw = parse_ini(MODEL.format(nu01=1, gamma=1) + "[payoff]\n" + CONST)
    assert raw["grid"] == {"xMin": -4.0, "xMax": 4.0, "nSpace": 201, "nTime": 200}
    assert raw["audit"]["seed"] == 42 and raw["solver"]["scheme"] == "direct"


@pytest.mark.parametrize("text, field", [
    ("[model]\nsigma=1\n", "model.mu"),
    (MODEL.format(nu01=1, gamma=1) + "[payoff]\nkind=call\n", "payoff.strike"),
    (MODEL.format(nu01=1, gamma=1) + "[payoff]\n" + CONST + "[grid]\nnspace = 3\n", "grid.nspace"),
    (MODEL.format(nu01=1, gamma=1) + "[payoff]\n" + CONST + "[grid]\nnSpace = lots\n", "grid.nSpace"),
    (MODEL.format(nu01=1, gamma=1) + "[payoff]\n" + CONST + "[grid]\nnSpace = 2\n", "grid.nSpace"),
    (MODEL.format(nu01=1, gamma=1) + "[payoff]\n" + CONST + "[solver]\nscheme = magic\n", "solver.scheme"),
    (MODEL.format(nu01=1, gamma=1) + "[payoff]\n" + CONST + "[weight]\nexponent = -2\n", "weight.exponent"),
    (MODEL.format(nu01=1, gamma=1) + "[payoff]\n" + CONST + "[plot]\ncolor = red\n", "plot"),
    (MODEL.format(nu01=1, gamma=-1) + "[payoff]\n" + CONST, "model.gamma"),
    (MODEL.format(nu01=1, gamma=1) + "[payoff]\nkind=put\nstrike=1\ntruncateN=-1\n", "payoff.truncateN"),
])
def test_config_errors_name_field(tmp_path, text, field):
    from liqshock.errors import ValidationError

    path = tmp_path / "c.ini"
    path.write_text(text)
    with pytest.raises(ValidationError) as err:
        load_config(path)
    assert err.value.field == field


def test_tabulated_relative_path(tmp_path):
    (tmp_path / "h.csv").write_text("S,h\n0.5,1\n2,0\n")
    cfg = load_config(write_cfg(tmp_path, "kind = tabulated\ntable = h.csv\n"))
    assert cfg.payoff.table_S == (0.5, 2.0)


def test_solve_constant(tmp_path):
    cfg = write_cfg(tmp_path, CONST)
    out = tmp_path / "o"
    assert main(["solve", "--config", str(cfg), "--out", str(out)]) == 0
    header, data = read_csv(out / "surface.csv")
    assert header == ["x", "S", "tau", "u", "I"]
    first = data[data[:, 2] == 0.0]
    assert np.all(first[:, 3] == 0.7)
    report = json.loads((out / "report.json").read_text())
    assert report["config"]["payoff"]["level"] == 0.7
    assert set(report["report"]) >= {"scheme", "iterations", "finalIncrement", "maxAbsU", "estimateRatio"}
    assert "wallTimeMs" not in report["report"]
    assert json.loads((out / "run_config.json").read_text()) == report["config"]


def test_solve_linear_reduction_matches_oracle(tmp_path):
    from liqshock.oracles import linear_reduction_solution
    from liqshock.params import ModelParams
    from liqshock.payoff import call

    lnk = math.log(100.0)
    cfg = write_cfg(tmp_path, "kind = call\nstrike = 100\n", nu01=0.0, gamma=0.01,
                    extra=f"[grid]\nxMin = {lnk - 4!r}\nxMax = {lnk + 4!r}\n")
    out = tmp_path / "o"
    assert main(["solve", "--config", str(cfg), "--out", str(out)]) == 0
    _, data = read_csv(out / "surface.csv")
    last = data[data[:, 2] == 1.0]
    central = np.abs(last[:, 0] - lnk) <= 2.0
    p = ModelParams(0.3, 0.06, 0.0, 2.0, 0.01, 1.0)
    exact = linear_reduction_solution(p, call(100.0), last[central, 1], 1.0)
    assert np.max(np.abs(last[central, 3] - exact)) / np.max(np.abs(exact)) <= 1e-2


def test_solve_timings_flag(tmp_path):
    cfg = write_cfg(tmp_path, CONST, extra="[grid]\nnSpace = 21\nnTime = 10\n")
    main(["solve", "--config", str(cfg), "--out", str(tmp_path / "o"), "--timings"])
    assert "wallTimeMs" in json.loads((tmp_path / "o" / "report.json").read_text())["report"]


def test_solve_ladder(tmp_path):
    cfg = write_cfg(tmp_path, "kind = call\nstrike = 1\n", extra="[grid]\nnSpace = 41\nnTime = 20\n")
    assert main(["solve", "--config", str(cfg), "--out", str(tmp_path / "o"), "--levels", "1,2,4,8"]) == 0
    ladder = json.loads((tmp_path / "o" / "report.json").read_text())["ladder"]
    assert ladder["levels"] == [1.0, 2.0, 4.0, 8.0] and len(ladder["sup_differences"]) == 3
    assert main(["solve", "--config", str(cfg), "--out", str(tmp_path / "o"), "--levels", "4,2"]) == 2


def test_exit_codes(tmp_path, capsys):
    bad = write_cfg(tmp_path, CONST, name="bad.ini")
    bad.write_text(bad.read_text().replace("sigma = 0.3", "sigma = 0"))
    assert main(["solve", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert "model.sigma" in capsys.readouterr().err
    n0 = write_cfg(tmp_path, CONST, nu01=0.0, name="n0.ini")
    assert main(["price", "--config", str(n0), "--out", str(tmp_path / "o")]) == 2
    assert "nu01" in capsys.readouterr().err
    assert main(["solve", "--config", str(tmp_path / "missing.ini")]) == 2
    huge = write_cfg(tmp_path, "kind = call\nstrike = 1\noffset = 480\n", name="huge.ini",
                     extra="[solver]\nscheme = monotone\n")
    assert main(["solve", "--config", str(huge), "--out", str(tmp_path / "o")]) == 2
    blow = write_cfg(tmp_path, "kind = constant\nlevel = -499.5\n", name="blow.ini",
                     extra="[grid]\nnSpace = 11\nnTime = 10\n")
    assert main(["solve", "--config", str(blow), "--out", str(tmp_path / "o")]) == 3
    assert "SolverOverflow" in capsys.readouterr().err


def test_price_constant(tmp_path):
    cfg = write_cfg(tmp_path, CONST)
    out = tmp_path / "o"
    assert main(["price", "--config", str(cfg), "--out", str(out)]) == 0
    header, data = read_csv(out / "prices.csv")
    assert header == ["x", "S", "t", "p", "q", "r0", "r1"]
    assert np.max(np.abs(data[:, 3:5] - 0.7)) <= 2e-3
    terminal = data[data[:, 2] == 1.0]
    assert np.max(np.abs(terminal[:, 3:5] - 0.7)) <= 1e-10


def test_verify_all_checks_pass(tmp_path):
    cfg = write_cfg(tmp_path, "kind = call\nstrike = 1\n", extra="[compare]\nkind = call\nstrike = 0.9\n")
    out = tmp_path / "o"
    assert main(["verify", "--config", str(cfg), "--out", str(out)]) == 0
    rep = json.loads((out / "verify.json").read_text())
    assert set(rep["checks"]) == {"comparison", "coercivity", "merton", "barrier", "truncation", "pointwise"}
    assert rep["passed"]


def test_verify_subset_and_failure(tmp_path):
    cfg = write_cfg(tmp_path, CONST)
    out = tmp_path / "o"
    assert main(["verify", "--config", str(cfg), "--out", str(out), "--checks", "merton,comparison"]) == 0
    rep = json.loads((out / "verify.json").read_text())
    assert set(rep["checks"]) == {"merton", "comparison"}
    assert rep["checks"]["comparison"]["worst_violation"] == 0.0
    assert main(["verify", "--config", str(cfg), "--out", str(out), "--checks", "nope"]) == 2


def test_verify_comparison_with_distinct_payoffs(tmp_path):
    cfg = write_cfg(tmp_path, "kind = put\nstrike = 1\n", extra="[compare]\nkind = put\nstrike = 1.2\n")
    assert main(["verify", "--config", str(cfg), "--out", str(tmp_path / "o"), "--checks", "comparison"]) == 0
    rep = json.loads((tmp_path / "o" / "verify.json").read_text())["checks"]["comparison"]
    assert rep["lower"] == 0.0 and rep["upper"] == pytest.approx(0.2, rel=1e-3)


def test_verify_failure_exit_code(tmp_path, monkeypatch):
    import liqshock.cli as cli

    monkeypatch.setitem(cli.CHECK_FUNCS, "merton", lambda cfg, rng: {"passed": False})
    cfg = write_cfg(tmp_path, CONST)
    assert main(["verify", "--config", str(cfg), "--out", str(tmp_path / "o"), "--checks", "merton"]) == 4
    assert json.loads((tmp_path / "o" / "verify.json").read_text())["passed"] is False


def test_converge(tmp_path):
    cfg = write_cfg(tmp_path, CONST)
    out = tmp_path / "o"
    assert main(["converge", "--config", str(cfg), "--out", str(out), "--levels", "3"]) == 0
    rep = json.loads((out / "converge.json").read_text())
    assert rep["case"] == "constant" and rep["minRate"] >= 1.9
    header, data = read_csv(out / "converge.csv")
    assert header[:2] == ["level", "nSpace"] and data.shape[0] == 3
    assert main(["converge", "--config", str(cfg), "--out", str(out), "--levels", "1"]) == 2


def test_converge_linear_call_parallel(tmp_path):
    lnk = math.log(100.0)
    cfg = write_cfg(tmp_path, "kind = call\nstrike = 100\n", nu01=0.0, gamma=0.01,
                    extra=f"[grid]\nxMin = {lnk - 4!r}\nxMax = {lnk + 4!r}\n")
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["converge", "--config", str(cfg), "--out", str(a), "--jobs", "2"]) == 0
    assert main(["converge", "--config", str(cfg), "--out", str(b)]) == 0
    ra = json.loads((a / "converge.json").read_text())
    assert ra["case"] == "linear" and ra["minRate"] >= 1.5
    assert (a / "converge.csv").read_bytes() == (b / "converge.csv").read_bytes()


def test_converge_self_case(tmp_path):
    cfg = write_cfg(tmp_path, "kind = put\nstrike = 1\n", extra="[grid]\nnSpace = 41\nnTime = 20\n")
    assert main(["converge", "--config", str(cfg), "--out", str(tmp_path / "o"), "--levels", "3"]) == 0
    rep = json.loads((tmp_path / "o" / "converge.json").read_text())
    assert rep["case"] == "self" and len(rep["levels"]) == 3


def test_check_weights(tmp_path):
    cfg = write_cfg(tmp_path, CONST)
    assert main(["check-weights", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    rep = json.loads((tmp_path / "o" / "weights.json").read_text())
    assert rep["weight"]["C"] == 20.0 and rep["weight"]["theta"] == pytest.approx(1 / 3)


def test_determinism(tmp_path):
    cfg = write_cfg(tmp_path, "kind = put\nstrike = 1\n", extra="[solver]\nscheme = monotone\n")
    for name in ("a", "b"):
        assert main(["solve", "--config", str(cfg), "--out", str(tmp_path / name)]) == 0
        assert main(["verify", "--config", str(cfg), "--out", str(tmp_path / name), "--seed", "9",
                     "--checks", "coercivity,pointwise"]) == 0
    for f in ("surface.csv",):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    for f in ("report.json", "verify.json", "run_config.json"):
        a = json.loads((tmp_path / "a" / f).read_text())
        b = json.loads((tmp_path / "b" / f).read_text())
        strip = lambda d: json.dumps(d, sort_keys=True).replace(str(tmp_path / "a"), "").replace(
            str(tmp_path / "b"), "")
        assert strip(a) == strip(b)


def test_seed_override_recorded(tmp_path):
    cfg = write_cfg(tmp_path, CONST)
    main(["verify", "--config", str(cfg), "--out", str(tmp_path / "o"), "--seed", "5", "--checks", "merton"])
    assert json.loads((tmp_path / "o" / "run_config.json").read_text())["audit"]["seed"] == 5
