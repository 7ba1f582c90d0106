import io
import json
from pathlib import Path

import pytest

from rcbounds import acceptance, cli
from rcbounds.bounds import lower_bound_lp
from rcbounds.errors import NonConvergenceError
from rcbounds.montecarlo import VIOLATED
from rcbounds.rng import WORKERS_ENV
from rcbounds.transforms import parse_phi, young_fenchel

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"

SMALL_SCENARIO = """\
family: gaussian-shift
theta0: 0.0
estimator: sample-mean
norm: {tag: Lp, q: 2}
n_grid: [5, 20]
reps: 2000
seed: 3
"""


def run(argv):
    buf = io.StringIO()
    code = cli.main([str(a) for a in argv], stdout=buf)
    return code, buf.getvalue()


def table(text):
    """Two-column rows of a table as a dict of strings."""
    out = {}
    for line in text.splitlines():
        parts = line.split()
        if len(parts) == 2:
            out[parts[0]] = parts[1]
    return out


def records(path):
    return [json.loads(line) for line in Path(path).read_text().splitlines()]


@pytest.fixture
def small(tmp_path):
    path = tmp_path / "small.scn"
    path.write_text(SMALL_SCENARIO)
    return path


# -- documented examples --------------------------------------------------------------------

def test_fisher_gaussian_prints_one():
    code, text = run(["fisher", "--family", "gaussian-shift", "--theta", "0", "--p", "2"])
    assert code == 0
    assert float(table(text)["value"]) == pytest.approx(1.0, abs=1e-12)


def test_bound_gaussian_q43():
    code, text = run(["bound", "--family", "gaussian-shift", "--theta", "0", "--q", "1.3333333"])
    assert code == 0
    assert float(table(text)["bound"]) == pytest.approx(0.4030, abs=1e-4)


def test_verify_gauss_q2_holds(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    code, text = run(["verify", "--scenario", SCENARIOS / "gauss_q2.scn", "--seed", "42"])
    assert code == 0
    report = json.loads((tmp_path / "gauss_q2_report.json").read_text())
    assert report["verdict"] in ("Holds", "HoldsWithinNoise")
    assert (tmp_path / "gauss_q2.csv").read_text().count("\n") == 4
    assert table(text)["verdict"] == report["verdict"]


# -- reports --------------------------------------------------------------------------------

def test_report_embeds_resolved_scenario(tmp_path, small):
    code, _ = run(["verify", "--scenario", small, "--report", tmp_path / "r.json"])
    assert code == 0
    scen = json.loads((tmp_path / "r.json").read_text())["scenario"]
    assert scen["mode"] == "lower"
    assert scen["seed"] == 3
    assert scen["n_grid"] == [5, 20]
    assert "p_grid" in scen and "lam_grid" in scen


def test_report_round_trip_is_bit_identical(tmp_path, small):
    first, second = tmp_path / "a.json", tmp_path / "b.json"
    assert run(["verify", "--scenario", small, "--report", first])[0] == 0
    assert run(["verify", "--scenario", first, "--report", second])[0] == 0
    assert first.read_bytes() == second.read_bytes()


def test_seed_flag_overrides_scenario(tmp_path, small):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    run(["verify", "--scenario", small, "--report", a])
    run(["verify", "--scenario", small, "--seed", "4", "--report", b])
    ra, rb = json.loads(a.read_text()), json.loads(b.read_text())
    assert rb["scenario"]["seed"] == 4
    assert ra["lhs"] != rb["lhs"]


def test_workers_do_not_change_output(tmp_path, small, monkeypatch):
    one, four, env = tmp_path / "1.json", tmp_path / "4.json", tmp_path / "env.json"
    run(["verify", "--scenario", small, "--workers", "1", "--report", one])
    run(["verify", "--scenario", small, "--workers", "4", "--report", four])
    monkeypatch.setenv(WORKERS_ENV, "3")
    run(["verify", "--scenario", small, "--report", env])
    assert one.read_bytes() == four.read_bytes() == env.read_bytes()


def test_verify_csv_and_jsonl(tmp_path, small):
    csv, jl = tmp_path / "r.csv", tmp_path / "r.jsonl"
    assert run(["verify", "--scenario", small, "--csv", csv, "--jsonl", jl])[0] == 0
    lines = csv.read_text().splitlines()
    assert len(lines) == 3
    recs = records(jl)
    assert [r["n"] for r in recs if "n" in r] == [5, 20]
    assert recs[-1]["verdict"] in ("Holds", "HoldsWithinNoise")


def test_jsonl_full_precision(tmp_path):
    jl = tmp_path / "f.jsonl"
    run(["fisher", "--family", "exponential-scale", "--theta", "3", "--p", "2", "--jsonl", jl])
    (rec,) = records(jl)
    assert rec["command"] == "fisher"
    assert rec["value"] == pytest.approx(1 / 3, rel=1e-12)


def test_jsonl_appends(tmp_path):
    jl = tmp_path / "f.jsonl"
    argv = ["fisher", "--family", "gaussian-shift", "--theta", "0", "--p", "2", "--jsonl", jl]
    run(argv)
    run(argv)
    assert len(records(jl)) == 2


# -- config files ---------------------------------------------------------------------------

def test_config_fisher_example(tmp_path):
    jl = tmp_path / "f.jsonl"
    code, text = run(["fisher", "--config", SCENARIOS / "fisher.scn", "--jsonl", jl])
    assert code == 0
    assert records(jl)[0]["value"] == pytest.approx(0.5, rel=1e-9)


def test_config_bound_example_matches_library():
    code, text = run(["bound", "--config", SCENARIOS / "bound.scn"])
    assert code == 0
    expected = lower_bound_lp("laplace-shift", 0.0, 4 / 3).bound
    assert float(table(text)["bound"]) == pytest.approx(expected, rel=1e-12)


def test_explicit_option_overrides_config(tmp_path):
    jl = tmp_path / "f.jsonl"
    run(["fisher", "--config", SCENARIOS / "fisher.scn", "--theta", "4", "--jsonl", jl])
    assert records(jl)[0]["value"] == pytest.approx(0.25, rel=1e-9)


def test_config_conjugate_example_matches_library(tmp_path):
    jl = tmp_path / "c.jsonl"
    assert run(["conjugate", "--config", SCENARIOS / "conjugate.scn", "--jsonl", jl])[0] == 0
    recs = records(jl)
    res = young_fenchel(parse_phi("power(4)"), [r["u"] for r in recs])
    assert [r["value"] for r in recs] == pytest.approx(list(res.values), rel=1e-12)


def test_config_natural_psi_example(tmp_path):
    jl = tmp_path / "n.jsonl"
    assert run(["natural-psi", "--config", SCENARIOS / "natural_psi.scn", "--jsonl", jl])[0] == 0
    recs = records(jl)
    assert len(recs) == 8
    assert all(r["value"] > 0 for r in recs)
    assert recs[0]["p"] == pytest.approx(2.0)


def test_config_clt_norm_example_fast(tmp_path):
    jl = tmp_path / "c.jsonl"
    code, _ = run(["clt-norm", "--config", SCENARIOS / "clt_norm.scn", "--reps", "4000", "--n-grid", "1,4",
                   "--jsonl", jl])
    assert code == 0
    (rec,) = records(jl)
    # Rademacher has unit L_4 norm at n = 1
    assert rec["values"][0] == pytest.approx(1.0, abs=1e-12)


def test_probe_small(tmp_path):
    jl = tmp_path / "p.jsonl"
    code, _ = run(["probe", "--dist", "normal", "--norm", "Lp(2)", "--n-grid", "1,4,16", "--reps", "4000",
                   "--seed", "1", "--jsonl", jl])
    assert code == 0
    assert records(jl)[0]["verdict"] != "DivergenceDetected"


def test_natural_phi_flag(tmp_path):
    jl = tmp_path / "n.jsonl"
    code, _ = run(["natural-psi", "--family", "gaussian-shift", "--phi", "--lambda-grid=-1,0,1",
                   "--jsonl", jl])
    assert code == 0
    recs = records(jl)
    assert [r["command"] for r in recs] == ["natural-phi"] * 3
    # the gaussian score is standard normal
    assert [r["value"] for r in recs] == pytest.approx([0.5, 0.0, 0.5], abs=1e-6)


def test_conjugate_bar_flag(tmp_path):
    jl = tmp_path / "b.jsonl"
    code, _ = run(["conjugate", "--phi", "phi_2", "--bar", "--lambda-grid", "0.5,1", "--jsonl", jl])
    assert code == 0
    # phi_2 is a fixed point of the majorant
    assert [r["value"] for r in records(jl)] == pytest.approx([0.125, 0.5], rel=1e-9)


def test_regress_suite_only(tmp_path):
    jl = tmp_path / "r.jsonl"
    code, text = run(["regress-suite", "--only", "3,5", "--jsonl", jl])
    assert code == 0
    assert [r["criterion"] for r in records(jl)] == [3, 5]
    assert text.count("[PASS]") == 2


# -- exit codes -----------------------------------------------------------------------------

@pytest.mark.parametrize("argv", [
    [],
    ["frobnicate"],
    ["fisher", "--family", "gaussian-shift", "--theta", "0", "--bogus", "1"],
    ["fisher", "--theta", "0", "--p", "2"],
    ["fisher", "--family", "gaussian-shift", "--theta", "0"],
    ["verify"],
    ["verify", "--scenario", "/nonexistent/scenario.scn"],
])
def test_usage_errors_exit_1(argv):
    assert run(argv)[0] == 1


def test_unknown_config_key_exit_1(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("family: gaussian-shift\ntheta: 0\np: 2\ncolour: blue\n")
    assert run(["fisher", "--config", cfg])[0] == 1


def test_unknown_scenario_key_exit_1(tmp_path):
    scn = tmp_path / "s.scn"
    scn.write_text(SMALL_SCENARIO + "colour: blue\n")
    assert run(["verify", "--scenario", scn])[0] == 1


def test_verify_requires_seed(tmp_path):
    scn = tmp_path / "s.scn"
    scn.write_text(SMALL_SCENARIO.replace("seed: 3\n", ""))
    assert run(["verify", "--scenario", scn])[0] == 1


@pytest.mark.parametrize("argv", [
    ["fisher", "--family", "nope", "--theta", "0", "--p", "2"],
    ["fisher", "--family", "gaussian-shift", "--theta", "0", "--p", "0.5"],
    ["fisher", "--family", "exponential-scale", "--theta", "-1", "--p", "2"],
    ["bound", "--family", "gaussian-shift", "--theta", "0", "--q", "3"],
])
def test_domain_errors_exit_2(argv):
    assert run(argv)[0] == 2


def test_violation_exits_3(tmp_path, small, monkeypatch):
    real = cli.verify_bound

    def violated(scenario, workers=None):
        rep = real(scenario, workers=workers)
        rep.verdict = VIOLATED
        return rep

    monkeypatch.setattr(cli, "verify_bound", violated)
    assert run(["verify", "--scenario", small])[0] == 3


def test_failed_criterion_exits_3(monkeypatch):
    def failing(workers=None):
        return acceptance.CriterionResult(99, "always fails", False, {})

    monkeypatch.setitem(acceptance.CRITERIA, 99, failing)
    code, text = run(["regress-suite", "--only", "99"])
    assert code == 3
    assert "[FAIL]" in text


def test_nonconvergence_exits_4(monkeypatch):
    def stuck(*args, **kwargs):
        raise NonConvergenceError("no convergence")

    monkeypatch.setattr(cli, "fisher_p", stuck)
    assert run(["fisher", "--family", "gaussian-shift", "--theta", "0", "--p", "2"])[0] == 4
