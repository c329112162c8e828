import json

import pytest

from hormander_lab.cli import EXIT_FAILED, EXIT_INPUT, EXIT_OK, SAMPLES, build_parser, main


def test_every_command_is_registered():
    parser = build_parser()
    args = parser.parse_args(["schauder", "--omega-f", "pow:0.5", "--levels", "3"])
    assert args.command == "schauder"
    assert args.levels == 3


def test_check_hormander_on_kolmogorov(tmp_path, capsys):
    out = tmp_path / "hormander.json"
    assert main(["check-hormander", "--model", "kolmogorov", "--out", str(out)]) == EXIT_OK
    report = json.loads(out.read_text())
    assert report["result"]["ranks"] == [1, 2, 3]
    assert report["result"]["q"] == 6
    assert report["passed"] is True
    printed = capsys.readouterr().out
    assert "Done. Report:" in printed
    assert (tmp_path / "hormander.basis.csv").exists()


def test_rank_deficient_fields_fail(tmp_path):
    path = tmp_path / "fields.json"
    path.write_text(json.dumps({"dimension": 2, "fields": [None, [1, 0]]}))
    assert main(["check-hormander", "--fields", str(path), "--out", str(tmp_path / "r.json")]) == EXIT_FAILED


def test_input_errors_exit_one(tmp_path):
    assert main(["check-hormander", "--model", "wave"]) == EXIT_INPUT
    assert main(["no-such-command"]) == EXIT_INPUT
    assert main(["distance", "--model", "heat-1d", "--pair=0,0"]) == EXIT_INPUT


def test_distance_pair_and_determinism(tmp_path):
    argv = ["distance", "--model", "heat-1d", "--pair=0,0;0.1,0.04", "--samples", "50", "--seed", "11"]
    first, second = tmp_path / "a.json", tmp_path / "b.json"
    assert main(argv + ["--out", str(first)]) == EXIT_OK
    assert main(argv + ["--out", str(second)]) == EXIT_OK
    assert first.read_text() == second.read_text()
    pair = json.loads(first.read_text())["result"]["pairs"][0]
    assert pair["distance"] == pytest.approx(0.3, abs=1e-9)
    assert pair["in_chart"] is True


def test_dini_integral(tmp_path):
    out = tmp_path / "dini.json"
    assert main(["dini-integral", "--omega-f", "pow:0.5", "--out", str(out)]) == EXIT_OK
    assert json.loads(out.read_text())["result"]["dini"] == pytest.approx(2.0)
    assert (tmp_path / "dini.tails.csv").exists()
    assert main(["dini-integral", "--omega-f", "log", "--out", str(tmp_path / "log.json")]) == EXIT_FAILED


def test_taylor_order_exact_polynomial(tmp_path):
    out = tmp_path / "taylor.json"
    assert main(["taylor-order", "--model", "kolmogorov", "--fn", "x**2 + t", "--out", str(out)]) == EXIT_OK
    assert json.loads(out.read_text())["result"]["exact"] is True


def test_chart_dump_feeds_distance_and_taylor_order(tmp_path):
    first = tmp_path / "first.json"
    assert main(["distance", "--model", "kolmogorov", "--point", "0.1,0.2,0", "--samples", "50",
                 "--out", str(first)]) == EXIT_OK
    dumped = json.loads(first.read_text())["result"]["chart"]
    chart_file = tmp_path / "chart.json"
    chart_file.write_text(json.dumps(dumped))

    again = tmp_path / "again.json"
    assert main(["distance", "--model", "kolmogorov", "--chart", str(chart_file), "--samples", "50",
                 "--pair=0.1,0.2,0;0.1,0.2,0", "--out", str(again)]) == EXIT_OK
    result = json.loads(again.read_text())["result"]
    assert result["chart"]["words"] == dumped["words"]
    assert result["chart"]["base_point"] == dumped["base_point"]
    assert result["pairs"][0]["distance"] == pytest.approx(0.0, abs=1e-12)

    taylor = tmp_path / "taylor.json"
    assert main(["taylor-order", "--model", "kolmogorov", "--chart", str(first), "--fn", "x**2 + t",
                 "--out", str(taylor)]) == EXIT_OK
    result = json.loads(taylor.read_text())["result"]
    assert result["exact"] is True
    assert result["chart"]["base_point"] == dumped["base_point"]


def test_missing_chart_file_is_an_input_error(tmp_path):
    assert main(["taylor-order", "--model", "kolmogorov", "--chart", str(tmp_path / "none.json")]) == EXIT_INPUT


def test_samples_default_and_solver_help(capsys):
    args = build_parser().parse_args(["gamma-check"])
    assert args.samples == SAMPLES == 10000
    assert args.method == "direct"
    assert main(["schauder", "--help"]) == EXIT_OK
    text = " ".join(capsys.readouterr().out.split())
    assert "sparse LU" in text
    assert "damped relaxation" in text
    assert "(default 10000)" in text


# ---------- one run per documented example ----------
def _run(tmp_path, argv, name="report.json"):
    out = tmp_path / name
    code = main(argv + ["--out", str(out)])
    return code, json.loads(out.read_text())


def test_distance_chart_fidelity_on_kolmogorov(tmp_path):
    code, report = _run(tmp_path, ["distance", "--model", "kolmogorov", "--samples", "200"])
    assert code == EXIT_OK
    assert report["result"]["jacobian_defect"] < 1e-6
    assert report["result"]["round_trip_error"] < 1e-8
    assert report["result"]["C_d"] >= 1.0


def test_taylor_order_slopes_on_kolmogorov(tmp_path):
    code, report = _run(tmp_path, ["taylor-order", "--model", "kolmogorov", "--fn", "sin(x)"], "sin.json")
    assert code == EXIT_OK
    assert report["result"]["slope"] > 2.5
    code, report = _run(tmp_path, ["taylor-order", "--model", "kolmogorov", "--fn", "y"], "y.json")
    assert code == EXIT_OK
    assert report["result"]["slope"] == pytest.approx(3.0, abs=0.2)


def test_c2l_check_separates_smooth_and_rough_data(tmp_path):
    code, report = _run(tmp_path, ["c2l-check", "--model", "heat-1d", "--fn", "x**2 + t", "--samples", "200"],
                        "good.json")
    assert code == EXIT_OK
    assert report["result"]["decreasing"] is True
    code, report = _run(tmp_path, ["c2l-check", "--model", "heat-1d", "--samples", "200"], "rough.json")
    assert code == EXIT_FAILED
    assert report["passed"] is False


def test_representation_check_on_heat(tmp_path):
    code, report = _run(tmp_path, ["representation-check", "--model", "heat-1d", "--radius", "0.5"])
    assert code == EXIT_OK
    assert report["result"]["fn"] == "x**2 + 2*t"
    assert report["result"]["relative_error"] < 2e-2
    assert report["result"]["flagged"] is False


def test_max_principle_has_no_violations(tmp_path):
    code, report = _run(tmp_path, ["max-principle", "--model", "heat-1d", "--trials", "4", "--grid", "13"])
    assert code == EXIT_OK
    assert report["result"]["violations"] == 0
    assert len(report["result"]["trials"]) == 4


def test_mean_value_and_apriori_on_heat(tmp_path):
    code, report = _run(tmp_path, ["mean-value", "--model", "heat-1d", "--grid", "13"], "mean.json")
    assert code == EXIT_OK
    assert all(s == pytest.approx(-1.0, abs=0.05) for s in report["result"]["prefactor_slopes"].values())
    code, report = _run(tmp_path, ["apriori", "--model", "heat-1d", "--grid", "13"], "apriori.json")
    assert code == EXIT_OK
    assert report["result"]["exponents"]["Y0:X1"] == pytest.approx(-1.0, abs=0.3)


def test_schauder_iterations_on_heat(tmp_path):
    code, report = _run(tmp_path, ["schauder", "--model", "heat-1d", "--omega-f", "pow:0.5", "--levels", "4",
                                   "--grid", "17"], "wang.json")
    assert code == EXIT_OK
    assert report["result"]["exponents"]["sup_v"] == pytest.approx(2.5, abs=0.2)
    assert report["result"]["bound_kind"] == "constant"
    code, report = _run(tmp_path, ["schauder-var", "--model", "heat-1d", "--levels", "2", "--grid", "13"],
                        "frozen.json")
    assert code == EXIT_OK
    assert report["result"]["bound_kind"] == "variable"
    assert report["result"]["bounds_hold"] is True


@pytest.mark.slow
def test_gamma_check_on_kolmogorov(tmp_path):
    code, report = _run(tmp_path, ["gamma-check", "--model", "kolmogorov"])
    assert code == EXIT_OK
    result = report["result"]
    assert result["q"] == 6
    assert result["bounds"]["samples"] == [10000, 40000]
    assert result["max_residual"] < 1e-4
    assert result["max_convolution_error"] < 1e-2


@pytest.mark.slow
def test_annulus_check_on_kolmogorov(tmp_path):
    code, report = _run(tmp_path, ["annulus-check", "--model", "kolmogorov", "--samples", "2000"])
    assert code == EXIT_OK
    assert report["result"]["potential"]["passed"] is True


@pytest.mark.slow
def test_representation_check_on_kolmogorov(tmp_path):
    code, report = _run(tmp_path, ["representation-check", "--model", "kolmogorov", "--fn", "x"])
    assert code == EXIT_OK
    assert report["result"]["relative_error"] < 2e-2


@pytest.mark.slow
def test_max_principle_on_kolmogorov(tmp_path):
    code, report = _run(tmp_path, ["max-principle", "--model", "kolmogorov"])
    assert code == EXIT_OK
    assert report["result"]["violations"] == 0


@pytest.mark.slow
def test_apriori_on_kolmogorov(tmp_path):
    code, report = _run(tmp_path, ["apriori", "--model", "kolmogorov", "--grid", "13"])
    assert code == EXIT_OK
    exponents = report["result"]["exponents"]
    assert sum(name.startswith("Y") for name in exponents) == 3


@pytest.mark.slow
def test_dini_dichotomy_on_heat(tmp_path):
    code, power = _run(tmp_path, ["schauder", "--model", "heat-1d", "--omega-f", "pow:0.5", "--levels", "6",
                                  "--grid", "17"], "power.json")
    assert code == EXIT_OK
    assert power["result"]["saturated"] is True
    _, log_run = _run(tmp_path, ["schauder", "--model", "heat-1d", "--omega-f", "log", "--levels", "6",
                                 "--grid", "17"], "log.json")
    assert log_run["result"]["saturated"] is False
    assert log_run["result"]["last_share"] > power["result"]["last_share"]
