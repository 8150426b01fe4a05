import json
import math

import numpy as np
import pytest

from _oracles import big_f2, risk as loop_risk
from kmstab.geometry import Codebook
from kmstab.harness import (
    FAIL,
    PASS,
    SKIPPED,
    ExperimentSpec,
    Report,
    Table,
    Verdict,
    emit_report,
    read_report,
    run_counterexample_segments,
    summarize,
    verify_comparison_suite,
    verify_epsilon_minimizer,
    verify_geometry_suite,
    verify_theorem_bound,
)
from kmstab.harness.cli import main
from kmstab.harness.instances import instance_rng, probe_codebooks, random_measure
from kmstab.harness.report import format_report, report_from_dict
from kmstab.harness.suites import epsilon_minimizers
from kmstab.measures import from_samples, grid_discretize, store, uniform_rectangle
from kmstab.quantize import risk, solve
from kmstab.stability import theorem_constant

FOUR = from_samples([[0.0], [1.0], [2.0], [3.0]])


class TestInstances:
    def test_reproducible(self):
        a, ka = random_measure(instance_rng(1, 2))
        b, kb = random_measure(instance_rng(1, 2))
        assert a == b and ka == kb

    def test_shapes(self):
        for i in range(50):
            P, k = random_measure(instance_rng(0, i))
            assert k in (2, 3) and k + 2 <= P.n <= 12 and 1 <= P.dim <= 3

    def test_probe_mix(self):
        rng = np.random.default_rng(0)
        cstar = Codebook([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        probes = probe_codebooks(cstar, np.array([[0, 0], [1, 1]]), 50, rng)
        assert len(probes) == 50
        assert all(q.k == 3 and q.dim == 2 for q in probes)
        # the swap probes put two centers near the same optimal center
        near = [min(np.linalg.norm(q.centers - c, axis=1).min() for c in cstar.centers) for q in probes[4::5]]
        assert max(near) < 0.5


class TestSpec:
    def test_grids_increasing(self):
        with pytest.raises(ValueError):
            ExperimentSpec(t_grid=(0.2, 0.1))

    def test_fixed_measure_needs_k(self):
        with pytest.raises(ValueError):
            ExperimentSpec(measure=FOUR)

    def test_margin_choice(self):
        with pytest.raises(ValueError):
            ExperimentSpec(margin="sometimes")


class TestTheoremSuite:
    def test_optimum_probe_passes(self):
        spec = ExperimentSpec(measure=FOUR, k=2, probes=1)
        (v,) = verify_theorem_bound(spec)
        assert v.status == PASS and v.margins["tested"] == 1
        assert v.margins["bound_constant"] == pytest.approx(2.0)

    def test_skips_without_certificate(self):
        P = grid_discretize(uniform_rectangle(), 40)
        (v,) = verify_theorem_bound(ExperimentSpec(measure=P, k=2, probes=5))
        assert v.status == SKIPPED and "certif" in v.reason

    def test_skips_on_ties(self):
        P = from_samples([[0, 0], [1, 0], [0, 1], [1, 1]])
        (v,) = verify_theorem_bound(ExperimentSpec(measure=P, k=2, probes=5))
        assert v.status == SKIPPED and "unique" in v.reason

    def test_lambda_n_witness_reproduces(self):
        # the witness carries everything needed to recompute the violation independently
        (v,) = verify_theorem_bound(ExperimentSpec(instances=20, probes=100, seed=2))
        assert v.status == FAIL
        w = v.witness
        atoms, weights = w["support"], w["weights"]
        lhs = big_f2(atoms, weights, w["cstar"], w["q"])
        excess = loop_risk(atoms, weights, w["q"]) - loop_risk(atoms, weights, w["cstar"])
        assert lhs == pytest.approx(w["bigF2"])
        assert lhs > theorem_constant(w["lambda"]) * excess + 1e-9

    def test_certified_margin_passes(self):
        verdicts = verify_theorem_bound(ExperimentSpec(instances=20, probes=100, seed=2, margin="both"))
        by_name = {v.check: v for v in verdicts}
        assert by_name["theorem_bound[certified]"].status == PASS
        assert by_name["theorem_bound[certified]"].margins["tested"] > 1000

    def test_rerun_is_identical(self):
        spec = ExperimentSpec(instances=5, probes=40, seed=7, margin="both")
        assert verify_theorem_bound(spec) == verify_theorem_bound(spec)


class TestOtherSuites:
    def test_geometry_small(self):
        verdicts = verify_geometry_suite(seed=3, trials=500)
        assert [v.status for v in verdicts] == [PASS] * len(verdicts)
        assert len(verdicts) == 6

    def test_comparison_small(self):
        verdicts = verify_comparison_suite(ExperimentSpec(instances=8, probes=30, seed=1))
        assert summarize(verdicts) == PASS
        assert all(v.margins["tested"] > 0 for v in verdicts)

    def test_comparison_optimum_probe(self):
        verdicts = verify_comparison_suite(ExperimentSpec(measure=FOUR, k=2, probes=1))
        assert summarize(verdicts) == PASS

    def test_epsilon_minimizers_within_eps(self):
        rng = np.random.default_rng(0)
        P = from_samples(rng.uniform(-1, 1, (10, 2)))
        opt = solve(P, 2)
        for eps in (1e-3, 1e-1):
            qs = epsilon_minimizers(P, opt, eps, rng)
            assert qs
            assert all(0 <= risk(P, q) - opt.risk <= eps + 1e-12 for q in qs)

    def test_epsilon_certified(self):
        verdicts = verify_epsilon_minimizer(ExperimentSpec(instances=10, seed=0, margin="certified"))
        assert summarize(verdicts) == PASS

    def test_summarize(self):
        assert summarize([]) == PASS
        assert summarize([Verdict("a", SKIPPED, "x")]) == SKIPPED
        assert summarize([Verdict("a", PASS), Verdict("b", FAIL)]) == FAIL


class TestSegments:
    def test_searches_and_logs(self):
        out = run_counterexample_segments(resolution=50, probes=30)
        assert [v.status for v in out.verdicts] == [PASS] * 3
        best = out.verdicts[2].margins
        assert best["best_c_q"] > 1e-6 and best["best_q"] is not None
        # theorem inequality breaks once lambda > 1 for the left/right split at +-1
        assert out.info["lambda_break"] == pytest.approx(1.0)
        assert out.info["certified_margin_coarse"] == pytest.approx(1.0)


class TestReport:
    def _report(self):
        return Report(
            "demo",
            {"seed": 1},
            [Verdict("a", PASS, "", {}, {"x": math.inf}), Verdict("b", FAIL, "bad", {"q": [[1.0]]}, {"y": np.float64(0.5)})],
            {"lambda_n": math.inf},
            [Table("rectangle", ["eps", "F", "excess", "ratio"], [[0.1, 0.2, 0.01, 4.0]])],
        )

    def test_empty_csv_is_header(self, tmp_path):
        emit_report(Report("empty"), tmp_path / "r.csv")
        assert (tmp_path / "r.csv").read_text() == "check,status,reason,margins,witness\n"
        assert read_report(tmp_path / "r.csv") == []

    def test_empty_json(self, tmp_path):
        emit_report(Report("empty"), tmp_path / "r.json", "json")
        doc = read_report(tmp_path / "r.json")
        assert doc["verdicts"] == [] and doc["schema_version"] == 1

    def test_json_round_trip(self, tmp_path):
        rep = self._report()
        emit_report(rep, tmp_path / "r.json", "json")
        doc = read_report(tmp_path / "r.json")
        assert doc == json.loads(json.dumps(rep.as_dict()))
        assert report_from_dict(doc).as_dict() == doc
        assert doc["measurements"]["lambda_n"] == "inf"

    def test_csv_rows_and_side_table(self, tmp_path):
        written = emit_report(self._report(), tmp_path / "r.csv")
        assert [p.name for p in written] == ["r.csv", "r.rectangle.csv"]
        rows = read_report(tmp_path / "r.csv")
        assert [r["check"] for r in rows] == ["a", "b", "lambda_n"]
        assert rows[1]["witness"] == {"q": [[1.0]]}
        assert (tmp_path / "r.rectangle.csv").read_text().splitlines()[0] == "eps,F,excess,ratio"

    def test_bad_format(self, tmp_path):
        with pytest.raises(ValueError):
            emit_report(Report("x"), tmp_path / "r.txt", "yaml")

    def test_io_error_names_path(self, tmp_path):
        target = tmp_path / "missing" / "r.csv"
        with pytest.raises(OSError, match="missing"):
            emit_report(Report("x"), target)

    def test_format_matches_file(self, tmp_path):
        rep = self._report()
        emit_report(rep, tmp_path / "r.json", "json")
        assert (tmp_path / "r.json").read_text() == format_report(rep, "json")


class TestCLI:
    def test_optimal(self, capsys):
        assert main(["optimal", "--measure", "segments", "--resolution", "6", "--k", "2"]) == 0
        out = capsys.readouterr().out
        assert "certified_unique" in out and "codebook" in out

    def test_optimal_from_file(self, tmp_path, capsys):
        store(FOUR, tmp_path / "four.csv")
        assert main(["optimal", "--measure", str(tmp_path / "four.csv"), "--k", "2", "--format", "json"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["measurements"]["codebook"] == [[0.5], [2.5]]
        assert doc["measurements"]["risk"] == 0.25

    def test_stability(self, capsys):
        code = main(["stability", "--measure", "rectangle", "--resolution", "100", "--k", "2", "--q=-0.5,0.1;0.5,-0.1", "--format", "json"])
        assert code == 0
        meas = json.loads(capsys.readouterr().out)["measurements"]
        assert meas["f1"] == pytest.approx(0.1, abs=1e-6)
        assert meas["f2"] == pytest.approx(0.025, rel=0.05)

    def test_margin_writes_curves(self, tmp_path, capsys):
        out = tmp_path / "m.csv"
        assert main(["margin", "--measure", "segments", "--resolution", "6", "--k", "2", "--out", str(out)]) == 0
        for name in ("p", "p_star", "a_mass"):
            assert (tmp_path / f"m.{name}.csv").exists()
        rows = read_report(out)
        assert {r["check"] for r in rows} >= {"lambda_n", "certified_margin"}

    def test_verify_fail_exit_code(self, capsys):
        code = main(["verify", "theorem", "--instances", "20", "--probes", "100", "--seed", "2"])
        assert code == 1

    def test_verify_pass_exit_code(self, capsys):
        assert main(["verify", "geometry", "--trials", "300"]) == 0

    def test_counterexample_segments(self, tmp_path, capsys):
        code = main(["counterexample", "segments", "--resolution", "40", "--probes", "20", "--out", str(tmp_path / "s.json"), "--format", "json"])
        assert code == 0
        doc = read_report(tmp_path / "s.json")
        assert [t["name"] for t in doc["tables"]] == ["segments_a_mass", "segments_search", "segments_thresholds"]

    def test_usage_errors(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["optimal", "--k", "2"])
        assert exc.value.code == 2
        assert main(["optimal", "--measure", "no-such-file.csv", "--k", "2"]) == 2
        assert main(["optimal", "--measure", "segments"]) == 2
        assert main(["stability", "--measure", "segments", "--resolution", "4", "--k", "2", "--q", "0,0;1,1;2,2"]) == 2

    def test_bad_measure_file(self, tmp_path, capsys):
        path = tmp_path / "bad.csv"
        path.write_text("x_1,w\n0,0.5\n1,0.3\n")
        assert main(["optimal", "--measure", str(path), "--k", "1"]) == 2
        assert "bad.csv" in capsys.readouterr().err
