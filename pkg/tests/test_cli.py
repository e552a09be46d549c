import json
import math
import subprocess
import sys

import pytest

import nbibp.cli as cli
from nbibp.validation import SuiteResult


def run_cli(*argv):
    return subprocess.run(
        [sys.executable, "-m", "nbibp.cli", *argv],
        capture_output=True,
        text=True,
    )


def run_main(capsys, *argv):
    code = cli.main(list(argv))
    return code, capsys.readouterr().out.splitlines()


class TestSimulate:
    def test_lines_and_summary(self, capsys):
        code, lines = run_main(
            capsys, "simulate", "--n", "2", "--reps", "3", "--seed", "5"
        )
        assert code == 0
        assert len(lines) == 4
        for ln in lines[:3]:
            rec = json.loads(ln)
            assert rec["kind"] == "array" and rec["n"] == 2
        summary = json.loads(lines[3])
        assert summary["kind"] == "summary" and summary["reps"] == 3
        assert summary["mean_kappa"] is not None

    def test_zero_reps_summary_nulls(self, capsys):
        code, lines = run_main(capsys, "simulate", "--reps", "0", "--seed", "1")
        assert code == 0
        assert len(lines) == 1
        summary = json.loads(lines[0])
        assert summary["mean_kappa"] is None
        assert summary["mean_multiplicity"] is None

    def test_byte_identical_reruns(self):
        args = ("simulate", "--n", "2", "--reps", "5", "--seed", "11")
        a = run_cli(*args)
        b = run_cli(*args)
        assert a.returncode == b.returncode == 0
        assert a.stdout == b.stdout
        c = run_cli("simulate", "--n", "2", "--reps", "5", "--seed", "12")
        assert c.stdout != a.stdout

    def test_constructions(self, capsys):
        code, lines = run_main(
            capsys,
            "simulate", "--construction", "truncated", "--epsilon", "1e-3",
            "--n", "2", "--reps", "2", "--seed", "3",
        )
        assert code == 0 and json.loads(lines[0])["kind"] == "array"
        code, lines = run_main(
            capsys, "simulate", "--construction", "finitary", "--reps", "2", "--seed", "3"
        )
        assert code == 0
        rec = json.loads(lines[0])
        assert rec["kind"] == "masses" and "fixed" in rec and "diffuse" in rec

    def test_out_file(self, tmp_path, capsys):
        path = tmp_path / "sim.jsonl"
        code, lines = run_main(
            capsys, "simulate", "--reps", "2", "--seed", "4", "--out", str(path)
        )
        assert code == 0 and lines == []
        assert len(path.read_text().splitlines()) == 3

    def test_flag_validation(self, capsys):
        with pytest.raises(SystemExit):
            cli.main(["simulate", "--reps", "-1", "--seed", "1"])
        with pytest.raises(SystemExit):
            cli.main(["simulate", "--n", "0", "--seed", "1"])
        with pytest.raises(SystemExit):
            cli.main(
                ["simulate", "--construction", "truncated", "--epsilon", "0", "--seed", "1"]
            )
        with pytest.raises(SystemExit):  # --seed is mandatory
            cli.main(["simulate", "--reps", "1"])
        capsys.readouterr()


class TestPmf:
    def test_relations(self, tmp_path, capsys):
        records = [
            {"kind": "struct", "n": 2, "counts": []},
            {"kind": "array", "n": 2, "columns": [[1, 0], [0, 1]]},
            {"kind": "struct", "n": 2, "counts": [[[0, 1], 1], [[1, 0], 1]]},
        ]
        path = tmp_path / "in.jsonl"
        path.write_text("".join(json.dumps(r) + "\n" for r in records))
        code, lines = run_main(capsys, "pmf", "--in", str(path))
        assert code == 0
        vals = [json.loads(ln)["log_pmf"] for ln in lines]
        # empty structure: -c T (psi(c + 2r) - psi(c)) at the defaults
        assert vals[0] == pytest.approx(-1.5, rel=1e-12)
        # struct with two distinct columns = array + log(orderings)
        assert vals[2] == pytest.approx(vals[1] + math.log(2.0), abs=1e-12)

    def test_malformed_record_fails(self, tmp_path, capsys):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"kind":"array","n":2,"columns":[[0,0]]}\n')
        code = cli.main(["pmf", "--in", str(path)])
        captured = capsys.readouterr()
        assert code == 1
        assert "record 0" in captured.err

    def test_mixed_good_and_bad(self, tmp_path, capsys):
        path = tmp_path / "mixed.jsonl"
        path.write_text(
            '{"kind":"array","n":1,"columns":[[2]]}\n{"kind":"what"}\n'
        )
        code = cli.main(["pmf", "--in", str(path)])
        captured = capsys.readouterr()
        assert code == 1
        assert len(captured.out.splitlines()) == 1  # good record still evaluated


class TestSample:
    def test_draws_and_summary(self, capsys):
        code, lines = run_main(
            capsys, "sample", "--dist", "digamma", "--r", "1", "--theta", "1",
            "--reps", "6", "--seed", "9",
        )
        assert code == 0
        draws = [int(x) for x in lines[:6]]
        assert all(z >= 1 for z in draws)
        summary = json.loads(lines[6])
        assert summary["dist"] == "digamma"
        assert summary["mean"] == pytest.approx(sum(draws) / 6)

    def test_bnb_and_nb(self, capsys):
        code, lines = run_main(
            capsys, "sample", "--dist", "bnb", "--alpha", "2", "--beta", "3",
            "--reps", "4", "--seed", "2",
        )
        assert code == 0 and all(int(x) >= 0 for x in lines[:4])
        code, lines = run_main(
            capsys, "sample", "--dist", "nb", "--p", "0.3", "--reps", "4", "--seed", "2"
        )
        assert code == 0 and all(int(x) >= 0 for x in lines[:4])

    def test_deterministic(self):
        args = ("sample", "--dist", "bnb", "--reps", "8", "--seed", "33")
        assert run_cli(*args).stdout == run_cli(*args).stdout


class TestInfer:
    def test_synthetic_stream(self, capsys):
        code, lines = run_main(
            capsys,
            "infer", "--synthetic", "--n", "2", "--V", "1",
            "--sweeps", "3", "--seed", "17",
        )
        assert code == 0
        truth = json.loads(lines[0])
        assert truth["kind"] == "truth" and len(truth["y"]) == 2
        records = [json.loads(ln) for ln in lines[1:]]
        assert len(records) == 4  # init plus three sweeps
        assert [r["sweep"] for r in records] == [0, 1, 2, 3]
        for r in records:
            assert set(r) >= {"kappa", "T", "c", "r", "total_count", "log_joint"}

    def test_thinning_and_zero_sweeps(self, capsys):
        code, lines = run_main(
            capsys,
            "infer", "--synthetic", "--n", "2", "--V", "1",
            "--sweeps", "4", "--thin", "2", "--seed", "17",
        )
        assert code == 0
        assert [json.loads(ln)["sweep"] for ln in lines[1:]] == [0, 2, 4]
        code, lines = run_main(
            capsys,
            "infer", "--synthetic", "--n", "2", "--V", "1",
            "--sweeps", "0", "--seed", "17",
        )
        assert code == 0 and len(lines) == 2

    def test_file_mode_with_point_priors(self, tmp_path, capsys):
        path = tmp_path / "y.txt"
        path.write_text("1 0\n2 1\n")
        code, lines = run_main(
            capsys,
            "infer", "--in", str(path), "--sweeps", "5", "--seed", "21",
            "--c-prior", "point", "--r-prior", "point",
        )
        assert code == 0
        for ln in lines:
            rec = json.loads(ln)
            assert rec["c"] == 1.0 and rec["r"] == 1.0

    def test_json_count_input(self, tmp_path, capsys):
        path = tmp_path / "y.json"
        path.write_text('{"y": [[1, 0], [0, 2]]}')
        code, lines = run_main(
            capsys, "infer", "--in", str(path), "--sweeps", "2", "--seed", "21"
        )
        assert code == 0 and len(lines) == 3

    def test_full_records(self, capsys):
        code, lines = run_main(
            capsys,
            "infer", "--synthetic", "--n", "2", "--V", "1",
            "--sweeps", "1", "--seed", "17", "--full",
        )
        assert code == 0
        rec = json.loads(lines[-1])
        assert "W" in rec and "Theta" in rec
        assert len(rec["W"]) == rec["kappa"]

    def test_deterministic(self):
        args = (
            "infer", "--synthetic", "--n", "2", "--V", "1",
            "--sweeps", "4", "--seed", "29",
        )
        assert run_cli(*args).stdout == run_cli(*args).stdout

    def test_source_flags_are_exclusive(self, tmp_path, capsys):
        path = tmp_path / "y.txt"
        path.write_text("1\n")
        with pytest.raises(SystemExit):
            cli.main(["infer", "--seed", "1"])
        with pytest.raises(SystemExit):
            cli.main(["infer", "--in", str(path), "--synthetic", "--seed", "1"])
        capsys.readouterr()

    def test_geweke_report_plumbing(self, capsys, monkeypatch):
        fake = SuiteResult(
            "geweke",
            True,
            1.0,
            {
                name: {"forward": 1.0, "chain": 1.01, "pull": 0.5}
                for name in ("kappa", "total_count", "data_total", "T")
            },
        )
        monkeypatch.setattr(cli, "suite_geweke", lambda seed=None: fake)
        code, lines = run_main(capsys, "infer", "--geweke", "--seed", "1")
        assert code == 0
        assert len(lines) == 4 and all("pass" in ln for ln in lines)
        bad = SuiteResult(
            "geweke",
            False,
            1.0,
            {
                name: {"forward": 1.0, "chain": 2.0, "pull": 9.0}
                for name in ("kappa", "total_count", "data_total", "T")
            },
        )
        monkeypatch.setattr(cli, "suite_geweke", lambda seed=None: bad)
        code, lines = run_main(capsys, "infer", "--geweke", "--seed", "1")
        assert code == 1 and all("FAIL" in ln for ln in lines)


class TestValidate:
    def test_none_reports_pass(self, capsys):
        code, lines = run_main(capsys, "validate", "--suite", "none")
        assert code == 0
        assert json.loads(lines[-1]) == {"kind": "report", "suites": [], "passed": True}

    def test_selected_fast_suites(self, capsys):
        code, lines = run_main(
            capsys,
            "validate", "--suite", "digamma-identity", "--suite", "t-update",
        )
        assert code == 0
        names = [json.loads(ln).get("name") for ln in lines[:-1]]
        assert names == ["digamma-identity", "t-update"]
        assert json.loads(lines[-1])["passed"] is True

    def test_unknown_suite_rejected(self, capsys):
        with pytest.raises(SystemExit):
            cli.main(["validate", "--suite", "no-such-suite"])
        capsys.readouterr()
