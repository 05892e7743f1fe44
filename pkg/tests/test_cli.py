import csv
import shutil
import subprocess

import pytest

from tracewam.cli import main

APP = """
app([], L, L).
app([H|T], L, [H|R]) :- app(T, L, R).
"""


@pytest.fixture
def app_file(tmp_path):
    p = tmp_path / "app.pl"
    p.write_text(APP)
    return str(p)


def test_run_prints_answers(app_file, capsys):
    assert main(["run", app_file, "-g", "app(X, [c], [a,b,c])"]) == 0
    assert capsys.readouterr().out.strip() == "X = [a,b]."


def test_run_prints_false(app_file, capsys):
    assert main(["run", app_file, "-g", "app([a], [b], [])"]) == 0
    assert capsys.readouterr().out.strip() == "false."


def test_run_expect_matches(app_file):
    assert main(["run", app_file, "-g", "app(X, Y, [1])",
                 "--expect", "X = [], Y = [1]", "--expect", "X = [1], Y = []"]) == 0


def test_wrong_answer_exit_code(app_file, capsys):
    assert main(["run", app_file, "-g", "app(X, [c], [a,b,c])", "--expect", "X = [a]"]) == 2
    assert "wrong answer" in capsys.readouterr().err


def test_syntax_error_exit_code(tmp_path):
    bad = tmp_path / "bad.pl"
    bad.write_text("p(a :- .")
    assert main(["run", str(bad), "-g", "p(X)"]) == 3


def test_link_error_exit_code(tmp_path):
    bad = tmp_path / "bad.pl"
    bad.write_text("p :- nowhere.")
    assert main(["run", str(bad), "-g", "p"]) == 3


def test_resource_exhaustion_exit_code(tmp_path):
    src = tmp_path / "grow.pl"
    src.write_text("grow(0, []).\ngrow(N, [N|T]) :- N > 0, M is N - 1, grow(M, T).\n")
    assert main(["run", str(src), "-g", "grow(5000, L)", "--no-jit",
                 "--heap-cells", "64", "--max-heap-cells", "256"]) == 4


def test_missing_file_and_bad_thresholds(tmp_path):
    assert main(["run", str(tmp_path / "nope.pl"), "-g", "p"]) == 1
    assert main(["bench", "nreverse", "--critical", "10", "--hot", "5"]) == 1
    assert main(["bench", "no_such_benchmark"]) == 1


def test_bench_no_jit_writes_default_rows_only(tmp_path, capsys):
    out = tmp_path / "s.csv"
    assert main(["bench", "nreverse", "hanoi", "--no-jit", "--reps", "1",
                 "--stats-out", str(out)]) == 0
    rows = list(csv.reader(open(out)))
    assert len(rows) == 3
    assert {r[1] for r in rows[1:]} == {"DEFAULT_ONLY"}
    assert "nreverse" in capsys.readouterr().out


def test_bench_with_custom_thresholds_runs_all_modes(tmp_path):
    out = tmp_path / "s.csv"
    assert main(["bench", "nreverse", "--critical", "3", "--hot", "6", "--reps", "1",
                 "--stats-out", str(out)]) == 0
    rows = list(csv.reader(open(out)))
    assert [r[1] for r in rows[1:]] == ["DEFAULT_ONLY", "SPEC_NO_MUTABILITY",
                                       "SPEC_WITH_MUTABILITY"]


def test_disasm_goes_to_stderr(app_file, capsys):
    assert main(["run", app_file, "-g", "app(X, Y, [1,2,3,4,5,6,7,8])",
                 "--critical", "2", "--hot", "3", "--disasm"]) == 0
    assert "generation 1" in capsys.readouterr().err


@pytest.mark.skipif(shutil.which("tracewam") is None, reason="console script not installed")
def test_console_script(app_file):
    r = subprocess.run(["tracewam", "run", app_file, "-g", "app([1], [2], L)"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.strip() == "L = [1,2]."
