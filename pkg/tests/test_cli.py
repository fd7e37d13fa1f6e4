import subprocess
import sys

import numpy as np
import pytest

from liftbmf.boolmat import BoolMatrix, read_matrix
from liftbmf.cli import main
from liftbmf.factorize import read_factorization
from liftbmf.mln import parse_evidence, parse_model

BASE_MODEL = """\
domain = a, b, c, d
pred linkto/2
pred studentpage/1
1.5 studentpage(X) ^ linkto(X,Y) => studentpage(Y)
"""


@pytest.fixture
def example_file(tmp_path, example_matrix):
    path = tmp_path / "ex.txt"
    path.write_text(example_matrix.to_text())
    return str(path)


def run(*argv):
    return main(list(argv))


class TestRank:
    def test_prints_rank_three(self, example_file, capsys):
        assert run("rank", example_file) == 0
        assert capsys.readouterr().out.strip() == "3"

    def test_zero_matrix(self, tmp_path, capsys):
        path = tmp_path / "z.txt"
        path.write_text(BoolMatrix(np.zeros((3, 3), dtype=np.uint8)).to_text())
        assert run("rank", str(path)) == 0
        assert capsys.readouterr().out.strip() == "0"

    def test_size_cap_refusal(self, tmp_path, capsys):
        path = tmp_path / "big.txt"
        rng = np.random.default_rng(0)
        path.write_text(BoolMatrix((rng.random((30, 30)) < 0.5).astype(np.uint8)).to_text())
        assert run("rank", str(path)) == 2
        assert "cap" in capsys.readouterr().err

    def test_witness_file(self, example_file, tmp_path, capsys):
        out = tmp_path / "w.fct"
        assert run("rank", example_file, "--witness", str(out)) == 0
        witness = read_factorization(out)
        assert witness.rank() == 3 and witness.error == 0

    def test_missing_file_is_input_error(self, capsys):
        assert run("rank", "/nonexistent/m.txt") == 1


class TestFactorize:
    def test_prints_rank_and_flip_counts(self, example_file, tmp_path, capsys):
        out = tmp_path / "f.fct"
        assert run("factorize", example_file, "-o", str(out), "--rank", "2") == 0
        rank, err, one_zero, zero_one = capsys.readouterr().out.split()
        assert (rank, err, one_zero, zero_one) == ("2", "1", "1", "0")
        assert read_factorization(out).rank() == 2

    def test_exact_mode(self, example_file, tmp_path, capsys):
        out = tmp_path / "f.fct"
        assert run("factorize", example_file, "-o", str(out), "--exact") == 0
        assert capsys.readouterr().out.split()[:2] == ["3", "0"]

    def test_env_default_tau(self, example_file, tmp_path, monkeypatch, capsys):
        out = tmp_path / "f.fct"
        monkeypatch.setenv("LIFTBMF_TAU", "0.4")
        assert run("factorize", example_file, "-o", str(out)) == 0
        monkeypatch.setenv("LIFTBMF_TAU", "not-a-number")
        assert run("factorize", example_file, "-o", str(out)) == 1

    def test_flag_beats_env(self, example_file, tmp_path, monkeypatch, capsys):
        out = tmp_path / "f.fct"
        monkeypatch.setenv("LIFTBMF_TAU", "1.5")  # invalid, but flag wins
        assert run("factorize", example_file, "-o", str(out), "--tau", "0.7") == 0


class TestReduce:
    def test_emits_model_fragment_and_evidence(self, example_file, tmp_path, capsys):
        fct = tmp_path / "f.fct"
        run("factorize", example_file, "-o", str(fct), "--exact")
        capsys.readouterr()
        assert run("reduce", str(fct), "--predicate", "linkto", "-o", str(tmp_path / "red")) == 0
        fragment = (tmp_path / "red.model").read_text()
        evidence = (tmp_path / "red.evidence").read_text()
        assert "hard linkto(X, Y) <=>" in fragment
        assert fragment.count("pred ") == 6
        assert len(evidence.strip().splitlines()) == 24
        # fragment concatenates onto a base model and parses
        model = parse_model(BASE_MODEL + fragment)
        parse_evidence(evidence, model)

    def test_factorization_without_labels_fails(self, tmp_path, capsys):
        fct = tmp_path / "f.fct"
        fct.write_text("1 2 2 0\n11\n11\n")
        assert run("reduce", str(fct), "--predicate", "p", "-o", str(tmp_path / "r")) == 1


class TestInfer:
    def test_exact_single_atom_uniform(self, tmp_path, capsys):
        model = tmp_path / "m.mln"
        model.write_text("domain = a\npred q/1\n")
        ev = tmp_path / "e.ev"
        ev.write_text("")
        assert run("infer", str(model), str(ev), "--query", "q(a)") == 0
        atom, prob = capsys.readouterr().out.split()
        assert atom == "q(a)" and prob == "0.5"

    def test_inconsistent_exits_three(self, tmp_path, capsys):
        model = tmp_path / "m.mln"
        model.write_text("domain = a\npred q/1\nhard q(a)\n")
        ev = tmp_path / "e.ev"
        ev.write_text("!q(a)\n")
        assert run("infer", str(model), str(ev), "--query", "q(a)") == 3

    def test_gibbs_and_orbital_methods(self, tmp_path, capsys):
        model = tmp_path / "m.mln"
        model.write_text("domain = a, b\npred q/1\npred s/1\n0.7 s(X) ^ q(X)\n")
        ev = tmp_path / "e.ev"
        ev.write_text("q(a)\nq(b)\n")
        for method in ("gibbs", "orbital-gibbs"):
            assert run(
                "infer", str(model), str(ev), "--query", "s(a)",
                "--method", method, "--iters", "4000", "--seed", "5",
            ) == 0
            out = capsys.readouterr().out
            assert out.startswith("s(a) ")
            assert 0.0 <= float(out.split()[1]) <= 1.0

    def test_frequency_estimator(self, tmp_path, capsys):
        model = tmp_path / "m.mln"
        model.write_text("domain = a\npred q/1\nhard q(a)\n")
        ev = tmp_path / "e.ev"
        ev.write_text("")
        assert run("infer", str(model), str(ev), "--query", "q(a)",
                   "--method", "gibbs", "--iters", "500",
                   "--estimator", "frequency") == 0
        assert capsys.readouterr().out.strip() == "q(a) 1"

    def test_seed_env_variable(self, tmp_path, monkeypatch, capsys):
        model = tmp_path / "m.mln"
        model.write_text("domain = a, b\npred q/1\n0.4 q(X)\n")
        ev = tmp_path / "e.ev"
        ev.write_text("")
        outputs = []
        for seed_env in ("3", "3", "4"):
            monkeypatch.setenv("LIFTBMF_SEED", seed_env)
            assert run("infer", str(model), str(ev), "--query", "q(a)",
                       "--method", "gibbs", "--iters", "300") == 0
            outputs.append(capsys.readouterr().out)
        assert outputs[0] == outputs[1]  # same env seed, same estimate
        monkeypatch.setenv("LIFTBMF_SEED", "4")
        assert run("infer", str(model), str(ev), "--query", "q(a)",
                   "--method", "gibbs", "--iters", "300", "--seed", "3") == 0
        assert capsys.readouterr().out == outputs[0]  # flag beats env

    def test_negative_query_literal(self, tmp_path, capsys):
        model = tmp_path / "m.mln"
        model.write_text("domain = a\npred q/1\nhard q(a)\n")
        ev = tmp_path / "e.ev"
        ev.write_text("")
        assert run("infer", str(model), str(ev), "--query", "!q(a)") == 0
        assert capsys.readouterr().out.strip() == "!q(a) 0"


class TestFullPipeline:
    def test_reduced_inference_matches_original(self, tmp_path, capsys):
        # gen -> factorize --exact -> reduce -> infer on both encodings
        matrix_path = tmp_path / "m.txt"
        assert run("gen", "-m", "3", "--rank", "2", "--noise", "0.0",
                   "--seed", "4", "-o", str(matrix_path)) == 0
        matrix = read_matrix(matrix_path)
        base_text = (
            "domain = c0, c1, c2\npred p/2\npred s/1\n"
            "1.1 s(X) ^ p(X,Y) => s(Y)\n-0.4 s(X)\n"
        )
        base_path = tmp_path / "base.mln"
        base_path.write_text(base_text)

        from liftbmf.reduction import matrix_to_evidence

        binary_ev_path = tmp_path / "binary.ev"
        binary_ev_path.write_text(matrix_to_evidence("p", matrix).to_text())

        fct = tmp_path / "m.fct"
        run("factorize", str(matrix_path), "-o", str(fct), "--exact")
        run("reduce", str(fct), "--predicate", "p", "-o", str(tmp_path / "red"))
        full_path = tmp_path / "full.mln"
        full_path.write_text(base_text + (tmp_path / "red.model").read_text())
        capsys.readouterr()

        assert run("infer", str(base_path), str(binary_ev_path), "--query", "s(c0)") == 0
        lhs = float(capsys.readouterr().out.split()[1])
        assert run("infer", str(full_path), str(tmp_path / "red.evidence"),
                   "--query", "s(c0)") == 0
        rhs = float(capsys.readouterr().out.split()[1])
        assert abs(lhs - rhs) <= 1e-9


class TestGen:
    def test_deterministic_bytes(self, tmp_path):
        a, b = tmp_path / "a.txt", tmp_path / "b.txt"
        for path in (a, b):
            assert run("gen", "-m", "20", "--rank", "3", "--noise", "0.01",
                       "--seed", "1", "-o", str(path)) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_noise_guard_exits_one(self, tmp_path, capsys):
        assert run("gen", "-m", "5", "--rank", "2", "--noise", "0.5",
                   "-o", str(tmp_path / "x.txt")) == 1
        assert "noise" in capsys.readouterr().err

    def test_header_records_recipe(self, tmp_path):
        path = tmp_path / "g.txt"
        run("gen", "-m", "6", "--rank", "2", "--noise", "0.1", "--seed", "9",
            "-o", str(path))
        head = path.read_text().splitlines()[0]
        assert head.startswith("# gen ") and "seed=9" in head


class TestExperimentCommands:
    def test_error_curve_on_example(self, example_file, tmp_path, capsys):
        out = tmp_path / "err.csv"
        assert run("experiment", "error-curve", "--matrix", example_file,
                   "--ranks", "1,2,3", "-o", str(out)) == 0
        lines = out.read_text().splitlines()
        assert lines[0].startswith("# liftbmf experiment error-curve")
        assert lines[1] == "rank,error"
        errors = {int(r.split(",")[0]): float(r.split(",")[1]) for r in lines[2:]}
        assert errors[1] >= 1 and errors[2] == 1 and errors[3] == 0

    def test_error_curve_planted(self, tmp_path):
        out = tmp_path / "err.csv"
        assert run("experiment", "error-curve", "--planted", "20,3,0.01",
                   "--seeds", "0,1,2", "--ranks", "1,2,3,4", "-o", str(out)) == 0
        rows = out.read_text().splitlines()[2:]
        assert len(rows) == 4

    def test_error_curve_needs_exactly_one_source(self, example_file, tmp_path):
        assert run("experiment", "error-curve", "--ranks", "1",
                   "-o", str(tmp_path / "x.csv")) == 1
        assert run("experiment", "error-curve", "--matrix", example_file,
                   "--planted", "5,2,0.0", "--ranks", "1",
                   "-o", str(tmp_path / "x.csv")) == 1

    def test_ranks_must_increase(self, example_file, tmp_path):
        assert run("experiment", "error-curve", "--matrix", example_file,
                   "--ranks", "2,1", "-o", str(tmp_path / "x.csv")) == 1

    def test_equivalence_check_csv(self, tmp_path):
        out = tmp_path / "eq.csv"
        assert run("experiment", "equivalence-check", "--instances", "5",
                   "--seed", "3", "-o", str(out)) == 0
        lines = out.read_text().splitlines()
        assert lines[1] == "instance,max_abs_diff,pass"
        assert all(line.endswith(",true") for line in lines[2:])

    def test_kld_curve_csv(self, tmp_path):
        model = tmp_path / "m.mln"
        model.write_text(
            "domain = c0, c1, c2, c3\npred p/2\npred s/1\n"
            "1.0 s(X) ^ p(X,Y) => s(Y)\n"
        )
        matrix = tmp_path / "p.txt"
        run("gen", "-m", "4", "--rank", "2", "--noise", "0.0", "--seed", "2",
            "-o", str(matrix))
        out = tmp_path / "kld.csv"
        assert run("experiment", "kld-curve", "--model", str(model),
                   "--matrix", str(matrix), "--predicate", "p",
                   "--query-pred", "s", "--ranks", "1,2", "--seeds", "1,2",
                   "--iters", "400", "--snapshot-every", "200",
                   "-o", str(out)) == 0
        lines = out.read_text().splitlines()
        assert lines[1] == "iteration,method,rank,kld"
        assert any(",exact," in line for line in lines[2:])


class TestDeterminism:
    def test_kld_curve_csv_byte_identical(self, tmp_path):
        model = tmp_path / "m.mln"
        model.write_text(
            "domain = c0, c1, c2, c3\npred p/2\npred s/1\n"
            "0.9 s(X) ^ p(X,Y) => s(Y)\n"
        )
        matrix = tmp_path / "p.txt"
        run("gen", "-m", "4", "--rank", "2", "--noise", "0.0", "--seed", "6",
            "-o", str(matrix))
        args = ["experiment", "kld-curve", "--model", str(model),
                "--matrix", str(matrix), "--predicate", "p",
                "--query-pred", "s", "--ranks", "1,2", "--seeds", "3,4",
                "--iters", "300", "--snapshot-every", "150"]
        out1, out2 = tmp_path / "k1.csv", tmp_path / "k2.csv"
        assert run(*args, "-o", str(out1)) == 0
        assert run(*args, "-o", str(out2)) == 0
        # identical up to the recorded output path in the header
        assert out1.read_text().splitlines()[1:] == out2.read_text().splitlines()[1:]

    def test_equivalence_check_csv_byte_identical(self, tmp_path):
        outs = []
        for name in ("e1.csv", "e2.csv"):
            path = tmp_path / name
            assert run("experiment", "equivalence-check", "--instances", "10",
                       "--seed", "8", "-o", str(path)) == 0
            outs.append(path.read_text().splitlines()[1:])
        assert outs[0] == outs[1]


class TestArgumentHandling:
    def test_unknown_subcommand_exits_one(self, capsys):
        assert run("frobnicate") == 1

    def test_missing_required_flag_exits_one(self, capsys):
        assert run("factorize", "x.txt") == 1

    def test_console_script_entry_point(self, example_file):
        proc = subprocess.run(
            [sys.executable, "-m", "liftbmf.cli", "rank", example_file],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0
        assert proc.stdout.strip() == "3"
