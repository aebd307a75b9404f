import itertools
import subprocess
import sys

import numpy as np
import pytest

from circsense import __version__, csvio
from circsense import operators as ops
from circsense.cli import main


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def data_lines(text):
    return [line for line in text.splitlines() if not line.startswith("#")]


def test_version(capsys):
    code, out, _ = run(["--version"], capsys)
    assert code == 0
    assert __version__ in out


def test_rip_end_to_end(capsys):
    code, out, _ = run(["rip", "--n", "12", "--m", "8", "--s", "2", "--generator", "rademacher", "--seed", "7"], capsys)
    assert code == 0
    assert out.startswith("# circsense")
    header, row = data_lines(out)
    fields = dict(zip(header.split(","), row.split(",")))
    assert fields["supports_examined"] == "66"
    # Same draw through the library, checked against singular values of every column pair.
    phi = ops.partial_operator("circulant", ops.GeneratorSpec("rademacher"), 12, 8, "multiset", np.random.default_rng(7))
    a = ops.dense_materialize(phi)
    best = 0.0
    for cols in itertools.combinations(range(12), 2):
        sv = np.linalg.svd(a[:, cols], compute_uv=False)
        best = max(best, sv[0] ** 2 - 1, 1 - sv[-1] ** 2)
    assert float(fields["delta"]) == pytest.approx(best, abs=1e-10)


@pytest.mark.parametrize(
    "argv",
    [
        ["rip", "--s", "0"],
        ["rip", "--n", "12", "--m", "8", "--s", "0", "--seed", "1"],
        ["rip", "--n", "12", "--m", "8", "--s", "13", "--seed", "1"],
        ["rip", "--n", "12", "--m", "8", "--s", "2"],
        ["rip", "--n", "12", "--m", "8", "--s", "2", "--seed", "1", "--bogus", "3"],
        ["gen", "--n", "4", "--seed", "1", "--generator", "cauchy"],
        ["gen", "--n", "4", "--seed", "1", "--generator", "rademacher", "--field", "complex"],
        ["prop31", "--n", "10", "--eps", "0.25", "--trials", "5", "--seed", "1", "--generator", "uniform"],
        ["recover", "--n", "8", "--s", "2", "--m", "4", "--trials", "1", "--seed", "1", "--threads", "-1"],
    ],
)
def test_configuration_errors_exit_2(argv, capsys):
    code, _, err = run(argv, capsys)
    assert code == 2
    assert err


def test_enumeration_cap_exit_1(capsys):
    code, _, err = run(["rip", "--n", "30", "--m", "10", "--s", "10", "--seed", "1", "--cap", "100"], capsys)
    assert code == 1
    assert "mc_rip_lower_bound" in err


def test_rip_mc_mode(capsys):
    code, out, _ = run(["rip", "--n", "40", "--m", "20", "--s", "3", "--seed", "2", "--mode", "mc", "--mc-trials", "50"], capsys)
    assert code == 0
    assert ",lower_bound," in data_lines(out)[1]


def test_prop31_row(capsys):
    code, out, _ = run(["prop31", "--n", "2000", "--eps", "0.25", "--trials", "20000", "--seed", "1"], capsys)
    assert code == 0
    header, row = data_lines(out)
    assert header == "n,epsilon,trials,empirical_prob,theoretical_p0"
    vals = row.split(",")
    assert vals[:3] == ["2000", "0.25", "20000"]
    assert 0.0 <= float(vals[3]) <= 1.0
    assert float(vals[4]) == pytest.approx(0.6170750774519738, abs=1e-12)


def test_header_comment_logs_resolved_config(capsys):
    _, out, _ = run(["cor23", "--n", "16", "--s", "2", "--trials", "5", "--seed", "3"], capsys)
    comment = out.splitlines()[0]
    for token in ("cor23", "n=16", "s=2", "trials=5", "seed=3", "generator=rademacher"):
        assert token in comment
    assert "threads" not in comment


def test_gen_and_matvec_round_trip(tmp_path, capsys):
    xi_path, x_path, dense_path, om_path = (tmp_path / f for f in ("xi.csv", "x.csv", "a.csv", "om.txt"))
    assert main(["gen", "--n", "6", "--seed", "4", "--operator", "toeplitz", "--m", "3", "-o", str(xi_path), "--dense-output", str(dense_path), "--omega-output", str(om_path)]) == 0
    xi = csvio.read_vector(xi_path)
    assert xi.size == 11
    x = np.arange(1.0, 7.0)
    csvio.write_vector(x_path, x)
    capsys.readouterr()
    code, out, _ = run(["matvec", "--operator", "toeplitz", "--xi", str(xi_path), "--x", str(x_path)], capsys)
    assert code == 0
    got = np.array([float(v) for v in data_lines(out)[0].split(",")])
    np.testing.assert_allclose(got, csvio.read_matrix(dense_path) @ x, atol=1e-12)

    omega = ops.SampleSet.parse(om_path.read_text(), 6)
    code, out, _ = run(["matvec", "--operator", "toeplitz", "--xi", str(xi_path), "--x", str(x_path), "--omega", str(om_path)], capsys)
    got = np.array([float(v) for v in data_lines(out)[0].split(",")])
    np.testing.assert_allclose(got, (csvio.read_matrix(dense_path) @ x)[omega.indices] / np.sqrt(3), atol=1e-12)


def test_matvec_adjoint(tmp_path, capsys):
    xi = np.array([1.0, -2.0, 0.5, 3.0])
    csvio.write_vector(tmp_path / "xi.csv", xi)
    csvio.write_vector(tmp_path / "y.csv", [1.0, 0.0])
    code, out, _ = run(["matvec", "--xi", str(tmp_path / "xi.csv"), "--x", str(tmp_path / "y.csv"), "--omega", "2,4", "--adjoint"], capsys)
    assert code == 0
    got = np.array([float(v) for v in data_lines(out)[0].split(",")])
    dense = ops.dense_materialize(ops.CirculantOperator(xi))
    np.testing.assert_allclose(got, dense[1] / np.sqrt(2), atol=1e-12)


def test_config_file_precedence(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# defaults\nn = 16\ns = 2\ntrials = 4\nseed = 5\n")
    _, from_file, _ = run(["cor23", "--config", str(cfg)], capsys)
    assert "n=16" in from_file and "seed=5" in from_file
    _, overridden, _ = run(["cor23", "--config", str(cfg), "--n", "32"], capsys)
    assert "n=32" in overridden
    _, direct, _ = run(["cor23", "--n", "32", "--s", "2", "--trials", "4", "--seed", "5"], capsys)
    assert overridden == direct


def test_config_unknown_key(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("colour = blue\n")
    code, _, err = run(["cor23", "--config", str(cfg), "--n", "4", "--s", "1", "--trials", "1", "--seed", "1"], capsys)
    assert code == 2
    assert "colour" in err


def test_output_file_byte_identical(tmp_path):
    argv = ["phase", "--n", "32", "--s", "2", "--solver", "omp", "--m-grid", "8:20:4", "--trials", "6", "--seed", "9"]
    main(argv + ["-o", str(tmp_path / "a.csv"), "--trials-output", str(tmp_path / "ta.csv")])
    main(argv + ["-o", str(tmp_path / "b.csv"), "--trials-output", str(tmp_path / "tb.csv"), "--threads", "2"])
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "ta.csv").read_bytes() == (tmp_path / "tb.csv").read_bytes()
    header, rows = csvio.read_table(tmp_path / "a.csv")
    assert header == ["m", "success_rate", "trials"]
    assert [r[0] for r in rows] == ["8", "12", "16", "20"]


def test_scaling_small(tmp_path, capsys):
    code = main(["scaling", "--s-list", "2,3", "--n-list", "16,32", "--trials", "5", "--target", "0.6", "--seed", "1", "-o", str(tmp_path / "s.csv"), "--fit-output", str(tmp_path / "f.csv")])
    assert code == 0
    header, rows = csvio.read_table(tmp_path / "s.csv")
    assert header == ["s", "n", "m_star", "feature_new", "feature_old"]
    assert len(rows) == 4
    fit_header, fit_rows = csvio.read_table(tmp_path / "f.csv")
    assert [r[0] for r in fit_rows] == ["new", "old"]


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "circsense", "rip", "--s", "0"], capture_output=True, text=True)
    assert proc.returncode == 2
