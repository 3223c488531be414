import numpy as np
import pytest

from slabmn.cli import EXIT_CONFIG, fit_exponent, main, read_config_file
from slabmn.fv_scheme import build_model
from slabmn.problems import plane_source


def _csv(path):
    return np.loadtxt(path, delimiter=",", skiprows=1)


def test_run_writes_csv_and_sidecar(tmp_path):
    out = tmp_path / "run.csv"
    assert main(["run", "--model", "hfmn", "--n", "8", "--problem", "plane-source", "--cells", "600",
                 "--t-end", "0.05", "-o", str(out)]) == 0
    data = _csv(out)
    assert data.shape == (600, 10)
    assert np.all(data[:, 1] > 0)
    diag = dict(line.split("=", 1) for line in (tmp_path / "run.csv.diag").read_text().splitlines())
    assert diag["model"] == "hfmn" and int(diag["steps"]) > 0


def test_t_end_zero_is_projection(tmp_path):
    out = tmp_path / "zero.csv"
    assert main(["run", "--model", "pmmn", "--n", "4", "--cells", "40", "--t-end", "0", "-o", str(out)]) == 0
    p = plane_source()
    nb = build_model("pmmn", 4).nb
    np.testing.assert_array_equal(_csv(out)[:, 2:], p.initial_moments(nb, p.grid(40)))


def test_thread_count_does_not_change_output(tmp_path):
    paths = []
    for t in (1, 8):
        out = tmp_path / f"t{t}.csv"
        assert main(["run", "--model", "hfmn", "--n", "8", "--cells", "600", "--t-end", "0.02",
                     "--threads", str(t), "-o", str(out)]) == 0
        paths.append(out)
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\nmodel = pn\nn = 3\ncells = 40\nt_end = 0.1\nno_reconstruct = true\n")
    assert read_config_file(cfg)[:4] == ["--model", "pn", "--n", "3"]
    out = tmp_path / "c.csv"
    assert main(["run", "--config", str(cfg), "--cells", "20", "-o", str(out)]) == 0
    assert _csv(out).shape == (20, 5)


def test_configuration_errors(tmp_path, capsys):
    assert main(["run", "--model", "pn", "--n", "2", "--cells", "41", "-o", str(tmp_path / "x")]) == EXIT_CONFIG
    assert "configuration error" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["run", "--model", "nope", "--n", "2"])


def test_convergence_table(tmp_path):
    out = tmp_path / "conv.csv"
    assert main(["convergence", "--models", "pn,mn", "--n-list", "2", "--cells", "30", "--ordinates", "16",
                 "--t-end", "0.3", "--cache-dir", str(tmp_path), "-o", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "model,n,L1,Linf,wall_time" and len(lines) == 3


def test_timing_and_reference(tmp_path, capsys):
    out = tmp_path / "t.csv"
    assert main(["timing", "--model", "pn", "--n-list", "2,4", "--cells", "20", "--t-end", "0.05",
                 "--repeats", "1", "-o", str(out)]) == 0
    assert out.read_text().splitlines()[-1].startswith("# exponent=")
    assert main(["reference", "--cells", "40", "--ordinates", "8", "--t-end", "0.1",
                 "--cache-dir", str(tmp_path)]) == 0
    assert capsys.readouterr().out.strip().endswith(".csv")


def test_fit_exponent():
    assert fit_exponent([1, 2, 4, 8], [3, 12, 48, 192]) == pytest.approx(2.0)
