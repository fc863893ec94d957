import numpy as np

from homstokes.cache import read_solution
from homstokes.cli import main


def _cfg(tmp_path, body):
    p = tmp_path / "study.toml"
    p.write_text(body)
    return str(p)


LAMINATE = '[coefficient]\nfamily = "laminate"\nparams = [2, 1]\n[cell]\nN = 32\n'


def test_unknown_command(capsys):
    assert main(["frobnicate"]) == 1
    assert "usage" in capsys.readouterr().err
    assert main([]) == 1


def test_missing_config_flag():
    assert main(["cell"]) == 1


def test_invalid_config(tmp_path, capsys):
    assert main(["cell", "--config", _cfg(tmp_path, LAMINATE.replace("32", "100"))]) == 1
    assert "cell.N" in capsys.readouterr().err


def test_cell_uses_cache(tmp_path, capsys):
    cfg = _cfg(tmp_path, LAMINATE)
    assert main(["cell", "--config", cfg, "--cache", str(tmp_path / "c"), "--out", str(tmp_path)]) == 0
    assert len(list((tmp_path / "c").glob("*.hscache"))) == 1
    first = capsys.readouterr().out
    assert main(["cell", "--config", cfg, "--cache", str(tmp_path / "c"), "--out", str(tmp_path)]) == 0
    assert capsys.readouterr().out == first


def test_no_cache(tmp_path, monkeypatch):
    monkeypatch.setenv("HS_CACHE_DIR", str(tmp_path / "env"))
    assert main(["cell", "--config", _cfg(tmp_path, LAMINATE), "--no-cache", "--out", str(tmp_path)]) == 0
    assert not (tmp_path / "env").exists()


def test_solve_incompatible(tmp_path, capsys):
    body = LAMINATE + "[solve]\nepsilon = 0.25\nM = 32\ndivergence = 1.0\n"
    assert main(["solve", "--config", _cfg(tmp_path, body), "--out", str(tmp_path)]) == 1
    assert "compatibility residual" in capsys.readouterr().out


def test_solve_dump(tmp_path):
    body = LAMINATE + "[solve]\nepsilon = 0.25\nM = 32\n"
    assert main(["solve", "--config", _cfg(tmp_path, body), "--out", str(tmp_path)]) == 0
    M, eps, blocks = read_solution(tmp_path / "solution_fine_M32.hssol")
    assert (M, eps) == (32, 0.25) and set(blocks) == {"u1", "u2", "p"}


def test_rates_constant(tmp_path):
    body = '[coefficient]\nfamily = "constant"\n[cell]\nN = 32\n[study]\nepsilons = [0.25, 0.125]\n' \
           '[rates]\ngate = true\n'
    assert main(["rates", "--config", _cfg(tmp_path, body), "--out", str(tmp_path), "--no-cache"]) == 0
    lines = (tmp_path / "rates.csv").read_text().splitlines()
    assert lines[0] == "epsilon,l2_u,h1_twoscale,l2_pressure,l2_w,h1_w,bl_const"
    for line in lines[1:3]:
        vals = np.array([float(v) for v in line.split(",")])
        assert np.all(vals[1:6] <= 1e-6)
    assert lines[3].startswith("# slope_l2_u = ")


def test_bad_jobs(tmp_path):
    assert main(["cell", "--config", _cfg(tmp_path, LAMINATE), "--jobs", "0"]) == 1
