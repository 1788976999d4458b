import csv
import subprocess
import sys

import numpy as np
import pytest

from wgmaxwell.analysis import StudyReport, StudyRow
from wgmaxwell.cli import (
    CSV_HEADER,
    StudyConfig,
    _table_fmt,
    emit_plotdata,
    estimate_level_dofs,
    main,
    parse_config,
    run_study,
)
from wgmaxwell.exceptions import ConfigurationError
from wgmaxwell.mesh import build_grid, load_mesh
from wgmaxwell.system import build_dof_map

from helpers import FAMILIES


def test_parse_table_blocks():
    c = parse_config(["--family", "triangle", "--k", "1", "--levels", "6..8"])
    assert (c.family, c.k, c.level_list) == ("triangle", 1, [6, 7, 8])
    c = parse_config(["--family", "pentagon", "--k", "2", "--levels", "5..7"])
    assert (c.family, c.k, c.level_list) == ("pentagon", 2, [5, 6, 7])
    assert c.case == "e1" and c.nu == 1.0 and c.r is None


@pytest.mark.parametrize(
    "argv, key",
    [
        (["--k", "0"], "k"),
        (["--nu", "-1"], "nu"),
        (["--levels", "5..3"], "levels"),
        (["--family", "hexagon"], "family"),
        (["--format", "xml"], "format"),
        (["--r", "0", "--k", "3"], "r"),
    ],
)
def test_usage_errors_name_key(argv, key):
    with pytest.raises(ConfigurationError, match=key):
        parse_config(argv)


def test_main_exit_status_on_usage_error(capsys):
    assert main(["--k", "0"]) == 2
    assert "k" in capsys.readouterr().err


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "study.cfg"
    cfg.write_text("# refinement study\nfamily = pentagon\nk = 2   # degree\nlevels = 2..3\n\nnu = 2.5\n")
    c = parse_config(["--config", str(cfg), "--k", "1"])
    assert (c.family, c.k, c.level_list, c.nu) == ("pentagon", 1, [2, 3], 2.5)
    cfg.write_text("family = triangle\ncolour = blue\n")
    with pytest.raises(ConfigurationError, match="colour"):
        parse_config(["--config", str(cfg)])


@pytest.mark.parametrize("family", FAMILIES)
@pytest.mark.parametrize("k", [1, 3])
def test_dof_estimate_is_exact(family, k):
    for level in (1, 2, 3):
        assert estimate_level_dofs(family, level, k) == build_dof_map(build_grid(family, level), k).total


def _study(tmp_path, **kw):
    base = dict(family="triangle", k=1, levels=(2, 4), format="csv", out=str(tmp_path / "out.csv"))
    base.update(kw)
    return StudyConfig(**base)


def test_csv_output_and_determinism(tmp_path):
    cfg = _study(tmp_path)
    rep = run_study(cfg)
    first = (tmp_path / "out.csv").read_bytes()
    run_study(cfg)
    assert (tmp_path / "out.csv").read_bytes() == first
    rows = list(csv.reader(first.decode().splitlines()))
    assert rows[0] == CSV_HEADER
    assert [r[0] for r in rows[1:]] == ["2", "3", "4"]
    assert rows[1][4] == "" and float(rows[2][4]) > 1.5
    # >= 6 significant digits in scientific notation
    mantissa = rows[1][3].split("e")[0].replace(".", "").lstrip("0")
    assert "e" in rows[1][3] and len(mantissa) >= 6
    hs = [float(r[1]) for r in rows[1:]]
    assert np.allclose(np.array(hs[:-1]) / hs[1:], 2.0)
    assert rep.ok


def test_table_output(tmp_path):
    cfg = _study(tmp_path, format="table", out=str(tmp_path / "t.txt"))
    run_study(cfg)
    text = (tmp_path / "t.txt").read_text().splitlines()
    assert "||u-u0||" in text[1] and "|||u-uh|||" in text[1] and "||p-p0||" in text[1]
    assert len(text) == 5
    assert _table_fmt(7.54e-6) == "0.754E-05"


def test_failure_row_and_exit_status(tmp_path):
    cfg = _study(tmp_path, max_dofs=1000)
    rep = run_study(cfg)
    assert not rep.ok and len(rep.rows) == 2
    lines = (tmp_path / "out.csv").read_text().splitlines()
    assert lines[-1].startswith("FAILED") and "mesh" in lines[-1] and "level 4" in lines[-1]
    assert main(["--levels", "2..4", "--max-dofs", "1000", "--format", "csv", "--out", str(tmp_path / "x.csv")]) == 1


def test_main_success(tmp_path):
    out = tmp_path / "ok.csv"
    assert main(["--family", "sgrid", "--levels", "1..2", "--format", "csv", "--out", str(out)]) == 0
    assert out.read_text().startswith("level,h,ndof")


def test_dumps(tmp_path):
    cfg = _study(tmp_path, levels=(2, 2), dump_mesh=str(tmp_path / "m.txt"), dump_matrix=str(tmp_path / "K.txt"))
    run_study(cfg)
    mesh = load_mesh(tmp_path / "m_L2.txt")
    assert mesh.n_elements == 8
    lines = (tmp_path / "K_L2.txt").read_text().splitlines()
    n, _, nnz = (int(v) for v in lines[0][1:].split())
    assert len(lines) == nnz + 1
    i, j, v = lines[1].split()
    assert 0 <= int(i) < n and 0 <= int(j) < n and float(v) == float(v)


def test_plotdata_slopes(tmp_path):
    rows = [StudyRow(1, 0.5, 1, 1e-2, 1e-1, 1e-1), StudyRow(2, 0.25, 1, 2.5e-3, 5e-2, 5e-2)]
    files = emit_plotdata(StudyReport("triangle", 1, 3, "e1", rows), tmp_path / "plots")
    data = np.loadtxt(files[0])
    slope = (data[1, 1] - data[0, 1]) / (data[1, 0] - data[0, 0])
    assert slope == pytest.approx(2.0)
    with pytest.raises(ConfigurationError):
        emit_plotdata(StudyReport("triangle", 1, 3, "e1", []), tmp_path / "none")


def test_console_entry_point(tmp_path):
    res = subprocess.run(
        [sys.executable, "-m", "wgmaxwell.cli", "--levels", "1..2", "--format", "csv"],
        capture_output=True,
        text=True,
    )
    assert res.returncode == 0
    assert res.stdout.splitlines()[0] == ",".join(CSV_HEADER)
