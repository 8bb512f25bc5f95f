import numpy as np
import pytest

from wavelod import cli, experiments
from wavelod.experiments import (bilinear_prolongation, default_ell,
                                 eval_fraction, n_steps_for, parse_config,
                                 read_csv, write_csv)
from wavelod.mesh import build_hierarchy

MINI_CONV = """
[study]
kind = convergence
[mesh]
h_exp = 5
eps_exp = 3
H_exps = 1 2
[coefficient]
kind = checkerboard
seed = 1234
lo = 1.0
hi = 10.0
[discretization]
p_list = 0 1
ell_rule = fixed
ell_list = 3 7
[time]
theta = 1/4
tau = 2^-6
t_end = 1.0
[problem]
name = driven_sine
[output]
prefix = mini
"""


@pytest.fixture
def mini_cfg(tmp_path):
    path = tmp_path / "conv.cfg"
    path.write_text(MINI_CONV)
    return path


def test_parse_config(mini_cfg):
    cfg = parse_config(mini_cfg)
    assert cfg.kind == "convergence"
    assert cfg.H_exps == (1, 2)
    assert cfg.theta == pytest.approx(0.25)
    assert cfg.tau == pytest.approx(2.0 ** -6)
    assert cfg.ell_list == (3, 7)


def test_parse_config_rejects_unknowns(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("[mesh]\nh_exp = 5\ntypo_key = 3\n")
    with pytest.raises(ValueError, match="typo_key"):
        parse_config(bad)
    bad.write_text("[wrong_section]\nx = 1\n")
    with pytest.raises(ValueError, match="wrong_section"):
        parse_config(bad)
    bad.write_text("[study]\nkind = bogus\n")
    with pytest.raises(ValueError, match="bogus"):
        parse_config(bad)


def test_eval_fraction():
    assert eval_fraction("1/12") == pytest.approx(1 / 12)
    assert eval_fraction("2^-9") == pytest.approx(2.0 ** -9)
    assert eval_fraction("0.25") == 0.25


def test_default_ell_rule():
    assert default_ell(0, 1) == 1
    assert default_ell(1, 3) == 3
    assert default_ell(2, 5) == 7


def test_n_steps_for():
    assert n_steps_for(2.0 ** -6, 1.0) == 64
    with pytest.raises(ValueError):
        n_steps_for(0.3, 1.0)


def test_csv_roundtrip(tmp_path):
    path = tmp_path / "t.csv"
    rows = [{"a": 1, "b": 0.5}, {"a": 2, "b": float(np.pi)}]
    write_csv(path, ["a", "b"], rows)
    text = path.read_text()
    assert text.startswith(experiments.CSV_VERSION_LINE + "\n")
    back = read_csv(path)
    assert back[0]["a"] == "1"
    assert float(back[1]["b"]) == float(np.pi)


def test_read_csv_rejects_bad_version(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_csv(path)
    path.write_text("# wavelod-csv v99\na,b\n")
    with pytest.raises(ValueError):
        read_csv(path)


def _strip_timing(path):
    lines = path.read_text().splitlines()
    return [",".join(line.split(",")[:-2]) for line in lines]


def test_convergence_study_deterministic_and_cached(tmp_path, mini_cfg):
    cfg = parse_config(mini_cfg)
    out1 = tmp_path / "run1"
    out2 = tmp_path / "run2"
    out1.mkdir(), out2.mkdir()
    cache = tmp_path / "cache"
    rows1, csv1 = experiments.run_convergence_study(cfg, out1, cache_dir=cache)
    rows2, csv2 = experiments.run_convergence_study(cfg, out2, cache_dir=cache)
    # warm-cache run byte-identical apart from timing columns
    assert _strip_timing(csv1) == _strip_timing(csv2)
    assert len(rows1) == 4
    assert {r["p"] for r in rows1} == {0, 1}
    # cache files were produced and reused
    assert list(cache.glob("basis_*.npz"))
    for ra, rb in zip(rows1, rows2):
        assert ra["a_err_rel"] == rb["a_err_rel"]
    # errors decrease from H=1/2 to H=1/4 with saturated localization
    by_p = {p: [r for r in rows1 if r["p"] == p] for p in (0, 1)}
    for p in (0, 1):
        assert by_p[p][1]["a_err_rel"] < by_p[p][0]["a_err_rel"]


def test_threaded_study_matches_serial(tmp_path, mini_cfg):
    cfg = parse_config(mini_cfg)
    out1, out2 = tmp_path / "s", tmp_path / "t"
    out1.mkdir(), out2.mkdir()
    rows1, csv1 = experiments.run_convergence_study(cfg, out1, threads=1)
    rows2, csv2 = experiments.run_convergence_study(cfg, out2, threads=2)
    assert _strip_timing(csv1) == _strip_timing(csv2)


def test_bilinear_prolongation_exact_on_q1():
    mesh = build_hierarchy(2, 2, 4)
    P = bilinear_prolongation(mesh)
    nc = mesh.coarse_cells_per_dim
    t = np.linspace(0.0, 1.0, nc + 1)
    CX, CY = np.meshgrid(t, t)
    fpos = mesh.fine_vertex_positions()
    for f in (lambda x, y: x, lambda x, y: y, lambda x, y: x * y,
              lambda x, y: 1.0 + 0 * x):
        coarse_vals = f(CX, CY).ravel()
        fine_vals = P @ coarse_vals
        np.testing.assert_allclose(fine_vals, f(fpos[:, 0], fpos[:, 1]),
                                   atol=1e-13)
    # rows are partitions of unity
    np.testing.assert_allclose(np.asarray(P.sum(axis=1)).ravel(), 1.0, atol=1e-13)


def test_temporal_study_rows(tmp_path):
    cfgfile = tmp_path / "temporal.cfg"
    cfgfile.write_text("""
[study]
kind = temporal
[mesh]
h_exp = 4
eps_exp = 2
H_exps = 2
[coefficient]
kind = constant
value = 1.0
[discretization]
p_list = 1
[time]
thetas = 1/4
n_tau_refinements = 2
[problem]
name = driven_sine
[output]
prefix = tmp
""")
    cfg = parse_config(cfgfile)
    rows, out = experiments.run_temporal_study(cfg, tmp_path)
    assert len(rows) == 2
    assert rows[1]["eoc"] != ""
    assert 1.5 < rows[1]["eoc"] < 2.5


def test_energy_audit(tmp_path, mini_cfg):
    cfg = parse_config(mini_cfg)
    rows, out = experiments.run_energy_audit(cfg, tmp_path)
    defects = [r["identity_defect_rel"] for r in rows if r["identity_defect_rel"] != ""]
    assert max(defects) < 1e-9
    assert read_csv(out)


def test_cli_end_to_end(tmp_path, mini_cfg):
    out = tmp_path / "out"
    rc = cli.main(["convergence", "--config", str(mini_cfg), "--out", str(out),
                   "--cache", str(tmp_path / "cache")])
    assert rc == 0
    assert (out / "mini_convergence.csv").exists()
    manifest = (out / "mini_manifest.txt").read_text()
    assert "package_version=" in manifest
    assert "wall_seconds=" in manifest
    assert "[config-echo]" in manifest


def test_cli_error_exit(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("[mesh]\nnope = 1\n")
    assert cli.main(["solve", "--config", str(bad), "--out", str(tmp_path)]) == 2


def test_cli_seed_override(tmp_path, mini_cfg):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert cli.main(["energy-audit", "--config", str(mini_cfg),
                     "--out", str(out1), "--seed", "999"]) == 0
    assert cli.main(["energy-audit", "--config", str(mini_cfg),
                     "--out", str(out2)]) == 0
    e1 = read_csv(out1 / "mini_energy.csv")
    e2 = read_csv(out2 / "mini_energy.csv")
    assert e1[5]["energy"] != e2[5]["energy"]
