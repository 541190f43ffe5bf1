import json
import os

import numpy as np
import pytest

from hpadyn.cli import main
from hpadyn.config import default_config, parse_config
from hpadyn.errors import ConfigError

FAST_CFG = """
[run]
transient = 60
detect_window = 20

[simulate]
t_end = 5

[jacobian]
n_samples = 16
n_re = 31
n_im = 31

[floquet]
n_basis = 10
n_re = 21
n_im = 21

[koopman]
n_init = 80
dict_size = 40
n_re = 21
n_im = 21

[sweep]
h_values = 7.66
n_samples = 16
n_init = 60
"""


@pytest.fixture()
def fast_config(tmp_path):
    path = tmp_path / "cfg.ini"
    path.write_text(FAST_CFG)
    return str(path)


def run_cli(*argv) -> int:
    return main(list(argv))


class TestConfig:
    def test_defaults_valid(self):
        cfg = default_config()
        assert cfg.params.h == 7.66
        assert cfg.seed == 0

    def test_roundtrip_hash(self, tmp_path, fast_config):
        cfg = parse_config(fast_config)
        path = tmp_path / "echo.ini"
        path.write_text(cfg.serialize())
        again = parse_config(str(path))
        assert again.config_hash == cfg.config_hash
        assert again.values == cfg.values

    def test_unknown_section(self, tmp_path):
        p = tmp_path / "bad.ini"
        p.write_text("[nonsense]\nx = 1\n")
        with pytest.raises(ConfigError):
            parse_config(str(p))

    def test_unknown_key(self, tmp_path):
        p = tmp_path / "bad.ini"
        p.write_text("[run]\nwhat = 1\n")
        with pytest.raises(ConfigError):
            parse_config(str(p))

    def test_bad_value_type(self, tmp_path):
        p = tmp_path / "bad.ini"
        p.write_text("[run]\nseed = banana\n")
        with pytest.raises(ConfigError):
            parse_config(str(p))

    def test_nondimensional_model(self, tmp_path):
        p = tmp_path / "nd.ini"
        p.write_text("[model]\nkind = nondimensional\nc1 = 4\nc2 = 4.76\n"
                     "c3 = 16.37\nt1 = 0.15\nt2 = 0.15\nh = 7.66\n")
        cfg = parse_config(str(p))
        assert cfg.params.c1 == 4.0

    def test_nondimensional_requires_all_keys(self, tmp_path):
        p = tmp_path / "nd.ini"
        p.write_text("[model]\nkind = nondimensional\nc1 = 4\nh = 7.66\n")
        with pytest.raises(ConfigError):
            parse_config(str(p))

    def test_h_override(self, tmp_path):
        p = tmp_path / "o.ini"
        p.write_text("[run]\nh_override = 12.5\n")
        assert parse_config(str(p)).params.h == 12.5


class TestExitCodes:
    def test_unknown_key_exits_2(self, tmp_path, capsys):
        p = tmp_path / "bad.ini"
        p.write_text("[run]\nbogus = 1\n")
        assert run_cli("--config", str(p), "fixed-point") == 2

    def test_nonconvergence_exits_4(self, tmp_path):
        p = tmp_path / "low.ini"
        p.write_text("[run]\nh_override = 0.5\ntransient = 40\ndetect_window = 20\n")
        code = run_cli("--config", str(p), "--output-dir", str(tmp_path / "o"),
                       "--no-figures", "limit-cycle")
        assert code == 4

    def test_missing_render_input_exits_2(self, tmp_path):
        code = run_cli("--output-dir", str(tmp_path), "render",
                       "--input", str(tmp_path / "nope.csv"))
        assert code == 2


class TestSubcommands:
    def test_fixed_point_outputs(self, tmp_path, fast_config, capsys):
        out = tmp_path / "o"
        assert run_cli("--config", fast_config, "--output-dir", str(out),
                       "fixed-point") == 0
        payload = json.loads((out / "fixed_point.json").read_text())
        assert payload["x"] == pytest.approx(0.60526367, abs=1e-6)
        assert payload["residual_inf"] <= 1e-12
        meta = json.loads((out / "fixed_point.json.meta.json").read_text())
        assert set(meta) == {"config_hash", "seed", "command", "timestamp",
                             "tool_version"}
        assert meta["command"] == "fixed-point"
        assert "fixed point" in capsys.readouterr().out

    def test_simulate_idempotent(self, tmp_path, fast_config):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        for out in (out1, out2):
            assert run_cli("--config", fast_config, "--output-dir", str(out),
                           "--no-figures", "simulate") == 0
        assert (out1 / "trajectory.csv").read_bytes() == \
               (out2 / "trajectory.csv").read_bytes()
        header = (out1 / "trajectory.csv").read_text().splitlines()[0]
        assert header == "tau,x,y,dx,dy"

    def test_jacobian_sweep_and_grid(self, tmp_path, fast_config):
        out = tmp_path / "o"
        assert run_cli("--config", fast_config, "--output-dir", str(out),
                       "--no-figures", "jacobian-sweep") == 0
        lines = (out / "jacobian_sweep.csv").read_text().splitlines()
        assert lines[0] == "tau,alpha,d,index"
        assert len(lines) == 17
        unstable = [ln for ln in lines[1:] if ln.endswith(",,")]
        assert unstable, "expected empty d/index fields where alpha >= 0"
        assert run_cli("--config", fast_config, "--output-dir", str(out),
                       "--no-figures", "jacobian-grid", "--tau", "0.8") == 0
        header = (out / "jacobian_grid.csv").read_text().splitlines()[0]
        assert header == "re,im,sigma_min"

    def test_floquet_outputs(self, tmp_path, fast_config):
        out = tmp_path / "o"
        assert run_cli("--config", fast_config, "--output-dir", str(out),
                       "--no-figures", "floquet", "--dump-matrix") == 0
        header = (out / "floquet_grid.csv").read_text().splitlines()[0]
        assert header == "re,im,value"
        summary = json.loads((out / "floquet_summary.json").read_text())
        assert summary["n_basis"] == 10
        assert 0.9 < summary["dominant_multiplier"] < 1.1
        T = np.loadtxt(out / "monodromy_matrix.csv", delimiter=",")
        assert T.shape == (20, 20)

    def test_koopman_outputs_and_dataset_reuse(self, tmp_path, fast_config):
        out = tmp_path / "o"
        assert run_cli("--config", fast_config, "--output-dir", str(out),
                       "--no-figures", "koopman", "--save-dataset") == 0
        assert (out / "koopman_eigs.csv").read_text().splitlines()[0] == \
               "re,im,residual"
        assert (out / "koopman_grid.csv").read_text().splitlines()[0] == \
               "re,im,value"
        sidecar = json.loads((out / "koopman_dataset.npz.meta.json").read_text())
        assert {"seed", "d", "delta_tau", "box", "M"} <= set(sidecar)
        out2 = tmp_path / "o2"
        assert run_cli("--config", fast_config, "--output-dir", str(out2),
                       "--no-figures", "koopman",
                       "--dataset", str(out / "koopman_dataset.npz")) == 0
        a = (out / "koopman_eigs.csv").read_bytes()
        b = (out2 / "koopman_eigs.csv").read_bytes()
        assert a == b

    def test_sweep_h_jacobian(self, tmp_path, fast_config):
        out = tmp_path / "o"
        assert run_cli("--config", fast_config, "--output-dir", str(out),
                       "--no-figures", "sweep-h", "--target", "jacobian") == 0
        lines = (out / "h_sweep_jacobian.csv").read_text().splitlines()
        assert lines[0] == "h,max_alpha,max_index"
        assert len(lines) == 2

    def test_render_from_grid(self, tmp_path, fast_config):
        out = tmp_path / "o"
        assert run_cli("--config", fast_config, "--output-dir", str(out),
                       "--no-figures", "jacobian-grid") == 0
        assert run_cli("--output-dir", str(out), "render",
                       "--input", str(out / "jacobian_grid.csv"),
                       "--overlay", "axis",
                       "--eigs", str(out / "jacobian_roots.csv")) == 0
        svg = (out / "jacobian_grid.svg").read_text()
        assert svg.startswith("<svg")
        assert (out / "jacobian_grid.svg.meta.json").exists()

    def test_env_var_output_dir(self, tmp_path, fast_config, monkeypatch):
        target = tmp_path / "envout"
        monkeypatch.setenv("HPADYN_OUTPUT_DIR", str(target))
        assert run_cli("--config", fast_config, "fixed-point") == 0
        assert (target / "fixed_point.json").exists()

    def test_figures_written_by_default(self, tmp_path, fast_config):
        out = tmp_path / "fig"
        assert run_cli("--config", fast_config, "--output-dir", str(out),
                       "simulate") == 0
        assert (out / "trajectory.png").exists()
        assert (out / "trajectory.png.meta.json").exists()
