"""Config file parsing, validation and round-tripping."""

import pytest

from kineticfv.config import (SolverConfig, emit_config, parse_config,
                              parse_config_text)
from kineticfv.errors import ConfigError


FULL = """\
[case]
name = sod
scale = desk

[reconstruction]
flavor = hweno
linear = true

[time]
scheme = s2o3_g
cfl = 2.5
cfl_accel = 1500
explicit_cfl = 0.4
k_a = 4
stop_time = 0.2

[solver]
dim_k = 5
restarts = 2
tol = 1e-8
jacobi_sweeps = 3
sweeps = 2
lam_mode = max
halve_on_divergence = yes

[output]
dir = results
every = 10

[run]
max_steps = 500
threads = 2
"""


class TestParsing:
    def test_empty_text_gives_defaults(self):
        assert parse_config_text("") == SolverConfig()

    def test_full_file(self):
        cfg = parse_config_text(FULL)
        assert cfg.case_name == "sod"
        assert cfg.mesh_scale == "desk"
        assert cfg.flavor == "hweno"
        assert cfg.recon_linear is True
        assert cfg.scheme == "s2o3_g"
        assert cfg.cfl == 2.5
        assert cfg.cfl_accel == 1500.0
        assert cfg.explicit_cfl == 0.4
        assert cfg.k_a == 4
        assert cfg.stop_time == 0.2
        assert cfg.dim_k == 5
        assert cfg.restarts == 2
        assert cfg.tol == 1.0e-8
        assert cfg.jacobi_sweeps == 3
        assert cfg.sweeps == 2
        assert cfg.lam_mode == "max"
        assert cfg.halve_on_divergence is True
        assert cfg.out_dir == "results"
        assert cfg.output_every == 10
        assert cfg.max_steps == 500
        assert cfg.threads == 2

    def test_comments_and_blank_lines(self):
        cfg = parse_config_text("# leading comment\n\n[time]\n"
                                "cfl = 3.0  # trailing\n; other comment\n")
        assert cfg.cfl == 3.0

    def test_file_roundtrip(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text(FULL)
        assert parse_config(path) == parse_config_text(FULL)


class TestRejection:
    def test_unknown_key_names_key_and_line(self):
        with pytest.raises(ConfigError, match=r"'cfl2'.*line 3"):
            parse_config_text("\n[time]\ncfl2 = 1.0\n")

    def test_unknown_section_names_line(self):
        with pytest.raises(ConfigError, match=r"\[physics\].*line 1"):
            parse_config_text("[physics]\ngamma = 1.4\n")

    def test_key_outside_section(self):
        with pytest.raises(ConfigError, match="before any"):
            parse_config_text("cfl = 2.0\n")

    def test_line_without_equals(self):
        with pytest.raises(ConfigError, match="line 2"):
            parse_config_text("[time]\nbroken line\n")

    def test_negative_cfl_rejected(self):
        with pytest.raises(ConfigError, match="cfl"):
            parse_config_text("[time]\ncfl = -1\n")

    def test_zero_k_a_rejected(self):
        with pytest.raises(ConfigError, match="k_a"):
            parse_config_text("[time]\nk_a = 0\n")

    def test_bad_flavor(self):
        with pytest.raises(ConfigError, match="weno|hweno"):
            parse_config_text("[reconstruction]\nflavor = eno\n")

    def test_bad_scheme(self):
        with pytest.raises(ConfigError, match="scheme"):
            parse_config_text("[time]\nscheme = rk4\n")

    def test_bad_bool(self):
        with pytest.raises(ConfigError, match="linear"):
            parse_config_text("[reconstruction]\nlinear = maybe\n")

    def test_bad_int(self):
        with pytest.raises(ConfigError, match="dim_k"):
            parse_config_text("[solver]\ndim_k = 2.5\n")


class TestOverrides:
    def test_override_applied_after_file(self):
        cfg = parse_config_text("[time]\ncfl = 1.0\n",
                                overrides=["time.cfl=9.5", "case.name=lax"])
        assert cfg.cfl == 9.5
        assert cfg.case_name == "lax"

    def test_override_validated(self):
        with pytest.raises(ConfigError, match="cfl"):
            parse_config_text("", overrides=["time.cfl=-2"])

    def test_override_requires_dotted_key(self):
        with pytest.raises(ConfigError, match="section.key=value"):
            parse_config_text("", overrides=["cfl=2"])

    def test_override_unknown_key(self):
        with pytest.raises(ConfigError, match="'bogus'"):
            parse_config_text("", overrides=["time.bogus=2"])


class TestEmit:
    def test_roundtrip_identity(self):
        cfg = parse_config_text(FULL)
        assert parse_config_text(emit_config(cfg)) == cfg

    def test_roundtrip_defaults(self):
        cfg = SolverConfig()
        assert parse_config_text(emit_config(cfg)) == cfg

    def test_roundtrip_awkward_floats(self):
        cfg = SolverConfig(cfl=1.0 / 3.0, tol=7.23e-11,
                           stop_time=0.30000000000000004)
        back = parse_config_text(emit_config(cfg))
        assert back.cfl == cfg.cfl
        assert back.tol == cfg.tol
        assert back.stop_time == cfg.stop_time
