"""Tests for the INI job configuration."""

import pytest

from inkspline.config import ConfigError, default_config, load_config


class TestDefaults:
    def test_documented_defaults(self):
        cfg = default_config()
        assert cfg["spline"]["degree"] == 5
        assert cfg["smoothing"]["order"] == 3
        assert cfg["smoothing"]["mode"] == "exact"
        assert cfg["job"]["steps"] == 300
        assert cfg["engine"]["lr_positions"] == 1.0
        assert cfg["engine"]["lr_widths"] == 0.1
        assert cfg["palette"]["gumbel_beta"] == 0.15
        assert all(v == 1.0 for v in cfg["losses"].values())


class TestLoad:
    def test_minimal_config_gets_defaults(self, tmp_path):
        p = tmp_path / "job.ini"
        p.write_text("[job]\ntarget = a.png\n")
        cfg = load_config(p)
        assert cfg["job"]["target"] == "a.png"
        assert cfg["job"]["steps"] == 300
        assert cfg["spline"]["degree"] == 5

    def test_values_parsed_with_types(self, tmp_path):
        p = tmp_path / "job.ini"
        p.write_text(
            "[job]\nsteps = 120\nclosed = true\n[losses]\nsmooth = 2.5\n"
        )
        cfg = load_config(p)
        assert cfg["job"]["steps"] == 120
        assert cfg["job"]["closed"] is True
        assert cfg["losses"]["smooth"] == 2.5

    def test_unknown_key_rejected_with_line(self, tmp_path):
        p = tmp_path / "job.ini"
        p.write_text("[job]\ntarget = a.png\nbogus_key = 3\n")
        with pytest.raises(ConfigError) as exc:
            load_config(p)
        assert ":3:" in str(exc.value)
        assert "bogus_key" in str(exc.value)

    def test_unknown_section_rejected(self, tmp_path):
        p = tmp_path / "job.ini"
        p.write_text("[job]\ntarget=a.png\n[notasection]\nx = 1\n")
        with pytest.raises(ConfigError):
            load_config(p)

    def test_bad_type_rejected_with_line(self, tmp_path):
        p = tmp_path / "job.ini"
        p.write_text("[job]\nsteps = soon\n")
        with pytest.raises(ConfigError) as exc:
            load_config(p)
        assert ":2:" in str(exc.value)

    def test_degree_order_rule(self, tmp_path):
        p = tmp_path / "job.ini"
        p.write_text("[spline]\ndegree = 2\n[smoothing]\norder = 3\n")
        with pytest.raises(ConfigError) as exc:
            load_config(p)
        assert "order" in str(exc.value)

    def test_degree_order_rule_ignored_when_smoothing_off(self, tmp_path):
        p = tmp_path / "job.ini"
        p.write_text(
            "[spline]\ndegree = 2\n[smoothing]\norder = 3\n[losses]\nsmooth = 0\n"
        )
        load_config(p)  # no error

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "nope.ini")

    def test_negative_weight_rejected(self, tmp_path):
        p = tmp_path / "job.ini"
        p.write_text("[losses]\nrepul = -1\n")
        with pytest.raises(ConfigError):
            load_config(p)
