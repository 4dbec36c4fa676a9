import pytest

from sage3d.config import (ConfigError, LossWeights, PoseDistribution, ScheduleEntry,
                           config_hash, desk_profile, full_profile, load_config,
                           save_config)


class TestValidation:
    def test_desk_and_full_profiles_validate(self):
        desk_profile().validate()
        full_profile().validate()

    def test_non_power_of_two_resolution_rejected(self):
        entry = ScheduleEntry(resolution=12, g_lr=1e-4, d_lr=1e-4, batch_size=1,
                              steps=1)
        with pytest.raises(ConfigError):
            entry.validate()

    def test_nonpositive_lr_rejected(self):
        entry = ScheduleEntry(resolution=16, g_lr=0.0, d_lr=1e-4, batch_size=1,
                              steps=1)
        with pytest.raises(ConfigError):
            entry.validate()

    def test_loss_weight_bounds(self):
        with pytest.raises(ConfigError):
            LossWeights(r1=-0.1).validate()
        with pytest.raises(ConfigError):
            LossWeights(l1_mix=1.5).validate()

    def test_pose_bounds(self):
        with pytest.raises(ConfigError):
            PoseDistribution(yaw_min=1.0, yaw_max=-1.0).validate()
        with pytest.raises(ConfigError):
            PoseDistribution(kind="exotic").validate()

    def test_paper_constants_in_defaults(self):
        w = LossWeights()
        assert (w.r1, w.rec, w.l1_mix) == (0.1, 1.0, 0.25)
        cfg = full_profile()
        assert (cfg.adam_beta1, cfg.adam_beta2) == (0.0, 0.9)
        by_image_res = {e.image_resolution: e for e in cfg.stage1}
        assert by_image_res[64].g_lr == 6e-5
        assert by_image_res[64].d_lr == 2e-4
        assert by_image_res[64].batch_size == 36
        assert by_image_res[128].g_lr == 5e-5
        assert by_image_res[128].batch_size == 24
        assert by_image_res[256].g_lr == 3e-5
        assert by_image_res[256].d_lr == 1e-4
        assert by_image_res[256].batch_size == 24


class TestSerialization:
    def test_yaml_round_trip(self, tmp_path):
        cfg = desk_profile(seed=5)
        cfg.style_name = "pen"
        path = tmp_path / "run.yaml"
        save_config(cfg, path)
        again = load_config(path)
        assert again.to_dict() == cfg.to_dict()

    def test_hash_stable_and_sensitive(self):
        a = desk_profile(seed=1)
        b = desk_profile(seed=1)
        c = desk_profile(seed=2)
        assert config_hash(a) == config_hash(b)
        assert config_hash(a) != config_hash(c)

    def test_missing_file_raises_config_error(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "none.yaml")

    def test_malformed_mapping_rejected(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("- just\n- a list\n")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_unknown_model_field_rejected(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("model:\n  flux_capacitance: 3\nstage1:\n"
                        "- {resolution: 16, g_lr: 1.0e-4, d_lr: 1.0e-4,"
                        " batch_size: 1, steps: 0}\n")
        with pytest.raises(ConfigError):
            load_config(path)
