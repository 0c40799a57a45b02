"""Config parsing, validation, and model-shape derivation."""

import json

import pytest

from precond_attn.config import (ExperimentConfig, config_from_dict,
                                 config_to_dict, load_config, model_config,
                                 task_kwargs, validate)
from precond_attn.errors import InputError
from precond_attn.tasks import listops_max_len


class TestParsing:
    def test_defaults_validate(self):
        validate(ExperimentConfig())

    def test_dict_roundtrip(self):
        cfg = ExperimentConfig(task="copy", n=5, vocab=7, mode="precond_output")
        assert config_from_dict(config_to_dict(cfg)) == cfg

    def test_unknown_field_named(self):
        with pytest.raises(InputError, match="learning_rate"):
            config_from_dict({"learning_rate": 0.1})

    def test_manifest_accepted_as_config(self):
        manifest = {"config": {"task": "majority", "steps": 7},
                    "wall_time_s": 1.25, "backend": "compiled"}
        cfg = config_from_dict(manifest)
        assert cfg.steps == 7

    def test_non_object_rejected(self):
        with pytest.raises(InputError, match="JSON object"):
            config_from_dict([1, 2])

    def test_load_config(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"steps": 3, "lr": 0.5}))
        cfg = load_config(str(path))
        assert cfg.steps == 3 and cfg.lr == 0.5

    def test_load_missing_file(self, tmp_path):
        with pytest.raises(InputError, match="cannot read"):
            load_config(str(tmp_path / "absent.json"))

    def test_load_bad_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(InputError, match="cannot parse"):
            load_config(str(path))


class TestValidation:
    def bad(self, field, **kw):
        with pytest.raises(InputError, match=field):
            validate(ExperimentConfig(**kw))

    def test_field_checks(self):
        self.bad("task", task="sorting")
        self.bad("mode", mode="fancy")
        self.bad("head_count", d_model=32, head_count=5)
        self.bad("steps", steps=0)
        self.bad("lr", lr=0.0)
        self.bad("beta1", beta1=1.0)
        self.bad("weight_decay", weight_decay=-0.1)
        self.bad("instrument_every", instrument_every=-1)

    def test_task_shape_checks(self):
        self.bad("n", task="majority", n=8)
        self.bad("n", task="copy", n=1)
        self.bad("vocab", task="copy", vocab=1)
        self.bad("depth", task="listops", depth=4)
        validate(ExperimentConfig(task="listops", depth=3))


class TestModelShape:
    def test_majority(self):
        m = model_config(ExperimentConfig(task="majority", n=9, vocab=4))
        assert (m.vocab, m.num_classes, m.n_max, m.per_position) == (4, 4, 9, False)

    def test_copy_is_per_position(self):
        m = model_config(ExperimentConfig(task="copy", n=6, vocab=5))
        assert (m.num_classes, m.n_max, m.per_position) == (5, 6, True)

    def test_listops_shape_fixed_by_depth(self):
        m = model_config(ExperimentConfig(task="listops", depth=2))
        assert (m.vocab, m.num_classes) == (14, 10)
        assert m.n_max == listops_max_len(2)
        assert not m.per_position

    def test_mode_and_ablations_forwarded(self):
        cfg = ExperimentConfig(mode="precond_weights", scale_scores=False,
                               use_norm=False)
        m = model_config(cfg)
        assert m.mode == "precond_weights"
        assert not m.scale_scores and not m.use_norm

    def test_task_kwargs(self):
        assert task_kwargs(ExperimentConfig(task="listops", depth=3)) == {"depth": 3}
        assert task_kwargs(ExperimentConfig(task="copy", n=4, vocab=6)) == {"n": 4, "vocab": 6}
