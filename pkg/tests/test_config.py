import json

import pytest
import yaml

from fedsched.config import ConfigError, ExperimentConfig, dump_config, from_dict, load_config


def test_defaults():
    cfg = from_dict({})
    p = cfg.network.params()
    assert p.ues_per_cell == 100 and p.subchannels == 10 and p.sinr_threshold == 1.0
    assert cfg.rates.policies == ["RS", "RR", "PF", "NS"]
    assert cfg.training.reference_update == "delivered"


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError, match="unknown top-level"):
        from_dict({"netwrok": {}})
    with pytest.raises(ConfigError, match=r"network: unknown keys \['k'\]"):
        from_dict({"network": {"k": 3}})
    with pytest.raises(ConfigError, match="expected a mapping"):
        from_dict({"rates": [1, 2]})


def test_yaml_and_json_agree(tmp_path):
    d = {"seed": 5, "network": {"K": 20, "N": 4}, "rates": {"g_grid": [2, 3]}, "dataset": {"sizes": None}}
    (tmp_path / "c.yaml").write_text(yaml.safe_dump(d))
    (tmp_path / "c.json").write_text(json.dumps(d))
    a, b = load_config(tmp_path / "c.yaml"), load_config(tmp_path / "c.json")
    assert a == b and a.seed == 5 and a.network.K == 20
    assert a.config_hash() == b.config_hash()


@pytest.mark.parametrize("text", ["[1, 2]", "a: [", "seed: -1", "threads: 0"])
def test_bad_files(tmp_path, text):
    f = tmp_path / "c.yaml"
    f.write_text(text)
    with pytest.raises(ConfigError):
        load_config(f)
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "absent.yaml")


@pytest.mark.parametrize("data,msg", [
    ({"rates": {"g_grid": []}}, "empty"),
    ({"rates": {"g_grid": [2, 2.5]}}, "integers"),
    ({"rates": {"theta_db_grid": [0, float("nan")]}}, "non-finite"),
    ({"rates": {"policies": ["XX"]}}, "rates.policies"),
    ({"mc": {"policies": ["MultiRound(2)"]}}, "not supported"),
    ({"rates": {"beta": 1.0}}, "beta"),
    ({"training": {"loss": "hinge"}}, "loss"),
    ({"training": {"bound_eps_factors": [2.0]}}, "bound_eps_factors"),
    ({"network": {"N": 0}}, "network"),
    ({"dataset": {"n": 10}}, "dataset.n"),
])
def test_validation_errors(data, msg):
    with pytest.raises(ConfigError, match=msg):
        from_dict(data)


def test_hash_ignores_threads_and_out():
    a = from_dict({"threads": 1, "out": "x"})
    b = from_dict({"threads": 8, "out": "y"})
    c = from_dict({"seed": 1})
    assert a.config_hash() == b.config_hash() != c.config_hash()
    assert a.provenance() == {"config_hash": a.config_hash(), "seed": 0}


def test_dump_round_trip(tmp_path):
    cfg = from_dict({"seed": 3, "dataset": {"sizes": [50] * 10, "partition": "unbalanced"}, "network": {"K": 10}})
    dump_config(cfg, tmp_path / "c.yaml", full=True)
    back = load_config(tmp_path / "c.yaml")
    assert back == cfg
    dump_config(cfg, tmp_path / "r.yaml")
    assert "threads" not in yaml.safe_load((tmp_path / "r.yaml").read_text())
    assert isinstance(cfg, ExperimentConfig)
