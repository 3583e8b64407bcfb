import copy

import pytest
import yaml

from msounder.scenario import ScenarioError, load_scenario, parse_scenario


def test_mini_scenario_parses(mini_scenario):
    assert mini_scenario.cfg.n_subcarriers == 64
    assert len(mini_scenario.rx_nodes()) == 3
    assert mini_scenario.schedule[0].n_symbols(mini_scenario.cfg) == 512
    assert mini_scenario.nodes["tx"].clock.id == "c_tx"


def test_demo_scenario_file_parses():
    scn = load_scenario("scenarios/demo_vtol.yaml")
    assert scn.cfg.bandwidth_hz == 80e6
    assert len(scn.rx_nodes()) == 4
    assert scn.nodes["tx_roof"].clock is scn.nodes["rx_roof"].clock


def test_yaml_roundtrip(tmp_path, mini_doc):
    p = tmp_path / "s.yaml"
    p.write_text(yaml.safe_dump(mini_doc))
    scn = load_scenario(p)
    assert scn.name == "mini"


@pytest.mark.parametrize("mutate, path_frag", [
    (lambda d: d.pop("signal"), "signal"),
    (lambda d: d["signal"].update(n_subcarriers=63), "signal"),
    (lambda d: d["nodes"][1].update(clock="nope"), "nodes[1].clock"),
    (lambda d: d["nodes"][0].pop("eirp_dbm"), "nodes[0].eirp_dbm"),
    (lambda d: d["nodes"][1].pop("noise_floor_dbm_hz"), "nodes[1].noise_floor_dbm_hz"),
    (lambda d: d["nodes"][0].update(role="relay"), "nodes[0].role"),
    (lambda d: d["nodes"][0].update(position=[1, 2]), "nodes[0].position"),
    (lambda d: d["clutter"][0].update(rx_id="ghost"), "clutter[0].rx_id"),
    (lambda d: d["clutter"][0].update(delay_s=1.0), "clutter[0].delay_s"),
    (lambda d: d["schedule"][0].update(tx_id="r1"), "schedule[0].tx_id"),
    (lambda d: d["schedule"][1].update(start_s=0.051), "schedule[1]"),
    (lambda d: d["schedule"][0].update(n_cpi=0), "schedule[0].n_cpi"),
    (lambda d: d["targets"][0]["trajectory"].update(times=[0.0, 0.2]),
     "targets[probe].trajectory"),
    (lambda d: d["clocks"].append(dict(d["clocks"][0])), "clocks[4].id"),
    (lambda d: d["nodes"][0].update(antenna={"kind": "isotropic-ish"}),
     "nodes[0].antenna.kind"),
    (lambda d: d.update(duration_s=0.1), "duration_s"),
    (lambda d: d["targets"][0].update(rcs_dbsm="big"), "targets[0].rcs_dbsm"),
])
def test_mutations_rejected_with_field_path(mini_doc, mutate, path_frag):
    mutate(mini_doc)
    with pytest.raises(ScenarioError) as exc:
        parse_scenario(mini_doc)
    assert path_frag in exc.value.path


def test_duplicate_node_id_rejected(mini_doc):
    mini_doc["nodes"].append(dict(mini_doc["nodes"][1]))
    with pytest.raises(ScenarioError, match="duplicate"):
        parse_scenario(mini_doc)


def test_position_and_trajectory_exclusive(mini_doc):
    mini_doc["nodes"][1]["trajectory"] = {"times": [0, 1], "positions": [[0, 0, 0], [1, 0, 0]]}
    with pytest.raises(ScenarioError, match="not both"):
        parse_scenario(mini_doc)


def test_fuzzed_scalar_mutations_all_rejected(mini_doc):
    # every numeric field flipped to a non-number must fail validation
    rejected = 0
    keys = [("signal", "f_c_hz"), ("signal", "bandwidth_hz"),
            ("signal", "t_symbol_s")]
    for section, key in keys:
        doc = copy.deepcopy(mini_doc)
        doc[section][key] = "oops"
        with pytest.raises(ScenarioError) as exc:
            parse_scenario(doc)
        assert key in exc.value.path
        rejected += 1
    assert rejected == len(keys)


def test_processing_defaults_and_overrides(mini_scenario):
    p = mini_scenario.processing
    assert p.background_alpha == 0.9
    assert p.cfar_guard == (2, 2) and p.cfar_train == (8, 4)
    assert p.q_doppler == 5000.0


def test_unknown_processing_key_rejected(mini_doc):
    mini_doc["processing"]["warp_factor"] = 9
    with pytest.raises(ScenarioError, match="warp_factor"):
        parse_scenario(mini_doc)
