# SPDX-License-Identifier: Apache-2.0
import json
import pathlib

import pytest

import teenas

ROOT = pathlib.Path(__file__).resolve().parents[2]


def profile():
    return teenas.CostProfile.from_json((ROOT / "configs" / "profile.json").read_text())


def ranges():
    return teenas.SearchFactorRanges.from_json((ROOT / "configs" / "ranges.json").read_text())


def test_empty_configuration_costs_the_backbone():
    p, r = profile(), ranges()
    c = teenas.empty_configuration(r)
    assert c.active_count() == 0
    assert teenas.parallel_latency(c, p, teenas.default_backbone_dims()) == p.backbone_ms()


def test_closed_form_matches_schedule():
    p, r, d = profile(), ranges(), teenas.default_backbone_dims()
    for seed in range(50):
        c = teenas.sample_random(r, seed)
        makespan, events = teenas.simulate_schedule(c, p, d)
        assert abs(teenas.parallel_latency(c, p, d) - makespan) < 1e-9
        assert teenas.parallel_latency(c, p, d) >= p.backbone_ms()
        assert all(e[2] <= e[3] for e in events)


def test_encode_decode_round_trip():
    r = ranges()
    c = teenas.sample_random(r, 3)
    x = teenas.encode(c, r)
    assert len(x) == r.encoded_dim() == 32
    assert teenas.decode(x, r) == c
    assert teenas.Configuration.from_json(c.to_json()) == c


def test_pareto_helpers():
    pts = [(0.9, 3.0), (0.8, 2.0), (0.7, 2.5), (0.95, 5.0)]
    assert teenas.non_dominated_indices(pts) == [0, 1, 3]
    assert teenas.hypervolume([(0.5, 1.0)], accuracy_floor=0.0, latency_ceiling=2.0) == pytest.approx(0.5)


def test_experiment_spec_loads():
    spec = teenas.load_experiment(ROOT / "configs" / "experiment.json")
    assert spec["schema"] == "teenas.experiment"
    assert spec["search"]["alpha"] == 0.5
    assert spec["attack"]["query_fraction"] == 0.01


def test_bad_spec_raises(tmp_path):
    bad = json.loads((ROOT / "configs" / "experiment.json").read_text())
    bad["surprise"] = 1
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(bad))
    with pytest.raises(ValueError):
        teenas.load_experiment(path)
