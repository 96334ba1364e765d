import csv
import io
import json
from fractions import Fraction

import pytest
import yaml

from edgestat import cli
from edgestat.experiments import (
    ConfigError,
    ExperimentConfig,
    cache_audit,
    cache_key,
    dumps,
    parse_edge_list,
    rat,
    run_experiment,
    strip_timing,
    sweep,
    to_csv,
)
from edgestat.graph import cycle_graph
from edgestat.graph6 import parse_graph6

C5 = {"family": {"variant": "cycle", "n": 5}}


@pytest.fixture(autouse=True)
def cache_dir(tmp_path, monkeypatch):
    root = tmp_path / "cache"
    monkeypatch.setenv("EDGESTAT_CACHE", str(root))
    return root


def cfg(d, **kw):
    return ExperimentConfig.from_dict(d, **kw)


def test_exact_pmf_c5():
    rec = run_experiment(cfg({"kind": "exact_pmf", "graph": C5, "params": {"k": 3}}))
    assert rec.payload["probs"] == {"1": "1/2", "2": "1/2"}
    assert rec.payload["probs_float"] == {"1": 0.5, "2": 0.5}
    assert rec.payload["mean"] == "3/2" and rec.payload["mean_float"] == 1.5


def test_extremal_five_three_one():
    rec = run_experiment(cfg({"kind": "extremal", "params": {"n": 5, "k": 3, "ell": 1}}))
    assert rec.payload["value"] == "9/10"
    g = parse_graph6(rec.payload["witness_graph6"])
    assert sorted(g.degrees()) == [1, 1, 2, 2, 2]


def test_cache_hit_identical(cache_dir):
    c = cfg({"kind": "exact_pmf", "graph": C5, "params": {"k": 3}})
    first = run_experiment(c)
    second = run_experiment(c)
    assert not first.from_cache and second.from_cache
    assert first.payload == second.payload
    assert strip_timing(first.to_dict()) == strip_timing(second.to_dict())
    assert list(cache_dir.glob("*/*.json"))


def test_reports_byte_identical_after_stripping_timing(tmp_path):
    d = {"kind": "mc_event", "graph": C5, "params": {"k": 3, "event": "X(1)"},
         "mc": {"trials": 500, "seed": 3}}
    texts = []
    for sub in ("a", "b"):
        c = cfg(d).with_overrides(out_dir=str(tmp_path / sub))
        run_experiment(c, use_cache=False)
        report = json.loads(next((tmp_path / sub).glob("*.json")).read_text())
        texts.append(dumps(strip_timing(report)))
    assert texts[0] == texts[1]


def test_mc_event_estimate_near_exact():
    rec = run_experiment(cfg({"kind": "mc_event", "graph": C5, "params": {"k": 3, "event": "X(1)"},
                              "mc": {"trials": 4000, "seed": 1}}))
    est = rec.payload["estimate"]
    assert est["ci_low"] <= 0.5 <= est["ci_high"]


def test_csv_agrees_with_json(tmp_path):
    c = cfg({"kind": "exact_pmf", "graph": C5, "params": {"k": 3},
             "output": {"dir": str(tmp_path), "csv": True}, "name": "c5"})
    rec = run_experiment(c)
    text = (tmp_path / "c5.csv").read_bytes().decode()
    assert "\r\n" in text
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == ["ell", "count", "prob", "prob_float"]
    for ell, count, prob, pf in rows[1:]:
        assert rec.payload["probs"][ell] == prob
        assert rec.payload["counts"][ell] == int(count)
        assert rec.payload["probs_float"][ell] == float(pf)
    assert json.loads((tmp_path / "c5.json").read_text())["payload"] == rec.payload


@pytest.mark.parametrize("d", [
    {"kind": "moments", "graph": C5, "params": {"k": 3, "ell": 1}},
    {"kind": "hypergeom", "params": {"N": 10, "t": 5, "m": 4}},
    {"kind": "poisson_bound", "params": {"d_max": 5}},
    {"kind": "containment", "graph": C5, "params": {"k": 3, "ell": 1, "event_e": "E1", "event_f": "E2"},
     "mc": {"trials": 300, "seed": 2}},
    {"kind": "event_frequencies", "graph": {"family": {"variant": "gnp", "n": 30, "p": 0.2, "seed": 1}},
     "params": {"k": 5, "ell": 2, "events": ["E1", "E3", "Dstar", "D(1)", "F4"]},
     "mc": {"trials": 300, "seed": 2}},
    {"kind": "coupling", "graph": {"family": {"variant": "empty", "n": 40}}, "params": {"k": 4, "ell": 1},
     "mc": {"trials": 200, "seed": 2}},
    {"kind": "monotonicity", "params": {"n_list": [4, 5], "k": 3, "ell": 1}},
])
def test_every_kind_runs(d):
    rec = run_experiment(cfg(d), use_cache=False)
    assert rec.payload is not None and rec.table[0]
    json.loads(rec.to_json())


def test_moments_payload():
    p = run_experiment(cfg({"kind": "moments", "graph": C5, "params": {"k": 3, "ell": 1}})).payload
    assert p["variance"]["var_x_minus_z"] == "1/4"
    assert p["mu1"] == rat(Fraction(3, 2)) and p["mu1_float"] == 1.5 and p["mu2"] == "0/1"


def test_hypergeom_payload():
    p = run_experiment(cfg({"kind": "hypergeom", "params": {"N": 10, "t": 5, "m": 4}})).payload
    assert p["argmax"] == 2 and p["max"] == "10/21"


@pytest.mark.parametrize("d, field", [
    ({"kind": "nope"}, "kind"),
    ({"kind": "exact_pmf", "params": {"k": 3}}, "graph"),
    ({"kind": "exact_pmf", "graph": {**C5, "graph6": "Bw"}, "params": {"k": 3}}, "graph"),
    ({"kind": "exact_pmf", "graph": C5, "params": {}}, "params.k"),
    ({"kind": "exact_pmf", "graph": C5, "params": {"k": -1}}, "params.k"),
    ({"kind": "mc_event", "graph": C5, "params": {"k": 3, "event": "X(1)"}}, "mc"),
    ({"kind": "mc_event", "graph": C5, "params": {"k": 3, "event": "Q9"}, "mc": {"trials": 1, "seed": 0}},
     "params.event"),
    ({"kind": "hypergeom", "params": {"N": 3, "t": 5, "m": 1}}, "params"),
    ({"kind": "exact_pmf", "graph": C5, "params": {"k": 3}, "bogus": 1}, "config"),
])
def test_config_errors_name_field(d, field):
    with pytest.raises(ConfigError, match=field):
        cfg(d)


def test_budget_error_suggests_mc():
    c = cfg({"kind": "exact_pmf", "graph": {"family": {"variant": "empty", "n": 40}},
             "params": {"k": 10, "budget": 1000}})
    with pytest.raises(Exception, match="mc_event"):
        run_experiment(c)


def test_graph_sources(tmp_path):
    (tmp_path / "g.g6").write_text("Bw\nA_\n")
    (tmp_path / "c5.txt").write_text("# a five cycle\n5\n0 1\n1 2\n2 3\n3 4\n4 0\n")
    base = {"kind": "exact_pmf", "params": {"k": 2}}
    r1 = run_experiment(cfg({**base, "graph": {"graph6_file": "g.g6"}}, base_dir=tmp_path))
    assert r1.payload["probs"] == {"1": "1/1"}
    r2 = run_experiment(cfg({**base, "graph": {"graph6_file": "g.g6", "index": 1}}, base_dir=tmp_path))
    assert r2.payload["n"] == 2
    r3 = run_experiment(cfg({**base, "graph": {"edge_list": "c5.txt"}}, base_dir=tmp_path))
    assert r3.payload["probs"] == {"0": "1/2", "1": "1/2"}
    r4 = run_experiment(cfg({**base, "graph": {"graph6": "Bw"}}))
    assert r4.payload == r1.payload


def test_cache_key_tracks_file_contents(tmp_path):
    f = tmp_path / "g.txt"
    f.write_text("3\n0 1\n")
    c = cfg({"kind": "exact_pmf", "graph": {"edge_list": "g.txt"}, "params": {"k": 2}}, base_dir=tmp_path)
    k1 = cache_key(c)
    f.write_text("3\n0 1\n1 2\n")
    assert cache_key(c) != k1


def test_parse_edge_list():
    assert parse_edge_list("5\n0 1\n1 2\n2 3\n3 4\n4 0\n") == cycle_graph(5)
    with pytest.raises(ValueError):
        parse_edge_list("")


def test_sweep_order_and_isolation():
    configs = [
        {"kind": "monotonicity", "params": {"n_list": [5, 6], "k": 3, "ell": 1}},
        {"kind": "exact_pmf", "params": {"k": 3}},  # no graph
        {"kind": "exact_pmf", "graph": C5, "params": {"k": 3}},
    ]
    recs = sweep(configs)
    assert [r.error is None for r in recs] == [True, False, True]
    assert "graph" in recs[1].error
    vals = [Fraction(v["value"]) for v in recs[0].payload["values"]]
    assert vals[0] == Fraction(9, 10) and vals[0] >= vals[1]
    assert recs[2].payload["probs"] == {"1": "1/2", "2": "1/2"}
    assert sweep([]) == []


def test_sweep_runtime_error_isolated():
    bad = cfg({"kind": "exact_pmf", "graph": {"family": {"variant": "empty", "n": 30}},
               "params": {"k": 10, "budget": 10}})
    good = cfg({"kind": "exact_pmf", "graph": C5, "params": {"k": 2}})
    recs = sweep([bad, good], parallelism=2)
    assert recs[0].error and "BudgetExceeded" in recs[0].error
    assert recs[1].error is None


def test_sweep_monotonicity_non_increasing():
    recs = sweep([{"kind": "extremal", "params": {"n": n, "k": 3, "ell": 1}} for n in (5, 6, 7)])
    vals = [Fraction(r.payload["value"]) for r in recs]
    assert vals == sorted(vals, reverse=True)


def test_cache_audit(cache_dir):
    for k in (2, 3, 4):
        run_experiment(cfg({"kind": "exact_pmf", "graph": C5, "params": {"k": k}}))
    res = cache_audit(fraction=1.0)
    assert res == {"entries": 3, "audited": 3, "mismatches": []}
    # corrupt one entry
    path = sorted(cache_dir.glob("*/*.json"))[0]
    entry = json.loads(path.read_text())
    entry["payload"]["n"] = 99
    path.write_text(json.dumps(entry))
    res = cache_audit(fraction=1.0)
    assert len(res["mismatches"]) == 1 and res["mismatches"][0]["reason"] == "payload differs"
    assert cache_audit(fraction=0.1)["audited"] == 1


def test_to_csv_quotes():
    assert to_csv([["a", "b,c"], [1, 'x"y']]) == 'a,"b,c"\r\n1,"x""y"\r\n'


# --- CLI ---------------------------------------------------------------------

def write_config(path, d):
    path.write_text(yaml.safe_dump(d))
    return path


def test_cli_run_stdout(tmp_path, capsys):
    p = write_config(tmp_path / "c.yaml", {"kind": "exact_pmf", "graph": C5, "params": {"k": 3}})
    assert cli.main(["run", str(p)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["payload"]["probs"] == {"1": "1/2", "2": "1/2"}
    assert out["config"]["version"]


def test_cli_run_overrides(tmp_path, capsys):
    p = write_config(tmp_path / "c.yaml", {"kind": "mc_event", "graph": C5, "params": {"k": 3, "event": "X(2)"},
                                           "mc": {"trials": 100, "seed": 1}, "name": "mc"})
    assert cli.main(["run", str(p), "--seed", "9", "--trials", "250", "--out", str(tmp_path / "r")]) == 0
    rep = json.loads((tmp_path / "r" / "mc.json").read_text())
    assert rep["config"]["mc"]["seed"] == 9 and rep["payload"]["estimate"]["trials"] == 250


def test_cli_run_bad_config(tmp_path, capsys):
    p = write_config(tmp_path / "c.yaml", {"kind": "exact_pmf", "params": {"k": 3}})
    assert cli.main(["run", str(p)]) == 2
    assert "graph" in capsys.readouterr().err


def test_cli_sweep(tmp_path, capsys):
    d = tmp_path / "cfgs"
    d.mkdir()
    write_config(d / "a.yaml", {"kind": "exact_pmf", "graph": C5, "params": {"k": 3}, "name": "a"})
    write_config(d / "b.yaml", {"kind": "exact_pmf", "params": {"k": 3}})
    (d / "notes.txt").write_text("ignored")
    assert cli.main(["sweep", str(d), "--out", str(tmp_path / "out")]) == 1
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "a.yaml\tok" and lines[1].startswith("b.yaml\terror")
    assert (tmp_path / "out" / "a.json").exists()


def test_cli_cache(cache_dir, tmp_path, capsys):
    assert cli.main(["cache", "path"]) == 0
    assert capsys.readouterr().out.strip() == str(cache_dir)
    p = write_config(tmp_path / "c.yaml", {"kind": "hypergeom", "params": {"N": 10, "t": 5, "m": 4}})
    cli.main(["run", str(p)])
    capsys.readouterr()
    assert cli.main(["cache", "audit", "--fraction", "1"]) == 0
    assert json.loads(capsys.readouterr().out)["audited"] == 1


def test_shipped_configs_validate():
    from pathlib import Path

    shipped = sorted((Path(__file__).parent.parent / "configs").glob("*.yaml"))
    assert shipped
    for p in shipped:
        ExperimentConfig.load(p)
