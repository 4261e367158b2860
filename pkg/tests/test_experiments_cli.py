import dataclasses
import json

import pytest

from nonlocalma import cli
from nonlocalma import experiments as ex
from nonlocalma import fields as fl


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "out"))
    return tmp_path


def _write(path, cfg):
    path.write_text(json.dumps(cfg))
    return str(path)


# catalog and configs ---------------------------------------------------------------


def test_catalog_entries():
    rows = ex.list_experiments()
    assert len(rows) >= 11
    assert {r["id"] for r in rows} == set(ex.EXPERIMENT_ORDER)
    assert all(r["anchor"] for r in rows)
    expansion = next(r for r in rows if r["id"] == "expansion")
    assert "min{n,beta}+k-2" in expansion["anchor"]


@pytest.mark.parametrize("eid", ex.EXPERIMENT_ORDER)
def test_default_configs_validate(eid):
    cfg = ex.validate_config(ex.default_config(eid))
    assert cfg["experiment"] == eid
    json.dumps(cfg, allow_nan=False)


@pytest.mark.parametrize(
    "cfg,match",
    [
        ({"experiment": "riesz", "colour": 1}, "unknown configuration keys"),
        ({"experiment": "nope"}, "unknown experiment"),
        ({"experiment": "riesz", "cases": [{"field": fl.inverse_power(4).to_dict(), "s": 0.3, "x": 1}]}, "unknown keys"),
        ({"experiment": "riesz", "n": 4}, "n = 3"),
        ({"experiment": "riesz", "threads": 0}, "threads"),
        ({"experiment": "riesz", "radii": [8, 4, 16, 32]}, "radii"),
        ({"experiment": "riesz", "quadrature": {"mid_nodes": 4}}, "quadrature"),
        ({"experiment": "full-suite", "cases": [{}]}, "no cases"),
    ],
)
def test_invalid_configs(cfg, match):
    with pytest.raises(ex.ConfigError, match=match):
        ex.validate_config(cfg)


@pytest.mark.parametrize(
    "eid,case",
    [
        ("lemma-growth", {"field": fl.growth_power(0.5).to_dict(), "s": 0.2}),
        ("lemma-decay", {"field": fl.inverse_power(1.0).to_dict(), "s": 0.5}),
        ("riesz", {"field": fl.inverse_power(0.5).to_dict(), "s": 0.3}),
        ("commute", {"field": fl.inverse_power(2.0).to_dict(), "s": 0.7, "case": "i"}),
        ("hypothesis-H", {"field": fl.perturbed_one(0.5, 2.5).to_dict(), "alpha": 0.5, "beta": 2.0}),
        ("bootstrap", {"field": fl.perturbed_one(0.5, 2.5).to_dict(), "eps0": 0.5}),
        ("expansion", {"field": fl.inverse_power(2.0).to_dict(), "beta": 2.5}),
    ],
)
def test_hypothesis_violations_are_config_errors(eid, case):
    with pytest.raises(ex.ConfigError):
        ex.validate_config({"experiment": eid, "cases": [case]})


def test_hash_tracks_overrides_but_not_output_dir():
    base = ex.validate_config({"experiment": "riesz"})
    moved = ex.validate_config({"experiment": "riesz", "output_dir": "/elsewhere"})
    assert ex.config_hash(base) == ex.config_hash(moved)
    strict = ex.validate_config(cli.apply_overrides(base, strict=True))
    margin = ex.validate_config(cli.apply_overrides(base, margin=0.2))
    hashes = {ex.config_hash(c) for c in (base, strict, margin)}
    assert len(hashes) == 3
    assert ex.lineage_hash(base) == ex.lineage_hash(margin)


# runs ----------------------------------------------------------------------------------


def test_run_writes_report_and_tables(workdir, capsys):
    path = _write(workdir / "c.json", ex.default_config("riesz"))
    assert cli.main(["run", path]) == 0
    report_path = capsys.readouterr().out.strip()
    report = json.loads(open(report_path).read())
    run_dir = workdir / "out" / f"riesz-{report['config_hash'][:12]}"
    assert report_path == str(run_dir / "report.json")
    assert "wall_time_s" not in json.dumps(report)
    meta = json.loads((run_dir / "run_meta.json").read_text())
    assert meta["config_hash"] == report["config_hash"] and meta["wall_time_s"] > 0
    csvs = sorted(run_dir.glob("*.csv"))
    assert len(csvs) == len(report["checks"])
    for c in csvs:
        lines = c.read_text().splitlines()
        assert lines[0] == f"# config_hash: {report['config_hash']}"
        assert lines[1].startswith("# version: ")
        assert lines[2] == "r,value,bound"


def test_log_model_selected_at_borderline(workdir):
    report, _ = ex.run_experiment(ex.default_config("lemma-decay"))
    by_sigma = {c["id"].split("-")[3]: c for c in report["checks"]}
    assert by_sigma["inverse_power_3_1"]["log_model"] is True
    assert by_sigma["inverse_power_1_1"]["log_model"] is False


def test_flat_ma_radial_reports_roundoff(workdir):
    cfg = ex.default_config("ma-radial")
    cfg["cases"] = cfg["cases"][:1]
    report, tables = ex.run_experiment(cfg)
    liou = next(c for c in report["checks"] if c["id"].endswith("liouville"))
    assert liou["status"] == "pass" and liou["details"]["max_abs_w"] <= 1e-8
    assert any(k.endswith("solution") for k in tables)


def test_config_error_exit_code(workdir):
    cfg = ex.default_config("lemma-growth")
    cfg["cases"] = [{"field": fl.growth_power(0.5).to_dict(), "s": 0.2}]
    assert cli.main(["run", _write(workdir / "bad.json", cfg)]) == 2
    assert cli.main(["run", str(workdir / "missing.json")]) == 2


def _fake_runner(statuses):
    def run(cfg, ctx):
        return [{"id": f"c{i}", "lemma_id": "x", "status": s, "details": {}} for i, s in enumerate(statuses)]

    return run


@pytest.mark.parametrize(
    "statuses,strict,code",
    [
        (["pass", "inconclusive"], False, 0),
        (["pass", "inconclusive"], True, 1),
        (["pass", "fail"], False, 1),
        (["pass", "pass"], True, 0),
    ],
)
def test_exit_code_and_strict(workdir, monkeypatch, statuses, strict, code):
    entry = dataclasses.replace(ex.CATALOG["riesz"], runner=_fake_runner(statuses))
    monkeypatch.setitem(ex.CATALOG, "riesz", entry)
    argv = ["run", _write(workdir / "c.json", {"experiment": "riesz"})] + (["--strict"] if strict else [])
    assert cli.main(argv) == code


def test_init_and_list(workdir, capsys):
    assert cli.main(["init", "bootstrap"]) == 0
    cfg = json.loads(capsys.readouterr().out)
    assert cfg["experiment"] == "bootstrap"
    assert cli.main(["list", "--json"]) == 0
    assert len(json.loads(capsys.readouterr().out)) >= 11


# diff ----------------------------------------------------------------------------------


@pytest.fixture(scope="module")
def decay_reports():
    cfg = ex.default_config("lemma-decay")
    a, _ = ex.run_experiment(cfg)
    b, _ = ex.run_experiment(cfg)
    loose, _ = ex.run_experiment(dict(cfg, margin=0.15))
    tight, _ = ex.run_experiment(dict(cfg, margin=0.05))
    fine_cfg = json.loads(json.dumps(cfg))
    fine_cfg["quadrature"]["mid_nodes"] *= 2
    fine, _ = ex.run_experiment(fine_cfg)
    return a, b, loose, tight, fine


def test_identical_runs_have_empty_diff(decay_reports):
    a, b, *_ = decay_reports
    assert ex.canonical_json(a) == ex.canonical_json(b)
    assert ex.diff_reports(a, b)["empty"]


def test_margin_diff_lists_only_flips(decay_reports):
    _, _, loose, tight, _ = decay_reports
    d = ex.diff_reports(loose, tight)
    assert set(d["config"]) == {"margin"}
    assert d["numeric"] == [] and d["missing"] == []
    assert all(f["a"] == "pass" for f in d["flipped"])
    assert d["same_lineage"]


def test_refinement_diff_within_error_estimates(decay_reports):
    a, *_, fine = decay_reports
    d = ex.diff_reports(a, fine)
    annotated = [e for e in d["numeric"] if "tolerance" in e]
    assert annotated
    assert all(e["within_tolerance"] for e in annotated)


def test_diff_rejects_other_experiments(decay_reports):
    a = decay_reports[0]
    with pytest.raises(ValueError):
        ex.diff_reports(a, dict(a, experiment="riesz"))


def test_cli_diff(workdir, capsys, decay_reports):
    a, _, loose, tight, _ = decay_reports
    pa, pb = workdir / "a.json", workdir / "b.json"
    pa.write_text(json.dumps(loose))
    pb.write_text(json.dumps(tight))
    assert cli.main(["diff", str(pa), str(pb)]) == 0
    assert json.loads(capsys.readouterr().out)["config"] == {"margin": {"a": 0.15, "b": 0.05}}
    pb.write_text(json.dumps(dict(tight, experiment="riesz")))
    assert cli.main(["diff", str(pa), str(pb)]) == 2
