import os
import sys
import json
import subprocess

import pytest

from certify_rkhs import EXIT_CONFIG, EXIT_GATE, EXIT_OK, load_config, main, parse_args
from rkhs_tools.errors import ConfigError, StageMissing
from rkhs_tools.pipeline import CERTIFICATE, SUMMARY, CertificationPipeline
from utils.config_utils import DEFAULT_TOLERANCES, load_run_config
from utils.fs_utils import write_json

ROOT = os.path.dirname(os.path.abspath(__file__))
CONFIGS = os.path.join(ROOT, "configs")

BANDLIMITED_RUN = {
    "schema": 1,
    "seed": 2,
    "scenario": {"id": "bandlimited", "band": 1.0, "reg": 0.1, "window": 20.0, "resolution": 801,
                 "probe_radius": 8.0, "probe_spacing": 0.5},
    "points": {"lattice": {"spacing": 0.25}},
    "stages": ["certify-kernel"],
    "tolerances": {"wuc": 0.1},
}


def write_config(tmp_path, data, name="run.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data), encoding="utf-8")
    return str(path)


def with_changes(**changes):
    return {**BANDLIMITED_RUN, **changes}


def run_cli(*argv):
    return subprocess.run([sys.executable, os.path.join(ROOT, "certify_rkhs.py"), *argv],
                          cwd=ROOT, capture_output=True, text=True)


@pytest.mark.parametrize("name", sorted(os.listdir(CONFIGS)))
def test_shipped_configs_load(name):
    config = load_run_config(os.path.join(CONFIGS, name))
    assert config.stages[0] == "certify-kernel"
    assert config.canonical()["schema"] == 1


@pytest.mark.parametrize("stages", [
    ["build-points"],
    ["certify-kernel", "build-frame"],
    ["certify-kernel", "build-points", "build-points"],
    ["certify-kernel", "render"],
    [],
])
def test_stage_lists_must_be_prefixes(tmp_path, stages):
    with pytest.raises(ConfigError):
        load_run_config(write_config(tmp_path, with_changes(stages=stages)))


def test_riesz_stage_needs_its_block(tmp_path):
    stages = ["certify-kernel", "build-points", "build-riesz"]
    with pytest.raises(ConfigError, match="riesz"):
        load_run_config(write_config(tmp_path, with_changes(stages=stages)))


@pytest.mark.parametrize("changes", [
    dict(scenario={"id": "torus"}),
    dict(scenario={"id": "fock", "colour": 1}),
    dict(scenario={"id": "fock", "resolution": "fine"}),
    dict(scenario={"id": "fock", "window": 1.0, "probe_radius": 2.0}),
    dict(points={"jittered": {"spacing": 0.6, "jitter": 0.6}}),
    dict(points={"lattice": {"spacing": 1.0}, "near_uniform": {"epsilon": 0.5}}),
    dict(seed=-1),
    dict(schema=2),
    dict(tolerances={"duality": 0}),
    dict(tolerances={"speed": 1.0}),
    dict(frame={"mode": "loose"}),
    dict(weight={"kind": "exponential"}),
])
def test_invalid_configs_are_rejected(tmp_path, changes):
    with pytest.raises(ConfigError):
        load_run_config(write_config(tmp_path, with_changes(**changes)))


def test_unreadable_configs_are_rejected(tmp_path):
    broken = tmp_path / "broken.json"
    broken.write_text("{", encoding="utf-8")
    with pytest.raises(ConfigError, match="not valid JSON"):
        load_run_config(str(broken))
    with pytest.raises(ConfigError, match="not found"):
        load_run_config(str(tmp_path / "absent.json"))


def test_defaults_fill_the_scenario(tmp_path):
    config = load_run_config(write_config(tmp_path, with_changes(scenario={"id": "fock"})))
    assert config.scenario.resolution == (41,)
    assert config.scenario.probe_spacing == 0.3
    assert config.frame["mode"] == "dual"
    assert config.tolerances["duality"] == DEFAULT_TOLERANCES["duality"]


def test_tolerance_scale(tmp_path):
    path = write_config(tmp_path, BANDLIMITED_RUN)
    config = load_config(parse_args(["certify-kernel", "-c", path, "--tol-scale", "2"]))
    assert config.tolerances["wuc"] == pytest.approx(0.2)
    assert config.tolerances["duality"] == pytest.approx(2 * DEFAULT_TOLERANCES["duality"])
    with pytest.raises(ConfigError):
        load_config(parse_args(["certify-kernel", "-c", path, "--tol-scale", "0"]))


def test_near_uniform_override(tmp_path):
    path = write_config(tmp_path, BANDLIMITED_RUN)
    config = load_config(parse_args(["build-points", "-c", path, "--near-uniform", "0.5"]))
    assert config.points == {"kind": "near_uniform", "epsilon": 0.5, "u_radius": 1.0}
    with pytest.raises(ConfigError):
        load_config(parse_args(["build-points", "-c", path, "--near-uniform", "-1"]))


def test_stage_without_upstream_artifacts(tmp_path):
    path = write_config(tmp_path, BANDLIMITED_RUN)
    args = parse_args(["build-frame", "-c", path])
    with pytest.raises(StageMissing) as err:
        main(args, load_config(args), str(tmp_path / "out"))
    assert err.value.stage == "certify-kernel"


def test_reports_of_another_config_are_refused(tmp_path):
    path = write_config(tmp_path, BANDLIMITED_RUN)
    out = str(tmp_path / "out")
    args = parse_args(["run", "-c", path])
    config = load_config(args)
    main(args, config, out)
    write_json(os.path.join(out, "stage_build-points.json"), {
        "stage": "build-points", "config_hash": "someotherrun", "report": {},
        "gates": [{"gate": "build_points.separation", "status": "PASS", "measured": 1.0, "limit": 0.5, "detail": ""}],
    })
    pipeline = CertificationPipeline(config, out)
    certificate = pipeline.write_certificate()
    assert certificate["stage_order"] == ["certify-kernel"]
    with pytest.raises(StageMissing, match="someotherrun") as err:
        pipeline.load_points()
    assert err.value.stage == "build-points"

    kernel_report = os.path.join(out, "stage_certify-kernel.json")
    with open(kernel_report, encoding="utf-8") as f:
        data = json.load(f)
    write_json(kernel_report, {**data, "config_hash": "someotherrun"})
    certificate = pipeline.write_certificate()
    assert certificate["stage_order"] == []
    assert certificate["passed"] is False


def test_report_is_repeatable(tmp_path, capsys):
    path = write_config(tmp_path, BANDLIMITED_RUN)
    out = str(tmp_path / "out")
    args = parse_args(["run", "-c", path])
    code = main(args, load_config(args), out)
    assert code in (EXIT_OK, EXIT_GATE)
    assert os.path.exists(os.path.join(out, CERTIFICATE))
    with open(os.path.join(out, "stage_certify-kernel.json"), encoding="utf-8") as f:
        gates = [g["gate"] for g in json.load(f)["gates"]]
    assert gates == ["certify_kernel.bd", "certify_kernel.loc", "certify_kernel.wuc"]

    report_args = parse_args(["report", "-c", path])
    capsys.readouterr()
    first = main(report_args, load_config(report_args), out)
    printed = capsys.readouterr().out
    second = main(report_args, load_config(report_args), out)
    assert first == second == code
    assert capsys.readouterr().out == printed
    assert os.path.exists(os.path.join(out, SUMMARY))


def test_runs_write_identical_certificates(tmp_path):
    config = load_run_config(os.path.join(CONFIGS, "bandlimited_demo.json"))
    written = []
    for name in ("first", "second"):
        out = str(tmp_path / name)
        CertificationPipeline(config, out).run()
        with open(os.path.join(out, CERTIFICATE), "rb") as f:
            written.append(f.read())
    assert written[0] == written[1]


def test_cli_exit_code_for_bad_config(tmp_path):
    path = write_config(tmp_path, with_changes(scenario={"id": "torus"}))
    result = run_cli("run", "-c", path, "-o", str(tmp_path / "out"))
    assert result.returncode == EXIT_CONFIG
    assert "Configuration error" in result.stderr


def test_cli_exit_code_for_missing_stage(tmp_path):
    path = write_config(tmp_path, BANDLIMITED_RUN)
    result = run_cli("build-points", "-c", path, "-o", str(tmp_path / "out"))
    assert result.returncode == EXIT_GATE
    assert "missing upstream stage" in result.stderr


def test_cli_names_the_failing_uniformity_gate(tmp_path):
    result = run_cli("run", "-c", os.path.join(CONFIGS, "jittered_gate.json"), "-o", str(tmp_path / "out"))
    assert result.returncode == EXIT_GATE
    assert "canonical_dual.uniformity" in result.stderr
    with open(tmp_path / "out" / CERTIFICATE, encoding="utf-8") as f:
        certificate = json.load(f)
    assert certificate["passed"] is False


def test_cli_names_the_failing_kernel_gate(tmp_path):
    sinc = with_changes(scenario={**BANDLIMITED_RUN["scenario"], "reg": 0.0},
                        stages=["certify-kernel", "build-points", "build-frame"], frame={"mode": "almost_tight"})
    out = tmp_path / "out"
    result = run_cli("run", "-c", write_config(tmp_path, sinc), "-o", str(out))
    assert result.returncode == EXIT_GATE
    assert "FAIL: gate 'certify_kernel.loc'" in result.stderr
    assert "Unhandled error" not in (out / "certify_rkhs.log").read_text(encoding="utf-8")
    with open(out / "stage_build-frame.json", encoding="utf-8") as f:
        assert [g["gate"] for g in json.load(f)["gates"]] == ["certify_kernel.loc"]
