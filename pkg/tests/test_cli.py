import json
import logging

import numpy as np
import pytest

from paramsweep.cli import (
    InputError,
    export_real_count_grid,
    load_step1,
    main,
    parse_input_file,
    write_failure_report,
)
from paramsweep.datafile import read_collected
from paramsweep.mesh import MeshSpec, Range
from paramsweep.paramhom import PointStatus, run_sweep, step1
from paramsweep.tracker import TrackerConfig

CUBE_INPUT = """
% quick cube run
CONFIG
  seed: 7;
  max_retries: 2;
END;

INPUT
  variable z;
  parameter x, y;
  function f;
  f = x^6 + y^6 + z^6 - 1;
END;

MESH
  x range -1.5 1.5 5;
  y range -1.5 1.5 5;
END;
"""


def _write_input(tmp_path, text=CUBE_INPUT, name="cube.input"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_shipped_inputs_parse():
    import pathlib

    root = pathlib.Path(__file__).resolve().parent.parent / "inputs"
    cube = parse_input_file((root / "cube.input").read_text())
    assert cube.system.var_names == ("z",)
    assert cube.mesh.size == 40_000
    monks = parse_input_file((root / "monks.input").read_text())
    assert monks.system.var_names == ("z0", "z1", "z2", "z3")
    assert monks.system.param_names == ("mu0", "mu1", "g")
    assert monks.mesh.size == 100


def test_parse_input_file_full():
    inp = parse_input_file(CUBE_INPUT)
    assert inp.system.var_names == ("z",)
    assert inp.system.param_names == ("x", "y")
    assert inp.config["seed"] == "7"
    assert inp.mesh == MeshSpec((Range(-1.5, 1.5, 5), Range(-1.5, 1.5, 5)))
    assert inp.param_file is None


def test_parse_input_requires_input_section():
    with pytest.raises(InputError, match="INPUT"):
        parse_input_file("CONFIG\nseed: 1;\nEND;\n")


def test_parse_input_requires_exactly_one_point_source():
    no_points = CUBE_INPUT.replace("MESH", "% MESH").replace("END;\n\nINPUT", "END;\n\nINPUT")
    text = """
INPUT
  variable z;
  parameter x;
  function f;
  f = z^2 - x;
END;
"""
    with pytest.raises(InputError, match="exactly one"):
        parse_input_file(text)
    both = text + "\nMESH\n  x range 0 1 3;\nEND;\n"
    both = both.replace("INPUT\n", "CONFIG\n  param_file: pts.txt;\nEND;\nINPUT\n", 1)
    with pytest.raises(InputError, match="exactly one"):
        parse_input_file(both)


def test_parse_input_rejects_unknown_config_key():
    bad = CUBE_INPUT.replace("seed: 7;", "warp_speed: 9;")
    with pytest.raises(InputError, match="warp_speed"):
        parse_input_file(bad)


def test_parse_input_mesh_errors():
    with pytest.raises(InputError, match="unknown parameter"):
        parse_input_file(CUBE_INPUT.replace("x range", "q range"))
    with pytest.raises(InputError, match="does not cover"):
        parse_input_file(CUBE_INPUT.replace("  y range -1.5 1.5 5;\n", ""))


def test_parse_input_system_errors_report_file_lines():
    bad = CUBE_INPUT.replace("f = x^6 + y^6 + z^6 - 1;", "f = x^6 + w;")
    with pytest.raises(Exception) as err:
        parse_input_file(bad)
    assert "w" in str(err.value)
    assert "line 12" in str(err.value)


def test_parse_input_inline_p0():
    text = CUBE_INPUT.replace("seed: 7;", "seed: 7;\n  p0: 0.1 0.2 0.3 0.4;")
    inp = parse_input_file(text)
    assert np.allclose(inp.p0, [0.1 + 0.2j, 0.3 + 0.4j])
    with pytest.raises(InputError, match="p0"):
        parse_input_file(
            CUBE_INPUT.replace("seed: 7;", "seed: 7;\n  p0: 0.1 0.2;")
        )


def test_solve_end_to_end(tmp_path, caplog):
    inp = _write_input(tmp_path)
    out = tmp_path / "run"
    with caplog.at_level(logging.INFO, logger="paramsweep"):
        code = main([
            "solve", inp, "--out", str(out), "--workers", "2",
            "--verify-step1", "--export-csv",
        ])
    assert code == 0
    assert "step1: 6 solutions, verified" in caplog.text

    header, records = read_collected(out / "collected.dat")
    assert header.n_points == 25
    assert header.param_names == ("x", "y")
    assert len(records) == 25
    assert (out / "step1.json").exists()
    assert (out / "failure_report.txt").exists()
    assert (out / "timing_summary.txt").exists()
    assert "0 failed points" in (out / "failure_report.txt").read_text()

    csv = (out / "real_counts.csv").read_text().splitlines()
    assert csv[0] == "x,y,n_solutions,n_real,status"
    assert len(csv) == 26
    rows = {}
    for line in csv[1:]:
        x, y, nsol, nreal, status = line.split(",")
        rows[(float(x), float(y))] = (int(nsol), int(nreal), status)
    # z^6 = 1 at the origin: six roots, two of them real
    assert rows[(0.0, 0.0)] == (6, 2, "Complete")
    # outside the unit superellipse there are no real roots
    for (x, y), (nsol, nreal, status) in rows.items():
        if x**6 + y**6 > 1:
            assert nreal == 0
        assert nsol == 6
        assert status == "Complete"

    sol_doc = json.loads((out / "solutions.json").read_text())
    assert sol_doc["n_points"] == 25
    assert len(sol_doc["points"]) == 25
    # JSON round-trips the collected values exactly
    for rec, jpt in zip(records, sol_doc["points"]):
        assert rec.index == jpt["index"]
        for s, js in zip(rec.solutions, jpt["solutions"]):
            for c, (re, im) in zip(s.coords, js["coords"]):
                assert c == complex(re, im)


def test_solve_missing_input_file(tmp_path, capsys):
    code = main(["solve", str(tmp_path / "nope.input")])
    assert code == 1


def test_solve_exit_2_on_unresolved(tmp_path):
    inp = _write_input(tmp_path)
    out = tmp_path / "run2"
    code = main([
        "solve", inp, "--out", str(out), "--max-retries", "0",
        "--inject-failure-at", "3",
    ])
    assert code == 2
    _, records = read_collected(out / "collected.dat")
    assert records[3].status == "Unresolved"
    report = (out / "failure_report.txt").read_text()
    assert "unresolved points:" in report
    assert "point 3" in report


def test_solve_injected_failure_resolved_and_reported(tmp_path):
    inp = _write_input(tmp_path)
    out = tmp_path / "run3"
    code = main([
        "solve", inp, "--out", str(out), "--max-retries", "2",
        "--inject-failure-at", "3",
    ])
    assert code == 0
    report = (out / "failure_report.txt").read_text()
    assert "points resolved after retries:" in report
    assert "retries_used=1" in report
    assert "status=Complete" in report


def test_solve_step1_only_and_reuse(tmp_path, caplog):
    inp = _write_input(tmp_path)
    out1 = tmp_path / "first"
    assert main(["solve", inp, "--out", str(out1), "--step1-only"]) == 0
    assert (out1 / "step1.json").exists()
    assert not (out1 / "collected.dat").exists()

    out2 = tmp_path / "second"
    with caplog.at_level(logging.INFO, logger="paramsweep"):
        code = main([
            "solve", inp, "--out", str(out2), "--reuse-step1", str(out1),
        ])
    assert code == 0
    assert "reusing 6 solutions" in caplog.text
    # reused p0 must match the artifact
    sysm = parse_input_file(CUBE_INPUT).system
    r1 = load_step1(out1 / "step1.json", sysm)
    header, _ = read_collected(out2 / "collected.dat")
    assert np.array_equal(header.p0, r1.p0)


def test_solve_reads_stdin(tmp_path, monkeypatch):
    import io

    out = tmp_path / "stdin_run"
    monkeypatch.setattr("sys.stdin", io.StringIO(CUBE_INPUT))
    code = main(["solve", "-", "--out", str(out)])
    assert code == 0
    assert (out / "collected.dat").exists()


def test_solve_out_dir_from_environment(tmp_path, monkeypatch):
    inp = _write_input(tmp_path)
    env_out = tmp_path / "env_run"
    monkeypatch.setenv("SWEEP_OUT_DIR", str(env_out))
    monkeypatch.chdir(tmp_path)
    assert main(["solve", inp]) == 0
    assert (env_out / "collected.dat").exists()


def test_solve_with_param_file(tmp_path):
    (tmp_path / "pts.txt").write_text("0.0 0.0 0.0 0.0\n0.25 0.0 -0.5 0.0\n")
    text = CUBE_INPUT.replace("seed: 7;", "seed: 7;\n  param_file: pts.txt;")
    text = text[: text.index("MESH")]
    inp = _write_input(tmp_path, text=text, name="filecube.input")
    out = tmp_path / "file_run"
    assert main(["solve", inp, "--out", str(out)]) == 0
    header, records = read_collected(out / "collected.dat")
    assert header.source == "file"
    assert header.n_points == 2
    # CSV export must be refused for file-based runs
    with pytest.raises(InputError, match="grid"):
        export_real_count_grid(
            header, records, MeshSpec((Range(0, 1, 2), Range(0, 1, 1)))
        )


def test_export_subcommand(tmp_path):
    inp = _write_input(tmp_path)
    out = tmp_path / "run4"
    assert main(["solve", inp, "--out", str(out)]) == 0
    csv_path = tmp_path / "again.csv"
    json_path = tmp_path / "again.json"
    code = main([
        "export", inp, str(out), "--csv", str(csv_path), "--json", str(json_path),
    ])
    assert code == 0
    assert csv_path.read_text().startswith("x,y,n_solutions")
    assert json.loads(json_path.read_text())["n_points"] == 25


def test_failure_report_lists_singular_endpoint_without_retry(tmp_path, quad_system):
    # a target exactly on the discriminant: solutions merge, flagged
    # singular, but the point itself completes without retries
    rng = np.random.default_rng(5)
    r1 = step1(quad_system, TrackerConfig(), rng)
    sweep = run_sweep(
        quad_system, r1, [np.array([0j])], TrackerConfig(), 2, rng
    )
    pr = sweep.point_results[0]
    assert pr.retries_used == 0
    report = write_failure_report(sweep)
    assert "singular" in report
    assert "0 failed points" in report


def test_cube_discriminant_target_reported_not_retried(cube_system, tmp_path):
    rng = np.random.default_rng(9)
    cfg = TrackerConfig()
    r1 = step1(cube_system, cfg, rng)
    sweep = run_sweep(
        cube_system, r1, [np.array([1.0 + 0j, 0j])], cfg, 3, rng
    )
    pr = sweep.point_results[0]
    assert pr.retries_used == 0
    assert pr.status in (PointStatus.COMPLETE, PointStatus.HAD_FAILURES)
    assert any(pr.solutions.singular_flags)
    report = write_failure_report(sweep)
    assert "singular endpoints" in report
    assert "point 0" in report
