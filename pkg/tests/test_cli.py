import json
from pathlib import Path

import pytest

from kamkit.cli import main

BEAM_MODEL = {
    "kind": "beam", "d": 2, "R": 2, "nodes": [[1, 0], [0, 2]],
    "rho": [0.7, 1.3], "actions": [0.05, 0.04], "tail": {"0": 0.5},
    "nonlinearity": [[3, [0, 0], 1.0]], "epsilon": 1e-4, "delta": 2,
}


def write_cfg(tmp_path, cfg, name="run.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def read_all(outdir):
    return {p.name: p.read_bytes() for p in Path(outdir).iterdir()
            if p.is_file()}


def test_blocks_writes_partitions_and_table(tmp_path):
    out = tmp_path / "out"
    cfg = write_cfg(tmp_path, {
        "output_dir": str(out),
        "blocks": {"d": 2, "R": 20, "deltas": [1, 2, 3, 4, 5]},
    })
    assert main(["blocks", cfg]) == 0
    files = read_all(out)
    assert sum(1 for n in files if n.startswith("partition_delta_")) == 5
    assert "diameters.txt" in files
    assert "manifest.json" in files


def test_blocks_infinite_delta_gives_spheres(tmp_path):
    out = tmp_path / "out"
    cfg = write_cfg(tmp_path, {
        "output_dir": str(out),
        "blocks": {"d": 2, "R": 4, "deltas": ["inf"]},
    })
    assert main(["blocks", cfg]) == 0
    dump = (out / "partition_delta_inf.txt").read_text()
    for line in dump.splitlines():
        pts = [tuple(int(x) for x in p.split(","))
               for p in line.split("points=")[1].split(";")]
        norms = {x * x + y * y for x, y in pts}
        assert len(norms) == 1 or norms == {0, 1}    # merged low-norm core


def test_blocks_missing_radius_names_the_field(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {"blocks": {"d": 2, "deltas": [1]}})
    assert main(["blocks", cfg]) == 2
    assert "'R'" in capsys.readouterr().err


def test_unknown_key_rejected(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {"blocks": {"d": 2, "R": 4, "deltas": [1],
                                          "Rmax": 9}})
    assert main(["blocks", cfg]) == 2
    assert "Rmax" in capsys.readouterr().err
    cfg = write_cfg(tmp_path, {"blockz": {}})
    assert main(["blocks", cfg]) == 2


def test_scan_beam_defaults_pass_and_record_tau(tmp_path):
    out = tmp_path / "out"
    cfg = write_cfg(tmp_path, {
        "output_dir": str(out), "model": BEAM_MODEL,
        "grid": {"bounds": [[0.5, 0.9], [1.1, 1.5]], "resolution": 8},
        "guard": {"C": 0.1},
    })
    assert main(["scan", cfg]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["guard"]["tau"] == 3          # n + 1 with two nodes
    assert manifest["surviving_measure"] > 0
    assert manifest["melnikov_bad_measure"] > 0   # one cell excised
    assert (out / "surviving.mask").exists()
    assert (out / "first_hypothesis.txt").exists()
    assert (out / "melnikov.txt").exists()


def test_scan_huge_constant_exhausts_the_grid(tmp_path):
    out = tmp_path / "out"
    cfg = write_cfg(tmp_path, {
        "output_dir": str(out), "model": BEAM_MODEL,
        "grid": {"bounds": [[0.5, 0.9], [1.1, 1.5]], "resolution": 4},
        "guard": {"C": 1e9},
    })
    assert main(["scan", cfg]) == 3


def test_scan_is_deterministic(tmp_path):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        cfg = write_cfg(tmp_path, {
            "seed": 11, "output_dir": str(out), "model": BEAM_MODEL,
            "grid": {"bounds": [[0.5, 0.9], [1.1, 1.5]], "resolution": 8},
            "guard": {"C": 0.1},
        }, name=f"{name}.json")
        assert main(["scan", cfg]) == 0
        outs.append(read_all(out))
    assert outs[0] == outs[1]


def test_kam_zero_perturbation_exits_clean(tmp_path):
    out = tmp_path / "out"
    model = dict(BEAM_MODEL, nonlinearity=[])
    cfg = write_cfg(tmp_path, {"output_dir": str(out), "model": model})
    assert main(["kam", cfg]) == 0
    report = (out / "final_report.txt").read_text()
    assert "reached_target=True" in report


def test_kam_beam_eps_series_decreases(tmp_path):
    out = tmp_path / "out"
    cfg = write_cfg(tmp_path, {
        "output_dir": str(out), "model": BEAM_MODEL,
        "schedule": {"max_super": 2, "eps_target": 1e-12},
    })
    assert main(["kam", cfg]) == 0
    eps = [json.loads(line)["eps"]
           for line in (out / "metrics.jsonl").read_text().splitlines()
           if line != "{}"]
    assert eps
    assert all(b < a for a, b in zip(eps, eps[1:]))


def test_kam_singular_threshold_gate(tmp_path, capsys):
    out = tmp_path / "out"
    base = {"kind": "singular", "d": 2, "R": 4, "nodes": [[0, 1], [1, -1]],
            "mass": 1.37, "quintic": 1.0}
    cfg = write_cfg(tmp_path, {
        "output_dir": str(out),
        "model": dict(base, actions=[3.0, 4.0]),      # |I| far too large
    })
    assert main(["kam", cfg]) == 5
    err = capsys.readouterr().err
    assert "margins" in err
    cfg = write_cfg(tmp_path, {
        "output_dir": str(out),
        "model": dict(base, actions=[1e-4, 1.3e-4]),
        # theorem constants are inputs; defaults of 1 are far from sharp
        "threshold": {"constants": {"aleph": 0.25, "eps0": 100.0,
                                    "c29": 2.0}},
    })
    assert main(["kam", cfg]) == 0


def test_manifest_lists_effective_tunables(tmp_path):
    out = tmp_path / "out"
    cfg = write_cfg(tmp_path, {
        "output_dir": str(out),
        "blocks": {"d": 2, "R": 3, "deltas": [2]},
    })
    assert main(["blocks", cfg]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    for key in ("core_cutoff", "grid_resolution", "schedule", "weights",
                "norm", "seed", "workers", "unstable_real_part_factor"):
        assert key in manifest
    assert manifest["schedule"]["delta_theta"] == 2.0
    assert manifest["norm"]["n_theta"] == 8


def test_bad_json_is_a_config_error(tmp_path, capsys):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    assert main(["blocks", str(path)]) == 2
