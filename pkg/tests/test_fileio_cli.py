import json
import os
import subprocess
import sys

import numpy as np
import pytest

from harmflow import geometry as geo
from harmflow import fuchsian as fg
from harmflow import meshes as mh
from harmflow import weights as wt
from harmflow import maps as hm
from harmflow import fileio
from harmflow.errors import ValidationError

np.seterr(over="ignore", invalid="ignore")


def run_cli(*args):
    return subprocess.run([sys.executable, "-m", "harmflow.cli", *args],
                          capture_output=True, text=True)


def test_mesh_round_trip_torus(tmp_path):
    mesh = fileio.snap_to_serialization(mh.build_torus_mesh(grid=3))
    path = tmp_path / "m.mesh"
    fileio.write_mesh(mesh, path)
    loaded = fileio.read_mesh(path)
    assert np.array_equal(loaded.vertices, mesh.vertices)
    assert np.array_equal(loaded.triangles, mesh.triangles)
    assert loaded.corner_words == mesh.corner_words
    assert loaded.quality_stats() == mesh.quality_stats()
    # writing again is byte-identical
    assert fileio.write_mesh(loaded) == fileio.write_mesh(mesh)


def test_mesh_round_trip_genus2(tmp_path):
    group, dom = fileio.cached_group("2,2,2,0,0,0")
    mesh = fileio.snap_to_serialization(
        mh.build_genus2_mesh(group, dom, smooth_iters=5))
    path = tmp_path / "g.mesh"
    fileio.write_mesh(mesh, path)
    loaded = fileio.read_mesh(path)
    assert np.array_equal(loaded.vertices, mesh.vertices)
    assert loaded.quality_stats() == mesh.quality_stats()


def test_weights_and_map_sections(tmp_path):
    mesh = fileio.snap_to_serialization(mh.build_torus_mesh(grid=2))
    bw = wt.biweighted(mesh)
    f = hm.identity_map(bw)
    path = tmp_path / "m.mesh"
    fileio.write_mesh(mesh, path, vertex_weights=bw.mu, edge_weights=bw.omega,
                      map_section=f)
    loaded, sections = fileio.read_mesh(path, with_sections=True)
    assert np.allclose(sections["vertex_weights"], bw.mu, atol=0)
    assert np.allclose(sections["edge_weights"], bw.omega, atol=0)
    assert np.allclose(sections["map"]["values"], f.values, atol=0)


def test_validation_catches_bad_vertex_reference(tmp_path):
    mesh = fileio.snap_to_serialization(mh.build_torus_mesh(grid=2))
    text = fileio.write_mesh(mesh)
    lines = text.splitlines()
    idx = next(i for i, l in enumerate(lines) if l.startswith("triangles"))
    parts = lines[idx + 1].split()
    parts[2] = "99"
    lines[idx + 1] = " ".join(parts)
    p = tmp_path / "bad.mesh"
    p.write_text("\n".join(lines) + "\n")
    report = fileio.validate_files([str(p)])
    assert any("missing vertex" in v for v in report[str(p)])


def test_validation_nonsymmetric_edge_weights(tmp_path):
    mesh = fileio.snap_to_serialization(mh.build_torus_mesh(grid=2))
    bw = wt.biweighted(mesh)
    text = fileio.write_mesh(mesh, vertex_weights=bw.mu, edge_weights=bw.omega)
    lines = text.splitlines()
    # duplicate the first edge-weight line with a different value
    idx = next(i for i, l in enumerate(lines) if l.startswith("edge_weights"))
    n = int(lines[idx].split()[1])
    first = lines[idx + 1].split()
    dup = " ".join(first[:3] + ["0.123456"])
    lines[idx] = f"edge_weights {n + 1}"
    lines.insert(idx + 2, dup)
    p = tmp_path / "asym.mesh"
    p.write_text("\n".join(lines) + "\n")
    report = fileio.validate_files([str(p)])
    assert any("non-symmetric" in v or "incomplete" in v for v in report[str(p)])


def test_well_formed_file_no_violations(tmp_path):
    mesh = fileio.snap_to_serialization(mh.build_torus_mesh(grid=2))
    p = tmp_path / "ok.mesh"
    fileio.write_mesh(mesh, p)
    assert fileio.validate_files([str(p)]) == {str(p): []}


def test_cli_mesh_build_counts(tmp_path):
    out = tmp_path / "m.mesh"
    r = run_cli("mesh-build", "--torus", "1,1", "--grid", "4",
                "--out", str(out))
    assert r.returncode == 0 and "V=16" in r.stdout
    mesh = fileio.read_mesh(out)
    assert mesh.euler_characteristic == 0 and mesh.n_vertices == 16


def test_cli_flow_run_reaches_tolerance(tmp_path):
    mesh_path = tmp_path / "m.mesh"
    log_path = tmp_path / "flow.csv"
    run_cli("mesh-build", "--torus", "1,1", "--grid", "4", "--out", str(mesh_path))
    r = run_cli("flow-run", "--mesh", str(mesh_path), "--map", "sine",
                "--dt", "auto", "--tol", "1e-8", "--log", str(log_path))
    assert r.returncode == 0
    rows = log_path.read_text().strip().splitlines()
    last = rows[-1].split(",")
    assert float(last[2]) <= 1e-8  # tension column of the final row


def test_cli_idempotent_outputs(tmp_path):
    a, b = tmp_path / "a.mesh", tmp_path / "b.mesh"
    run_cli("mesh-build", "--lattice", "1,0,-0.5,0.8660254037844386",
            "--grid", "3", "--out", str(a))
    run_cli("mesh-build", "--lattice", "1,0,-0.5,0.8660254037844386",
            "--grid", "3", "--out", str(b))
    assert a.read_bytes() == b.read_bytes()


def test_cli_study_run_writes_artifacts(tmp_path):
    out = tmp_path / "study"
    r = run_cli("study-run", "--kind", "flat_pl_exactness", "--out", str(out))
    assert r.returncode == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["passed"] is True
    assert (out / "results.csv").exists()


def test_cli_unknown_flag_usage_error(tmp_path):
    r = run_cli("mesh-build", "--nonsense", "1")
    assert r.returncode != 0


def test_cli_error_codes(tmp_path):
    r = run_cli("mesh-build", "--fn", "0,2,2,0,0,0", "--out",
                str(tmp_path / "x.mesh"))
    assert r.returncode == 1  # domain error: nonpositive length


def test_cli_export_group(tmp_path):
    out = tmp_path / "g.txt"
    r = run_cli("export", "--fn", "2,2,2,0,0,0", "--out", str(out))
    assert r.returncode == 0
    text = out.read_text()
    assert text.startswith("harmflow-group v1")
    rows = [l for l in text.splitlines() if l.startswith("generator")]
    assert len(rows) == 4 and len(rows[0].split()) == 11
