import os
from pathlib import Path

import pytest

from bpod.cli import main

FAST = ["--config", "paper_a1b1", "--N", "24", "--count", "150", "--pod-modes", "12",
        "--output-projection-ranks", "2 4", "--model-ranks", "1-4", "--re-sweep", "2000",
        "--omega-count", "60"]
OFF = ["--impulse", "false", "--freq", "false", "--spectrum", "false", "--bounds", "false",
       "--re-sweep", "", "--traces", "false"]


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def fast_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("fast")
    assert run("pipeline", "--workdir", d, *FAST) == 0
    return d


def snapshot_tree(d: Path):
    return {p.relative_to(d).as_posix(): (p.stat().st_mtime_ns, p.read_bytes())
            for p in sorted(d.rglob("*")) if p.is_file()}


def test_pipeline_artifact_tree(fast_dir):
    for sub in ("snapshots", "modes", "roms", "reports"):
        assert any((fast_dir / sub).iterdir())
    text = (fast_dir / "manifest.txt").read_text()
    for key in ("config_hash: ", "manifest_version: 1", "version.numpy: ",
                "stage.evaluate.status: complete", "file.snapshots/direct.bpr.sha256: "):
        assert key in text
    assert (fast_dir / "config.cfg").read_text().startswith("[case]")


def test_rerun_skips_completed_stages(fast_dir):
    before = snapshot_tree(fast_dir)
    assert run("pipeline", "--workdir", fast_dir, *FAST) == 0
    after = snapshot_tree(fast_dir)
    for rel, (mtime, data) in before.items():
        if rel in ("manifest.txt", "config.cfg"):
            continue
        assert after[rel] == (mtime, data), rel


def test_changed_setting_reruns_downstream_only(fast_dir, tmp_path):
    import shutil
    d = tmp_path / "w"
    shutil.copytree(fast_dir, d)
    before = snapshot_tree(d)
    assert run("pipeline", "--workdir", d, *FAST, "--omega-count", "61") == 0
    after = snapshot_tree(d)
    assert after["snapshots/direct.bpr"] == before["snapshots/direct.bpr"]
    assert after["modes/pod.bpr"] == before["modes/pod.bpr"]
    assert after["reports/freq_response.csv"][1] != before["reports/freq_response.csv"][1]


def test_reports_are_deterministic(fast_dir, tmp_path):
    assert run("pipeline", "--workdir", tmp_path, *FAST) == 0
    for p in sorted((fast_dir / "reports").glob("*.csv")):
        assert (tmp_path / "reports" / p.name).read_bytes() == p.read_bytes(), p.name


def test_partial_verbs(tmp_path):
    assert run("pod", "--workdir", tmp_path, *FAST) == 0
    assert (tmp_path / "modes" / "pod.bpr").is_file()
    assert not (tmp_path / "snapshots" / "adjoint_s2.bpr").exists()
    text = (tmp_path / "manifest.txt").read_text()
    assert "stage.pod.status: complete" in text and "stage.adjoint" not in text


def test_no_evaluation_produces_only_snapshots_and_modes(tmp_path):
    assert run("pipeline", "--workdir", tmp_path, *FAST, *OFF) == 0
    assert (tmp_path / "snapshots" / "direct.bpr").is_file()
    assert (tmp_path / "modes" / "bpod_s4.bpr").is_file()
    assert not (tmp_path / "roms").exists()
    evaluation = {"error_norms.csv", "freq_response.csv", "energy.csv", "spectrum.csv",
                  "reynolds.csv"}
    assert not evaluation & {p.name for p in (tmp_path / "reports").glob("*")}


def test_flipped_byte_is_named(fast_dir, tmp_path, capsys):
    import shutil
    d = tmp_path / "w"
    shutil.copytree(fast_dir, d)
    p = d / "snapshots" / "direct.bpr"
    buf = bytearray(p.read_bytes())
    buf[len(buf) // 2] ^= 0x01
    p.write_bytes(bytes(buf))
    assert run("verify", "--workdir", d, "--skip-standalone") == 1
    assert "snapshots/direct.bpr" in capsys.readouterr().err
    # a rerun treats the corrupted stage as stale and regenerates it
    assert run("pipeline", "--workdir", d, *FAST) == 0
    assert p.read_bytes() == (fast_dir / "snapshots" / "direct.bpr").read_bytes()


def test_manifest_version_mismatch(fast_dir, tmp_path, capsys):
    import shutil
    d = tmp_path / "w"
    shutil.copytree(fast_dir, d)
    m = d / "manifest.txt"
    m.write_text(m.read_text().replace("manifest_version: 1", "manifest_version: 0"))
    assert run("verify", "--workdir", d) == 1
    assert "version" in capsys.readouterr().err.lower()


def test_missing_artifacts_listed(fast_dir, tmp_path, capsys):
    import shutil
    d = tmp_path / "w"
    shutil.copytree(fast_dir, d)
    (d / "modes" / "pod.bpr").unlink()
    assert run("verify", "--workdir", d) == 1
    out = capsys.readouterr().out
    assert "missing artifacts" in out and "modes/pod.bpr" in out


def test_verify_reports_each_check(fast_dir, capsys):
    rc = run("-v", "verify", "--workdir", fast_dir, "--skip-standalone")
    out = capsys.readouterr().out.splitlines()
    checks = [l for l in out if l.startswith("[")]
    assert checks and all(l.startswith(("[PASS] criterion", "[FAIL] criterion")) for l in checks)
    assert out[-1].endswith("checks passed")
    assert rc == (0 if all(l.startswith("[PASS]") for l in checks) else 1)


@pytest.mark.parametrize("argv", [
    [],
    ["frobnicate"],
    ["pipeline"],
    ["pipeline", "--workdir", "x", "--N", "many"],
    ["pipeline", "--workdir", "x", "--config", "no_such_config"],
    ["pipeline", "--workdir", "x", "--Re", "-5"],
    ["pipeline", "--workdir", "x", "--model-ranks", "5 1"],
])
def test_usage_errors(argv, tmp_path, capsys):
    os.chdir(tmp_path)
    assert run(*argv) == 2
    assert "error" in capsys.readouterr().err


def test_verify_without_run_is_usage_error(tmp_path):
    assert run("verify", "--workdir", tmp_path) == 2


def test_numerical_failure_exit_code(tmp_path, capsys):
    rc = run("pipeline", "--workdir", tmp_path, "--alpha", "1.02", "--beta", "0", "--Re", "6100",
             "--N", "32")
    assert rc == 1
    assert "build" in capsys.readouterr().err
    assert "stage.build.status: incomplete" in (tmp_path / "manifest.txt").read_text()


def test_verbose_flag_in_either_position(fast_dir):
    assert run("-v", "evaluate", "--workdir", fast_dir, *FAST) == 0
    assert run("evaluate", "--workdir", fast_dir, *FAST, "-v") == 0


def test_slice_requires_localized_case(fast_dir):
    assert run("simulate", "--workdir", fast_dir, *FAST, "--slice", "3") == 2


def test_slice_export(localized_run):
    d = localized_run.workdir
    assert run("simulate", "--workdir", d, "--config", "paper_localized", "--slice", "16") == 0
    for label in ("initial", "peak"):
        lines = (d / "reports" / f"slice_{label}_y16.csv").read_text().splitlines()
        assert lines[0] == "x,z,v" and len(lines) == 1 + 16 * 16
    assert run("simulate", "--workdir", d, "--config", "paper_localized", "--slice", "99") == 2
