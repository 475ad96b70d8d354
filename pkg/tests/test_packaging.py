import hashlib
import json
import shutil
import subprocess
import tarfile

import pytest

from conftest import run_quadratic
from studyforge import packaging
from studyforge.errors import PackagingError
from studyforge.runner import load_plan
from studyforge.secondary_table import collect_study, load_table

EPOCH = 1_700_000_000


def export(root, name="quadratic", created=EPOCH):
    sdir = root / name
    table, missing = collect_study(sdir, "secondary.csv")
    return packaging.export_study_metadata(
        load_plan(sdir), table, sdir, created=created, primary_globs=["*.h5"], missing_cases=missing)


def test_metadata_fields(quadratic_root):
    meta = export(quadratic_root)
    on_disk = json.loads((quadratic_root / "quadratic" / "study_metadata.json").read_text())
    assert on_disk == meta
    assert meta["case_count"] == 6
    assert meta["row_count"] == 30
    assert meta["parameters"] == ["A", "B"]
    assert meta["created"] == "2023-11-14T22:13:20Z"
    assert meta["missing_cases"] == []
    for name, digest in meta["checksums"].items():
        data = (quadratic_root / "quadratic" / name).read_bytes()
        assert hashlib.sha256(data).hexdigest() == digest
    assert set(meta["checksums"]) == {"case_map.csv", "secondary.csv"}


@pytest.mark.skipif(shutil.which("sha256sum") is None, reason="sha256sum not installed")
def test_metadata_checksum_matches_external_tool(quadratic_root):
    meta = export(quadratic_root)
    out = subprocess.run(["sha256sum", "secondary.csv"], cwd=quadratic_root / "quadratic",
                         capture_output=True, text=True, check=True).stdout
    assert out.split()[0] == meta["checksums"]["secondary.csv"]


def test_metadata_requires_table(tmp_path, quadratic_root):
    plan = load_plan(quadratic_root / "quadratic")
    with pytest.raises(PackagingError):
        packaging.export_study_metadata(plan, None, tmp_path / "empty")


def two_studies(tmp_path):
    root = tmp_path / "results"
    for name in ("study_a", "study_b"):
        run_quadratic(root, name)
        export(root, name)
    return root


def test_secondary_archive_contents(tmp_path):
    root = two_studies(tmp_path)
    (root / "study_a" / "secondary.csv").with_name("stray.h5").write_bytes(b"x")
    out = tmp_path / "secondary.tar.gz"
    man = packaging.package_secondary(root, out, mtime=EPOCH)
    expected = sorted(f"{s}/{f}" for s in ("study_a", "study_b")
                      for f in ("case_map.csv", "secondary.csv", "study_metadata.json"))
    assert man.paths == expected
    with tarfile.open(out) as tar:
        names = tar.getnames()
        assert names == expected
        assert all(m.mtime == EPOCH for m in tar.getmembers())
    assert not any(n.endswith(".h5") for n in names)
    saved = packaging.Manifest.from_json((tmp_path / "secondary.tar.gz.manifest.json").read_text())
    assert saved == man


def test_secondary_excludes_primary_glob_named_file(tmp_path):
    root = two_studies(tmp_path)
    out = tmp_path / "s.tar.gz"
    man = packaging.package_secondary(root, out, mtime=EPOCH, primary_globs=["secondary.csv"])
    assert not any(p.endswith("secondary.csv") for p in man.paths)


def test_archives_are_reproducible(tmp_path):
    root = two_studies(tmp_path)
    a, b = tmp_path / "a.tar.gz", tmp_path / "b.tar.gz"
    packaging.package_secondary(root, a, mtime=EPOCH)
    packaging.package_secondary(root, b, mtime=EPOCH)
    assert a.read_bytes() == b.read_bytes()
    packaging.package_primary(root, "study_a", a, mtime=EPOCH)
    packaging.package_primary(root, "study_a", b, mtime=EPOCH)
    assert a.read_bytes() == b.read_bytes()


def test_unpack_repack_roundtrip(tmp_path):
    root = two_studies(tmp_path)
    first = packaging.package_secondary(root, tmp_path / "a.tar.gz", mtime=EPOCH)
    restored = packaging.unpack(tmp_path / "a.tar.gz", tmp_path / "restored")
    second = packaging.package_secondary(restored, tmp_path / "b.tar.gz", mtime=EPOCH)
    assert first == second
    assert (tmp_path / "a.tar.gz").read_bytes() == (tmp_path / "b.tar.gz").read_bytes()


def test_primary_archive_single_study(tmp_path):
    root = two_studies(tmp_path)
    out = tmp_path / "primary.tar.gz"
    man = packaging.package_primary(root, "study_a", out, mtime=EPOCH)
    assert all(p.startswith("study_a/") for p in man.paths)
    assert "study_a/0/stdout.log" in man.paths
    assert "study_a/0/field.h5" in man.paths
    with tarfile.open(out) as tar:
        assert tar.getnames() == man.paths
    with pytest.raises(PackagingError):
        packaging.package_primary(root, "nope", out)


def test_primary_archive_inside_study_dir_is_skipped(tmp_path):
    root = two_studies(tmp_path)
    out = root / "study_a" / "primary.tar.gz"
    packaging.package_primary(root, "study_a", out, mtime=EPOCH)
    man = packaging.package_primary(root, "study_a", out, mtime=EPOCH)
    assert "study_a/primary.tar.gz" not in man.paths


def test_manifest_empty_and_order_independent(tmp_path):
    assert packaging.manifest([], tmp_path).entries == []
    for name in ("b.txt", "a.txt", "sub/c.txt"):
        (tmp_path / name).parent.mkdir(exist_ok=True)
        (tmp_path / name).write_text(name)
    m1 = packaging.manifest(["b.txt", "sub/c.txt", "a.txt"], tmp_path)
    m2 = packaging.manifest(["sub/c.txt", "a.txt", "b.txt"], tmp_path)
    assert m1 == m2
    assert m1.paths == ["a.txt", "b.txt", "sub/c.txt"]
    assert m1.entries[0].sha256 == hashlib.sha256(b"a.txt").hexdigest()
    assert m1.entries[0].size == 5


def test_manifest_rejects_outside_paths(tmp_path):
    (tmp_path / "x").write_text("")
    with pytest.raises(PackagingError):
        packaging.manifest(["../x"], tmp_path / "sub")
    with pytest.raises(PackagingError):
        packaging.manifest(["x", "./x"], tmp_path)


def test_package_empty_root(tmp_path):
    (tmp_path / "results").mkdir()
    with pytest.raises(PackagingError):
        packaging.package_secondary(tmp_path / "results", tmp_path / "o.tar.gz")


def test_collected_table_in_metadata_matches(quadratic_root):
    export(quadratic_root)
    table = load_table(quadratic_root / "quadratic" / "secondary.csv")
    assert len(table) == 30
