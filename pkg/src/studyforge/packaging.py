"""Study metadata export, manifests and reproducible tar.gz archives.

Two archive kinds exist: one secondary-data archive covering every study
under a results root (small files only), and one primary-data archive per
study holding its complete case directories. Given a fixed ``mtime`` both
are byte-identical across runs.
"""

import fnmatch
import gzip
import hashlib
import io
import json
import tarfile
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path, PurePosixPath

from studyforge import __version__
from studyforge.errors import PackagingError

SECONDARY_FILES = ("case_map.csv", "secondary.csv", "study_metadata.json", "report.html")
METADATA_FILE = "study_metadata.json"
SECONDARY_TABLE_FILE = "secondary.csv"


def sha256_file(path, chunk=1 << 20):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        while block := fh.read(chunk):
            h.update(block)
    return h.hexdigest()


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    size: int
    sha256: str


@dataclass
class Manifest:
    entries: list = field(default_factory=list)

    @property
    def paths(self):
        return [e.path for e in self.entries]

    def to_dict(self):
        return {"files": [vars(e) for e in self.entries]}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        return cls([ManifestEntry(**e) for e in doc["files"]])


def _normalize(rel):
    p = PurePosixPath(str(rel).replace("\\", "/"))
    if p.is_absolute() or ".." in p.parts or str(p) in ("", "."):
        raise PackagingError(f"manifest path {rel!r} must be relative and inside the root")
    return str(p)


def manifest(paths, root="."):
    """Hash files and list them sorted by normalized path relative to root."""
    root = Path(root).resolve()
    entries = {}
    for p in paths:
        full = (root / p).resolve()
        try:
            rel = _normalize(full.relative_to(root).as_posix())
        except ValueError:
            raise PackagingError(f"{p} is outside {root}") from None
        if rel in entries:
            raise PackagingError(f"duplicate manifest path {rel!r}")
        try:
            entries[rel] = ManifestEntry(rel, full.stat().st_size, sha256_file(full))
        except OSError as exc:
            raise PackagingError(f"cannot read {full}: {exc}") from None
    return Manifest([entries[k] for k in sorted(entries)])


def _iso(ts):
    return datetime.fromtimestamp(ts, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def export_study_metadata(plan, table, out_dir, created=None, primary_globs=(),
                          missing_cases=()):
    """Write ``study_metadata.json`` into ``out_dir`` (normally the study dir).

    ``table`` (if given) is written to ``secondary.csv`` first; checksums
    then cover every secondary file present in ``out_dir``, so export the
    metadata after the report. ``created`` is a POSIX timestamp, defaulting
    to now.
    """
    from studyforge.secondary_table import save_table

    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        if table is not None:
            save_table(table, out_dir / SECONDARY_TABLE_FILE)
        if not (out_dir / SECONDARY_TABLE_FILE).exists():
            raise PackagingError(f"no collected table in {out_dir}")
        files = [f for f in SECONDARY_FILES if f != METADATA_FILE and (out_dir / f).is_file()]
        checksums = {f: sha256_file(out_dir / f) for f in files}
        meta = {
            "study_name": plan.study_name,
            "created": _iso(time.time() if created is None else created),
            "parameters": list(plan.parameters),
            "case_count": len(plan.cases),
            "row_count": len(table) if table is not None else None,
            "missing_cases": list(missing_cases),
            "primary_globs": list(primary_globs),
            "checksums": checksums,
            "tool_version": __version__,
        }
        path = out_dir / METADATA_FILE
        path.write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise PackagingError(f"cannot write study metadata: {exc}") from exc
    return meta


def _studies(root):
    root = Path(root)
    if not root.is_dir():
        raise PackagingError(f"results root {root} does not exist")
    return sorted(p for p in root.iterdir() if p.is_dir() and (p / "case_map.csv").is_file())


def _primary_globs(sdir, extra):
    globs = list(extra)
    meta = sdir / METADATA_FILE
    if meta.is_file():
        try:
            globs += json.loads(meta.read_text(encoding="utf-8")).get("primary_globs", [])
        except ValueError:
            pass
    return globs


def matches_any(rel, globs):
    name = PurePosixPath(rel).name
    return any(fnmatch.fnmatch(rel, g) or fnmatch.fnmatch(name, g) for g in globs)


def _write_archive(out, members, mtime):
    """Write ``(arcname, path)`` members as a gzip-compressed ustar archive."""
    out = Path(out)
    mtime = int(time.time() if mtime is None else mtime)
    buf = io.BytesIO()
    with tarfile.open(fileobj=buf, mode="w", format=tarfile.USTAR_FORMAT) as tar:
        for arcname, path in sorted(members):
            data = Path(path).read_bytes()
            info = tarfile.TarInfo(arcname)
            info.size = len(data)
            info.mtime = mtime
            info.mode = 0o644
            info.uid = info.gid = 0
            info.uname = info.gname = ""
            tar.addfile(info, io.BytesIO(data))
    with open(out, "wb") as fh:
        with gzip.GzipFile(filename="", mode="wb", fileobj=fh, mtime=mtime) as gz:
            gz.write(buf.getvalue())


def _finish(out, members, mtime):
    if not members:
        raise PackagingError("nothing to archive")
    try:
        _write_archive(out, members, mtime)
        entries = []
        for arcname, path in sorted(members):
            entries.append(ManifestEntry(_normalize(arcname), Path(path).stat().st_size, sha256_file(path)))
    except OSError as exc:
        raise PackagingError(f"cannot write archive {out}: {exc}") from exc
    man = Manifest(entries)
    Path(str(out) + ".manifest.json").write_text(man.to_json(), encoding="utf-8")
    return man


def package_secondary(results_root, out_archive, mtime=None, primary_globs=()):
    """Archive the small per-study files of every study under the root.

    Files matching a primary glob (from ``primary_globs`` or the study's
    metadata) are never included. Returns the manifest, which is also
    written to ``<archive>.manifest.json``.
    """
    studies = _studies(results_root)
    if not studies:
        raise PackagingError(f"no studies under {results_root}")
    members = []
    for sdir in studies:
        globs = _primary_globs(sdir, primary_globs)
        for name in SECONDARY_FILES:
            path = sdir / name
            arcname = f"{sdir.name}/{name}"
            if path.is_file() and not matches_any(name, globs):
                members.append((arcname, path))
    return _finish(out_archive, members, mtime)


def package_primary(results_root, study_name, out_archive, mtime=None):
    """Archive one study directory completely (one archive per study)."""
    sdir = Path(results_root) / study_name
    if sdir not in _studies(results_root):
        raise PackagingError(f"unknown study {study_name!r} under {results_root}")
    out = Path(out_archive).resolve()
    members = []
    for path in sdir.rglob("*"):
        if path.is_file() and path.resolve() != out and not path.name.startswith("."):
            members.append((path.relative_to(Path(results_root)).as_posix(), path))
    return _finish(out_archive, members, mtime)


def unpack(archive, dest):
    """Extract an archive produced by this module into ``dest``."""
    with tarfile.open(archive, "r:gz") as tar:
        if hasattr(tarfile, "data_filter"):
            tar.extractall(dest, filter="data")
        else:
            tar.extractall(dest)
    return Path(dest)
