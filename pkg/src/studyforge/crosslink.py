"""Ledger of published artifacts, their PIDs and reciprocal cross-links.

A milestone groups the artifacts that belong to one publication event (the
report, the code snapshot, data sets, the container image and its recipe).
Meshing a milestone makes every artifact reference every other one, so each
repository metadata record leads to all the rest.
"""

import json
import os
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path

from studyforge.errors import LedgerError

KINDS = (
    "report", "code-snapshot", "secondary-data", "primary-data",
    "image", "recipe", "live-repo",
)
REFERENCES = "References"
IS_REFERENCED_BY = "IsReferencedBy"
IS_SUPPLEMENT_TO = "IsSupplementTo"
IS_NEW_VERSION_OF = "IsNewVersionOf"
RELATIONS = (REFERENCES, IS_REFERENCED_BY, IS_SUPPLEMENT_TO, IS_NEW_VERSION_OF)
_INVERSE = {REFERENCES: IS_REFERENCED_BY, IS_REFERENCED_BY: REFERENCES}

FLAT_REFERENCED_BY = "dc.relation.isreferencedby"

_DOI_RE = re.compile(r"10\.\d{4,9}(?:\.\d+)*/\S+")
_URL_RE = re.compile(r"https?://[^\s/]+\S*")
_SLUG_RE = re.compile(r"[a-z0-9]+")
_ID_RE = re.compile(r"[a-z0-9][a-z0-9_.-]*")
_TAG_RE = re.compile(r"[0-9]{4}-[a-z0-9]+-[a-z0-9]+(-r[0-9]+)?")
_VERSION_SUFFIX_RE = re.compile(r"(.*)-v(\d+)")

# Which side of an unordered pair does the referencing; lower ranks first.
_REFERENCE_RANK = {kind: i for i, kind in enumerate(KINDS)}


def is_doi(pid):
    return bool(_DOI_RE.fullmatch(pid or ""))


def make_tag(year, venue, topic, revision=None):
    """Milestone tag ``<year>-<venue>-<topic>[-r<revision>]``."""
    year = str(year)
    if not re.fullmatch(r"[0-9]{4}", year):
        raise LedgerError(f"year must have four digits, got {year!r}")
    for label, slug in (("venue", venue), ("topic", topic)):
        if not isinstance(slug, str) or not _SLUG_RE.fullmatch(slug):
            raise LedgerError(f"{label} {slug!r} must match [a-z0-9]+")
    tag = f"{year}-{venue}-{topic}"
    if revision is not None:
        if isinstance(revision, bool) or not isinstance(revision, int) or revision < 1:
            raise LedgerError(f"revision must be a positive integer, got {revision!r}")
        tag += f"-r{revision}"
    return tag


def validate_tag(s):
    return isinstance(s, str) and _TAG_RE.fullmatch(s) is not None


@dataclass
class ArtifactRecord:
    local_id: str
    kind: str
    pid: str = ""
    title: str = ""
    version_label: str = None
    vcs_tag: str = None

    def __post_init__(self):
        if not isinstance(self.local_id, str) or not _ID_RE.fullmatch(self.local_id):
            raise LedgerError(f"invalid local id {self.local_id!r}")
        if self.kind not in KINDS:
            raise LedgerError(f"unknown artifact kind {self.kind!r}")
        self.pid = self.pid or ""
        if self.kind == "live-repo":
            if not _URL_RE.fullmatch(self.pid):
                raise LedgerError(f"live-repo {self.local_id!r} needs a URL, got {self.pid!r}")
        elif self.pid and not (is_doi(self.pid) or _URL_RE.fullmatch(self.pid)):
            raise LedgerError(f"malformed DOI {self.pid!r} for {self.local_id!r}")

    @property
    def identifier_type(self):
        return "DOI" if is_doi(self.pid) else "URL"


@dataclass(frozen=True)
class Link:
    source: str
    target: str
    relation: str

    def __post_init__(self):
        if self.source == self.target:
            raise LedgerError(f"self-link on {self.source!r}")
        if self.relation not in RELATIONS:
            raise LedgerError(f"unknown relation {self.relation!r}")

    def to_dict(self):
        return {"from": self.source, "to": self.target, "relation": self.relation}


@dataclass
class Milestone:
    name: str
    artifacts: list = field(default_factory=list)
    tag: str = None


@dataclass(frozen=True)
class LedgerFinding:
    code: str
    message: str
    subjects: tuple = ()

    def to_dict(self):
        return {"code": self.code, "message": self.message, "subjects": list(self.subjects)}


class Ledger:
    """Artifacts, links and milestones; persisted as one JSON file.

    When ``path`` is set every mutating call saves the ledger atomically,
    guarded by a ``<path>.lock`` file against concurrent writers.
    """

    def __init__(self, path=None):
        self.path = Path(path) if path is not None else None
        self.artifacts = {}
        self.links = []
        self.milestones = {}
        self.last_mesh_added = 0

    # persistence

    @classmethod
    def load(cls, path):
        path = Path(path)
        ledger = cls(path)
        if not path.exists():
            return ledger
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
            for rec in doc.get("artifacts", []):
                art = ArtifactRecord(**rec)
                ledger.artifacts[art.local_id] = art
            for ln in doc.get("links", []):
                ledger.links.append(Link(ln["from"], ln["to"], ln["relation"]))
            for ms in doc.get("milestones", []):
                ledger.milestones[ms["name"]] = Milestone(ms["name"], list(ms["artifacts"]), ms.get("tag"))
        except (ValueError, KeyError, TypeError) as exc:
            raise LedgerError(f"corrupt ledger {path}: {exc}") from None
        ledger._check_links()
        return ledger

    def to_dict(self):
        return {
            "artifacts": [asdict(a) for a in self.artifacts.values()],
            "links": [ln.to_dict() for ln in self.links],
            "milestones": [asdict(m) for m in self.milestones.values()],
        }

    def save(self, path=None):
        path = Path(path or self.path)
        lock = path.with_name(path.name + ".lock")
        try:
            fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise LedgerError(f"ledger is locked by another writer ({lock})") from None
        try:
            os.close(fd)
            tmp = path.with_name(f".{path.name}.tmp")
            tmp.write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")
            os.replace(tmp, path)
        finally:
            lock.unlink(missing_ok=True)

    def _persist(self):
        if self.path is not None:
            self.save()

    def __eq__(self, other):
        if not isinstance(other, Ledger):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    # queries

    def get(self, local_id):
        try:
            return self.artifacts[local_id]
        except KeyError:
            raise LedgerError(f"unknown artifact {local_id!r}") from None

    def milestone(self, name):
        try:
            return self.milestones[name]
        except KeyError:
            raise LedgerError(f"unknown milestone {name!r}") from None

    def outgoing(self, local_id):
        return [ln for ln in self.links if ln.source == local_id]

    def has_pair(self, a, b):
        """True if a and b are joined by a reciprocal References pair."""
        links = set(self.links)
        return (
            (Link(a, b, REFERENCES) in links and Link(b, a, IS_REFERENCED_BY) in links)
            or (Link(b, a, REFERENCES) in links and Link(a, b, IS_REFERENCED_BY) in links)
        )

    def _check_links(self):
        for ln in self.links:
            for end in (ln.source, ln.target):
                if end not in self.artifacts:
                    raise LedgerError(f"link {ln} refers to unknown artifact {end!r}")

    # mutations

    def add_link(self, source, target, relation):
        """Store a link, plus its inverse for References/IsReferencedBy."""
        self.get(source), self.get(target)
        new = [Link(source, target, relation)]
        if relation in _INVERSE:
            new.append(Link(target, source, _INVERSE[relation]))
        added = 0
        for ln in new:
            if ln not in self.links:
                self.links.append(ln)
                added += 1
        self._persist()
        return added

    def add_milestone(self, name, artifact_ids, tag=None):
        if not isinstance(name, str) or not _ID_RE.fullmatch(name):
            raise LedgerError(f"invalid milestone name {name!r}")
        if name in self.milestones:
            raise LedgerError(f"milestone {name!r} already exists")
        ids = list(dict.fromkeys(artifact_ids))
        for i in ids:
            self.get(i)
        self.milestones[name] = Milestone(name, ids, tag)
        self._persist()
        return self.milestones[name]


def add_artifact(ledger, rec):
    if rec.local_id in ledger.artifacts:
        raise LedgerError(f"duplicate artifact id {rec.local_id!r}")
    ledger.artifacts[rec.local_id] = rec
    ledger._persist()
    return ledger


def _ordered_pair(ledger, a, b):
    """(referencing, referenced) for a pair; live repos are always referenced."""
    ka, kb = ledger.get(a).kind, ledger.get(b).kind
    if (_REFERENCE_RANK[ka], a) <= (_REFERENCE_RANK[kb], b):
        return a, b
    return b, a


def cross_link_mesh(ledger, milestone):
    """Reciprocally link every unordered artifact pair of a milestone.

    Returns the ledger; ``ledger.last_mesh_added`` holds the number of pairs
    that were missing. Running it again adds nothing.
    """
    ms = ledger.milestone(milestone)
    ids = ms.artifacts
    added = 0
    for i, a in enumerate(ids):
        for b in ids[i + 1:]:
            if ledger.has_pair(a, b):
                continue
            if Link(b, a, REFERENCES) in ledger.links or Link(a, b, IS_REFERENCED_BY) in ledger.links:
                src, dst = b, a
            elif Link(a, b, REFERENCES) in ledger.links or Link(b, a, IS_REFERENCED_BY) in ledger.links:
                src, dst = a, b
            else:
                src, dst = _ordered_pair(ledger, a, b)
            for ln in (Link(src, dst, REFERENCES), Link(dst, src, IS_REFERENCED_BY)):
                if ln not in ledger.links:
                    ledger.links.append(ln)
            added += 1
    ledger.last_mesh_added = added
    ledger._persist()
    return ledger


def validate_milestone(ledger, milestone):
    ms = ledger.milestone(milestone)
    findings = []
    arts = [ledger.get(i) for i in ms.artifacts]
    kinds = {a.kind for a in arts}
    for required in ("report", "code-snapshot"):
        if required not in kinds:
            findings.append(LedgerFinding(
                "missing-kind", f"milestone {ms.name!r} has no {required}", (required,)))
    if not ms.tag:
        findings.append(LedgerFinding("missing-tag", f"milestone {ms.name!r} has no tag"))
    elif not validate_tag(ms.tag):
        findings.append(LedgerFinding(
            "bad-tag", f"tag {ms.tag!r} does not follow year-venue-topic[-rN]", (ms.tag,)))
    for a in arts:
        if not a.pid:
            findings.append(LedgerFinding("missing-pid", f"{a.local_id!r} has no PID", (a.local_id,)))
        if a.kind == "code-snapshot" and not a.vcs_tag:
            findings.append(LedgerFinding(
                "missing-vcs-tag", f"code snapshot {a.local_id!r} has no VCS tag", (a.local_id,)))
    ids = ms.artifacts
    for i, a in enumerate(ids):
        for b in ids[i + 1:]:
            if not ledger.has_pair(a, b):
                findings.append(LedgerFinding(
                    "missing-link", f"{a!r} and {b!r} are not cross-linked", (a, b)))
    return findings


def render_repo_metadata(ledger, local_id):
    """Repository metadata record (JSON text) for one artifact.

    ``relatedIdentifiers`` lists the artifact's outgoing links; the flat
    ``dc.relation.isreferencedby`` field lists the PIDs that reference it.
    """
    art = ledger.get(local_id)
    related = []
    referenced_by = []
    for ln in ledger.outgoing(local_id):
        other = ledger.get(ln.target)
        related.append({
            "relatedIdentifier": other.pid,
            "relatedIdentifierType": other.identifier_type,
            "relationType": ln.relation,
        })
        if ln.relation == IS_REFERENCED_BY:
            referenced_by.append(other.pid)
    record = {
        "identifier": {"identifier": art.pid, "identifierType": art.identifier_type},
        "title": art.title,
        "resourceType": art.kind,
        "version": art.version_label,
        "relatedIdentifiers": related,
        FLAT_REFERENCED_BY: referenced_by,
    }
    if art.vcs_tag:
        record["vcsTag"] = art.vcs_tag
    return json.dumps(record, indent=2) + "\n"


def _pid_link(pid):
    if is_doi(pid):
        return f"[{pid}](https://doi.org/{pid})"
    if pid:
        return f"<{pid}>"
    return "(no PID yet)"


def readme_snippet(ledger, milestone):
    ms = ledger.milestone(milestone)
    if not ms.artifacts:
        raise LedgerError(f"milestone {ms.name!r} is empty")
    lines = [f"## Published artifacts: {ms.name}", ""]
    for i in ms.artifacts:
        a = ledger.get(i)
        title = a.title or a.local_id
        lines.append(f"- **{a.kind}**: {title} {_pid_link(a.pid)}")
    lines += ["", f"Milestone tag: `{ms.tag or 'untagged'}`", ""]
    return "\n".join(lines)


def new_version(ledger, local_id, new_pid):
    """Add ``<base>-v<k>`` as a new version of ``local_id`` and return it."""
    old = ledger.get(local_id)
    if not is_doi(new_pid):
        raise LedgerError(f"malformed DOI {new_pid!r}")
    m = _VERSION_SUFFIX_RE.fullmatch(local_id)
    base, k = (m.group(1), int(m.group(2)) + 1) if m else (local_id, 2)
    while f"{base}-v{k}" in ledger.artifacts:
        k += 1
    rec = ArtifactRecord(
        local_id=f"{base}-v{k}", kind=old.kind, pid=new_pid, title=old.title,
        version_label=f"v{k}",
    )
    ledger.artifacts[rec.local_id] = rec
    ledger.links.append(Link(rec.local_id, local_id, IS_NEW_VERSION_OF))
    ledger._persist()
    return rec
