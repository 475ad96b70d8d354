"""Materialize case directories and run a study locally in parallel.

Layout under the results root::

    <root>/<study>/case_map.csv
    <root>/<study>/runner.log        # one line per status transition
    <root>/<study>/STOP              # optional cooperative stop marker
    <root>/<study>/<case_id>/params.json
    <root>/<study>/<case_id>/status  # single token + LF
    <root>/<study>/<case_id>/run.json
    <root>/<study>/<case_id>/stdout.log, stderr.log

Every status change goes through write-to-temp-then-rename, so ``status()``
may be called from another process while ``run()`` is active.
"""

import json
import logging
import os
import subprocess
import time
from dataclasses import dataclass, field
from pathlib import Path

from studyforge._csvio import format_scalar
from studyforge.errors import PlaceholderError, RunnerError
from studyforge.study_model import CASE_ID, read_case_map, template_fields, write_case_map

log = logging.getLogger(__name__)

PENDING = "pending"
RUNNING = "running"
SUCCEEDED = "succeeded"
FAILED = "failed"
STOPPED = "stopped"
UNKNOWN = "unknown"

STATES = (PENDING, RUNNING, SUCCEEDED, FAILED, STOPPED)
TERMINAL = frozenset({SUCCEEDED, FAILED, STOPPED})

_TRANSITIONS = {
    PENDING: {RUNNING, STOPPED},
    RUNNING: {SUCCEEDED, FAILED},
}

STOP_MARKER = "STOP"
CASE_MAP = "case_map.csv"
TRANSITION_LOG = "runner.log"

# Always forwarded to children so that a shell can find its tools.
BASE_ENV = ("PATH", "HOME", "LANG", "LC_ALL", "TMPDIR", "SYSTEMROOT")


@dataclass
class ExecutorConfig:
    root: Path = Path(".")
    max_parallel: int = 1
    env_passthrough: tuple = ()
    submit_wrapper: str = None
    poll_interval: float = 0.01

    def __post_init__(self):
        self.root = Path(self.root)
        if int(self.max_parallel) < 1:
            raise RunnerError("max_parallel must be at least 1")
        self.max_parallel = int(self.max_parallel)


@dataclass
class CaseResult:
    case_id: int
    status: str
    exit_code: int = None
    wall_seconds: float = None
    reason: str = None

    def to_dict(self):
        return {
            "case_id": self.case_id,
            "status": self.status,
            "exit_code": self.exit_code,
            "wall_seconds": self.wall_seconds,
            "reason": self.reason,
        }


@dataclass
class RunReport:
    study_name: str
    cases: list = field(default_factory=list)

    @property
    def counts(self):
        counts = {s: 0 for s in STATES}
        for c in self.cases:
            counts[c.status] = counts.get(c.status, 0) + 1
        return counts

    @property
    def ok(self):
        return all(c.status == SUCCEEDED for c in self.cases)

    def by_id(self):
        return {c.case_id: c for c in self.cases}

    def to_dict(self):
        return {
            "study": self.study_name,
            "counts": self.counts,
            "cases": [c.to_dict() for c in self.cases],
        }


def render_command(template, case):
    """Substitute a case's values into a ``{name}`` command template."""
    allowed = set(case.vector) | {CASE_ID}
    for name in template_fields(template):
        if name not in allowed:
            raise PlaceholderError(f"unknown placeholder {{{name}}} in command template")
    values = {name: format_scalar(v) for name, v in case.vector.items()}
    values[CASE_ID] = str(case.case_id)
    return template.format_map(values)


def _atomic_write(path, text):
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def study_dir(root, study_name):
    return Path(root) / study_name


def case_dir(root, study_name, case_id):
    return Path(root) / study_name / str(case_id)


def materialize(plan, root, force=False):
    """Create one directory per case holding ``params.json`` and ``status``.

    Returns the set of created case directories.
    """
    sdir = study_dir(root, plan.study_name)
    if sdir.exists() and any(sdir.iterdir()) and not force:
        raise RunnerError(f"{sdir} exists and is not empty (use force to overwrite)")
    try:
        sdir.mkdir(parents=True, exist_ok=True)
        for stale in (STOP_MARKER, TRANSITION_LOG):
            (sdir / stale).unlink(missing_ok=True)
        created = set()
        for case in plan.cases:
            cdir = sdir / str(case.case_id)
            cdir.mkdir(exist_ok=True)
            params = json.dumps(case.vector, indent=2, sort_keys=False) + "\n"
            _atomic_write(cdir / "params.json", params)
            _atomic_write(cdir / "status", PENDING + "\n")
            (cdir / "run.json").unlink(missing_ok=True)
            created.add(cdir)
        _atomic_write(sdir / CASE_MAP, write_case_map(plan))
    except OSError as exc:
        raise RunnerError(f"cannot materialize {sdir}: {exc}") from exc
    return created


def load_plan(sdir):
    sdir = Path(sdir)
    try:
        text = (sdir / CASE_MAP).read_text(encoding="utf-8")
    except OSError as exc:
        raise RunnerError(f"{sdir} is not a materialized study: {exc}") from None
    return read_case_map(text, study_name=sdir.name)


def read_status(cdir):
    """Status token of one case directory; raises RunnerError if unreadable."""
    try:
        token = (Path(cdir) / "status").read_text(encoding="utf-8").strip()
    except OSError as exc:
        raise RunnerError(f"cannot read status: {exc}") from None
    if token not in STATES:
        raise RunnerError(f"corrupt status {token!r}")
    return token


def request_stop(sdir):
    """Ask a running study to stop launching further cases."""
    sdir = Path(sdir)
    if not sdir.is_dir():
        raise RunnerError(f"no study directory {sdir}")
    (sdir / STOP_MARKER).write_text(time.strftime("%Y-%m-%dT%H:%M:%S%z") + "\n")
    return sdir / STOP_MARKER


def status(sdir):
    """Rebuild a :class:`RunReport` from the files on disk; read-only."""
    sdir = Path(sdir)
    plan = load_plan(sdir)
    report = RunReport(plan.study_name)
    for case in plan.cases:
        cdir = sdir / str(case.case_id)
        try:
            token = read_status(cdir)
        except RunnerError as exc:
            report.cases.append(CaseResult(case.case_id, UNKNOWN, reason=str(exc)))
            continue
        result = CaseResult(case.case_id, token)
        run_info = cdir / "run.json"
        if token in TERMINAL and run_info.exists():
            try:
                info = json.loads(run_info.read_text(encoding="utf-8"))
                result.exit_code = info.get("exit_code")
                result.wall_seconds = info.get("wall_seconds")
                result.reason = info.get("reason")
            except (OSError, ValueError) as exc:
                result.reason = f"unreadable run.json: {exc}"
        report.cases.append(result)
    return report


class _Orchestrator:
    def __init__(self, plan, definition, cfg):
        self.plan = plan
        self.definition = definition
        self.cfg = cfg
        self.sdir = study_dir(cfg.root, plan.study_name)
        self.state = {}

    def transition(self, case_id, new, **info):
        old = self.state[case_id]
        if new not in _TRANSITIONS.get(old, ()):
            raise RunnerError(f"illegal transition {old} -> {new} for case {case_id}")
        cdir = self.sdir / str(case_id)
        if new in TERMINAL:
            _atomic_write(cdir / "run.json", json.dumps(info, indent=2) + "\n")
        _atomic_write(cdir / "status", new + "\n")
        with open(self.sdir / TRANSITION_LOG, "a", encoding="utf-8") as fh:
            fh.write(f"{time.time():.6f} {case_id} {old} {new}\n")
        self.state[case_id] = new
        log.debug("case %s: %s -> %s", case_id, old, new)

    def env(self):
        names = set(BASE_ENV) | set(self.cfg.env_passthrough)
        env = {k: v for k, v in os.environ.items() if k in names}
        env["STUDYFORGE_STUDY"] = self.plan.study_name
        return env

    def launch(self, case):
        cdir = self.sdir / str(case.case_id)
        command = render_command(self.definition.command_template, case)
        if self.cfg.submit_wrapper:
            command = f"{self.cfg.submit_wrapper} {command}"
        env = self.env()
        env["STUDYFORGE_CASE_ID"] = str(case.case_id)
        started = time.time()
        self.transition(case.case_id, RUNNING)
        try:
            with open(cdir / "stdout.log", "wb") as out, open(cdir / "stderr.log", "wb") as err:
                proc = subprocess.Popen(
                    command, shell=True, cwd=cdir, stdout=out, stderr=err,
                    stdin=subprocess.DEVNULL, env=env,
                )
        except OSError as exc:
            self.finish(case.case_id, None, started, reason=f"spawn failed: {exc}")
            return None
        return proc, started, command

    def finish(self, case_id, exit_code, started, reason=None, command=None):
        ended = time.time()
        wall = round(ended - started, 6)
        new = SUCCEEDED if exit_code == 0 else FAILED
        self.transition(
            case_id, new, exit_code=exit_code, started=started, ended=ended,
            wall_seconds=wall, reason=reason, command=command,
        )

    def stop_requested(self):
        return (self.sdir / STOP_MARKER).exists()

    def run(self):
        queue = []
        for case in self.plan.cases:
            cdir = self.sdir / str(case.case_id)
            try:
                token = read_status(cdir)
            except RunnerError as exc:
                raise RunnerError(f"case {case.case_id}: {exc}") from None
            self.state[case.case_id] = token
            if token == PENDING:
                queue.append(case)
            elif token == RUNNING:
                # left over from an interrupted run; its process is gone
                self.finish(case.case_id, None, time.time(), reason="interrupted")
        active = {}
        while queue or active:
            while queue and len(active) < self.cfg.max_parallel:
                if self.stop_requested():
                    for case in queue:
                        self.transition(case.case_id, STOPPED, reason="stop requested")
                    queue.clear()
                    break
                case = queue.pop(0)
                launched = self.launch(case)
                if launched is not None:
                    active[case.case_id] = launched
            for case_id, (proc, started, command) in list(active.items()):
                code = proc.poll()
                if code is not None:
                    del active[case_id]
                    self.finish(case_id, code, started, command=command)
            if active:
                time.sleep(self.cfg.poll_interval)
        return status(self.sdir)


def run(plan, definition, cfg):
    """Run every pending case of a materialized study.

    At most ``cfg.max_parallel`` children run at once, each with its case
    directory as working directory. A ``STOP`` marker in the study directory
    is checked before each launch; remaining pending cases are then marked
    stopped while running ones finish normally.
    """
    sdir = study_dir(cfg.root, plan.study_name)
    if not (sdir / CASE_MAP).is_file():
        raise RunnerError(f"{sdir} is not a materialized study")
    try:
        return _Orchestrator(plan, definition, cfg).run()
    except OSError as exc:
        raise RunnerError(f"run aborted: {exc}") from exc

