"""Parse container build recipes and flag reproducibility problems.

Rules:

R1-unpinned-base
    ``FROM`` image without a digest whose tag is missing or ``latest``.
R2-host-copy
    ``COPY``/``ADD`` of a path from the build host (URLs and ``--from``
    stage copies are fine).
R3-mutable-fetch
    ``git clone`` without a commit-hash checkout, or a ``curl``/``wget``
    download without checksum verification, from a host that is not on the
    persistent-host allowlist. Missing either the pin or the allowlisted
    host is a warning, missing both is an error.
R4-unpinned-package
    ``apt-get``/``apt``, ``pip`` or ``conda`` installs naming packages
    without a version pin.

The parser is total: any text yields a (possibly empty) instruction list.
"""

import json
import re
import shlex
from dataclasses import dataclass, field
from urllib.parse import urlsplit

KEYWORDS = ("FROM", "RUN", "COPY", "ADD", "ARG", "ENV", "LABEL", "WORKDIR", "ENTRYPOINT", "CMD")

R1 = "R1-unpinned-base"
R2 = "R2-host-copy"
R3 = "R3-mutable-fetch"
R4 = "R4-unpinned-package"
RULES = (R1, R2, R3, R4)

ERROR = "error"
WARNING = "warning"

DEFAULT_ALLOWLIST = ("softwareheritage.org", "doi.org", "zenodo.org")

_HEX_PIN_RE = re.compile(r"[0-9a-f]{7,40}")
_SEPARATORS = {"&&", "||", ";", "|", "&"}
_CHECKSUM_TOOLS = {"sha256sum", "sha512sum", "sha384sum", "sha224sum", "sha1sum", "md5sum", "b2sum"}


@dataclass(frozen=True)
class Instruction:
    keyword: str
    args: str
    line: int
    raw_keyword: str = ""


@dataclass
class Recipe:
    instructions: list = field(default_factory=list)


@dataclass(frozen=True)
class LintFinding:
    rule: str
    severity: str
    line: int
    message: str

    def to_dict(self):
        return {"rule": self.rule, "severity": self.severity, "line": self.line, "message": self.message}


@dataclass
class LintConfig:
    persistent_host_allowlist: tuple = DEFAULT_ALLOWLIST
    severity_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        self.persistent_host_allowlist = tuple(h.lower() for h in self.persistent_host_allowlist)
        for host in self.persistent_host_allowlist:
            if not host or "/" in host or ":" in host:
                raise ValueError(f"allowlist entries must be bare host names, got {host!r}")
        for rule in self.severity_overrides:
            if rule not in RULES:
                raise ValueError(f"unknown rule {rule!r}")

    def allows(self, host):
        host = (host or "").lower()
        return any(host == h or host.endswith("." + h) for h in self.persistent_host_allowlist)


def parse_recipe(text):
    """Split recipe text into instructions.

    Comment lines are dropped (also inside continuations), trailing
    backslashes join the following line, unknown keywords become ``OTHER``.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8", errors="replace")
    lines = text.replace("\r\n", "\n").replace("\r", "\n").split("\n")
    instructions = []
    buf = None
    start = 0
    for lineno, raw in enumerate(lines, start=1):
        stripped = raw.strip()
        if stripped.startswith("#"):
            continue
        if buf is None:
            if not stripped:
                continue
            buf, start = "", lineno
        elif not stripped:
            # blank line inside a continuation is skipped
            continue
        content = raw.rstrip()
        if content.endswith("\\"):
            buf += content[:-1]
            continue
        buf += raw
        instructions.append(_instruction(buf, start))
        buf = None
    if buf is not None and buf.strip():
        instructions.append(_instruction(buf, start))
    return Recipe(instructions)


def _instruction(text, line):
    text = text.strip()
    parts = text.split(None, 1)
    raw_kw = parts[0]
    args = parts[1].strip() if len(parts) > 1 else ""
    kw = raw_kw.upper()
    if kw not in KEYWORDS:
        kw = "OTHER"
    return Instruction(kw, args, line, raw_kw)


# shell helpers

def _tokens(text):
    try:
        lex = shlex.shlex(text, posix=True, punctuation_chars=";&|")
        lex.whitespace_split = True
        lex.commenters = ""
        return list(lex)
    except ValueError:
        return text.split()


def _simple_commands(text):
    """Split a shell line into simple commands (lists of words)."""
    commands, cur = [], []
    for tok in _tokens(text):
        if tok in _SEPARATORS or set(tok) <= set(";&|"):
            if cur:
                commands.append(cur)
            cur = []
        else:
            cur.append(tok)
    if cur:
        commands.append(cur)
    return commands


def _strip_prefix(words):
    """Drop leading ``VAR=value`` assignments and ``sudo``/``env`` wrappers."""
    i = 0
    while i < len(words):
        w = words[i]
        if re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*=.*", w) or w in ("sudo", "env", "exec", "time"):
            i += 1
        elif w == "-E" and i and words[i - 1] == "sudo":
            i += 1
        else:
            break
    return words[i:]


def _host(url):
    if re.match(r"[\w.-]+@[\w.-]+:", url):  # scp-like git@host:path
        return url.split("@", 1)[1].split(":", 1)[0]
    try:
        return urlsplit(url).hostname or ""
    except ValueError:
        return ""


def _is_url(s):
    return bool(re.match(r"(https?|ftp|git|ssh)://", s, re.I)) or bool(re.match(r"[\w.-]+@[\w.-]+:", s))


# rules

def _split_image_ref(ref):
    """Return (tag, digest) of an image reference."""
    digest = None
    if "@" in ref:
        ref, digest = ref.split("@", 1)
    last = ref.rsplit("/", 1)[-1]
    tag = last.split(":", 1)[1] if ":" in last else None
    return tag, digest


def _check_from(ins, stages):
    words = [w for w in ins.args.split() if not w.startswith("--")]
    if not words:
        return None, None
    ref = words[0]
    stage = words[2].lower() if len(words) >= 3 and words[1].lower() == "as" else None
    if ref.lower() == "scratch" or ref.lower() in stages or "$" in ref:
        return None, stage
    tag, digest = _split_image_ref(ref)
    if digest:
        return None, stage
    if tag is None or tag == "latest":
        what = "no tag" if tag is None else "tag 'latest'"
        return f"base image {ref!r} has {what} and no digest", stage
    return None, stage


def _copy_sources(args):
    args = args.strip()
    if args.startswith("["):
        try:
            items = json.loads(args)
            if isinstance(items, list) and all(isinstance(i, str) for i in items):
                return None, items[:-1]
        except (ValueError, RecursionError):
            pass
    words = _tokens(args)
    options = [w for w in words if w.startswith("--")]
    paths = [w for w in words if not w.startswith("--")]
    return options, paths[:-1]


def _check_copy(ins, cfg):
    options, sources = _copy_sources(ins.args)
    if options and any(o.startswith("--from") for o in options):
        return [], []
    host_paths = [s for s in sources if not _is_url(s)]
    urls = [s for s in sources if _is_url(s)]
    return host_paths, urls


def _git_subcommand(words):
    """(subcommand, remaining args) of a ``git`` invocation."""
    i = 1
    while i < len(words):
        w = words[i]
        if w in ("-C", "-c", "--git-dir", "--work-tree"):
            i += 2
        elif w.startswith("-"):
            i += 1
        else:
            return w, words[i + 1:]
    return None, []


_CLONE_OPTS_WITH_ARG = {
    "-b", "--branch", "--depth", "-o", "--origin", "-c", "--config", "--reference",
    "-j", "--jobs", "-u", "--upload-pack", "--template", "--separate-git-dir",
    "--shallow-since", "--shallow-exclude", "--filter",
}


def _clone_url(args):
    i = 0
    while i < len(args):
        a = args[i]
        if a in _CLONE_OPTS_WITH_ARG:
            i += 2
        elif a.startswith("-"):
            i += 1
        else:
            return a
    return None


def _is_pin_command(words):
    """``git checkout <hash>``, ``git reset --hard <hash>`` or ``git switch --detach <hash>``."""
    if not words or words[0] != "git":
        return False
    sub, rest = _git_subcommand(words)
    if sub not in ("checkout", "reset", "switch"):
        return False
    return any(_HEX_PIN_RE.fullmatch(r) for r in rest if not r.startswith("-"))


def _is_checksum_check(words):
    return bool(words) and words[0] in _CHECKSUM_TOOLS and any(
        w in ("-c", "--check") for w in words[1:]
    )


def _download_urls(words):
    if not words or words[0] not in ("curl", "wget"):
        return []
    return [w for w in words[1:] if re.match(r"(https?|ftp)://", w, re.I)]


def _fetch_findings(ins, cfg, commands):
    findings = []
    pinned = any(_is_pin_command(c) for c in commands)
    verified = any(_is_checksum_check(c) for c in commands)
    for words in commands:
        if words and words[0] == "git":
            sub, rest = _git_subcommand(words)
            if sub != "clone":
                continue
            url = _clone_url(rest)
            if url is None:
                continue
            allowed = cfg.allows(_host(url))
            if pinned and allowed:
                continue
            problems = []
            if not pinned:
                problems.append("no commit-hash checkout")
            if not allowed:
                problems.append(f"host {_host(url)!r} is not a persistent archive")
            severity = ERROR if not pinned and not allowed else WARNING
            findings.append((R3, severity, f"clone of {url}: " + "; ".join(problems)))
        for url in _download_urls(words):
            allowed = cfg.allows(_host(url))
            if allowed and verified:
                continue
            problems = []
            if not verified:
                problems.append("no checksum verification")
            if not allowed:
                problems.append(f"host {_host(url)!r} is not a persistent archive")
            severity = ERROR if not verified and not allowed else WARNING
            findings.append((R3, severity, f"download of {url}: " + "; ".join(problems)))
    return findings


def _installer(words):
    """(manager, package arguments) for a package-install command, else None."""
    if not words:
        return None
    prog = words[0].rsplit("/", 1)[-1]
    rest = words[1:]
    if re.fullmatch(r"python[0-9.]*", prog) and rest[:2] == ["-m", "pip"]:
        prog, rest = "pip", rest[2:]
    if re.fullmatch(r"pip[0-9.]*", prog):
        manager = "pip"
    elif prog in ("apt-get", "apt"):
        manager = "apt"
    elif prog in ("conda", "mamba", "micromamba"):
        manager = "conda"
    else:
        return None
    opts_with_arg = {
        "pip": {"-r", "--requirement", "-c", "--constraint", "-i", "--index-url",
                "--extra-index-url", "-t", "--target", "-f", "--find-links", "-e",
                "--editable", "--prefix", "--root", "--src", "--platform",
                "--python-version", "--implementation", "--abi"},
        "apt": {"-o", "--option", "-t", "--target-release", "-c", "--config-file"},
        "conda": {"-c", "--channel", "-n", "--name", "-p", "--prefix", "--file"},
    }[manager]
    i = 0
    while i < len(rest) and rest[i].startswith("-"):
        i += 2 if rest[i] in opts_with_arg else 1
    if i >= len(rest) or rest[i] != "install":
        return None
    pkgs = []
    i += 1
    while i < len(rest):
        a = rest[i]
        if a in opts_with_arg:
            i += 2
            continue
        i += 1
        if not a.startswith("-"):
            pkgs.append(a)
    return manager, pkgs


def _is_pinned(manager, pkg):
    if manager == "pip":
        if "/" in pkg or pkg.startswith(".") or _is_url(pkg) or pkg.endswith((".whl", ".tar.gz", ".zip")):
            return True  # local paths and archives are out of scope here
        return "===" in pkg or re.search(r"[^=<>!~]==[^=]", pkg) is not None
    if manager == "apt":
        if pkg.endswith(".deb") or "/" in pkg:
            return True
        return re.search(r"[^=]=[^=]", pkg) is not None
    return re.search(r"[^=<>!~]==?[^=<>]", pkg) is not None


def _install_findings(commands):
    findings = []
    for words in commands:
        found = _installer(_strip_prefix(words))
        if found is None:
            continue
        manager, pkgs = found
        unpinned = [p for p in pkgs if not _is_pinned(manager, p)]
        if unpinned:
            findings.append((R4, WARNING, f"{manager} installs unpinned packages: {', '.join(unpinned)}"))
    return findings


def lint(recipe, cfg=None):
    """Return findings for a parsed recipe, sorted by line."""
    cfg = cfg or LintConfig()
    found = []
    stages = set()
    for ins in recipe.instructions:
        raw = []
        if ins.keyword == "FROM":
            message, stage = _check_from(ins, stages)
            if stage:
                stages.add(stage)
            if message:
                raw.append((R1, ERROR, message))
        elif ins.keyword in ("COPY", "ADD"):
            host_paths, urls = _check_copy(ins, cfg)
            if host_paths:
                raw.append((R2, ERROR, f"{ins.keyword} copies host paths {', '.join(host_paths)}"))
            for url in urls:
                if not cfg.allows(_host(url)):
                    raw.append((R3, WARNING, f"{ins.keyword} fetches {url} from a non-persistent host"))
        elif ins.keyword == "RUN":
            commands = [_strip_prefix(c) for c in _simple_commands(ins.args)]
            raw.extend(_fetch_findings(ins, cfg, commands))
            raw.extend(_install_findings(commands))
        for rule, severity, message in raw:
            severity = cfg.severity_overrides.get(rule, severity)
            found.append(LintFinding(rule, severity, ins.line, message))
    return sorted(found, key=lambda f: (f.line, RULES.index(f.rule)))


def lint_text(text, cfg=None):
    return lint(parse_recipe(text), cfg)
