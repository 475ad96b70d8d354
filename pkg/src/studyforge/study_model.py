"""Parameter spaces, study definitions and their expansion into cases.

A study definition is a YAML document::

    study: nn_tuning
    parameters:
      HIDDEN_LAYERS: ["10,10,10,10"]
      OPTIMIZER_STEP: [0.0001, 0.001]
      MAX_ITERATIONS: [3000]
    command: python train.py --step {OPTIMIZER_STEP} --case {CASE_ID}
    secondary_file: secondary.csv
    primary_globs: ["*.vtu", "checkpoints/*"]
    cases:                      # optional, appended after the product
      - {HIDDEN_LAYERS: "5,5", OPTIMIZER_STEP: 0.01, MAX_ITERATIONS: 10}

Expansion is row-major over parameters in declaration order, i.e. the
last-declared parameter varies fastest, and case IDs count up from 0.
"""

import itertools
import re
import string
from dataclasses import dataclass, field
from pathlib import PurePosixPath

import yaml

from studyforge._csvio import format_scalar, parse_scalar, read_rows, write_rows
from studyforge.errors import (
    CaseMapError,
    DefinitionError,
    PlaceholderError,
    TableError,
)

PARAM_PREFIX = "PARAM_"
CASE_ID = "CASE_ID"

_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_STUDY_RE = re.compile(r"[a-z0-9_-]+")
_TOP_KEYS = ("study", "parameters", "command", "secondary_file", "primary_globs", "cases")
_REQUIRED_KEYS = ("study", "parameters", "command", "secondary_file")


def _check_scalar(name, value):
    if isinstance(value, bool) or not isinstance(value, (int, float, str)):
        raise DefinitionError(
            f"parameter {name!r}: unsupported value {value!r} "
            f"({type(value).__name__}); quote it to use it as text"
        )
    return value


@dataclass(frozen=True)
class ParameterSpace:
    """Ordered parameter names, each with a non-empty list of values."""

    entries: tuple = ()

    def __post_init__(self):
        entries = tuple((name, tuple(values)) for name, values in self.entries)
        object.__setattr__(self, "entries", entries)
        seen = set()
        for name, values in entries:
            if not isinstance(name, str) or not _NAME_RE.fullmatch(name):
                raise DefinitionError(f"invalid parameter name {name!r}")
            if name.startswith(PARAM_PREFIX):
                raise DefinitionError(
                    f"parameter {name!r} uses the reserved prefix {PARAM_PREFIX!r}"
                )
            if name == CASE_ID:
                raise DefinitionError(f"parameter name {CASE_ID!r} is reserved")
            if name in seen:
                raise DefinitionError(f"duplicate parameter {name!r}")
            seen.add(name)
            if not values:
                raise DefinitionError(f"parameter {name!r} has an empty value list")
            for v in values:
                _check_scalar(name, v)

    @property
    def names(self):
        return tuple(name for name, _ in self.entries)

    @property
    def size(self):
        n = 1
        for _, values in self.entries:
            n *= len(values)
        return n


def template_fields(template):
    """Return the placeholder names used in a ``{name}`` command template."""
    try:
        parsed = list(string.Formatter().parse(template))
    except ValueError as exc:
        raise PlaceholderError(f"malformed command template: {exc}") from None
    names = []
    for _, field_name, format_spec, conversion in parsed:
        if field_name is None:
            continue
        if not _NAME_RE.fullmatch(field_name) or format_spec or conversion:
            raise PlaceholderError(
                f"unsupported placeholder {{{field_name}}} in command template"
            )
        names.append(field_name)
    return names


def check_template(template, names):
    allowed = set(names) | {CASE_ID}
    for name in template_fields(template):
        if name not in allowed:
            raise PlaceholderError(f"unknown placeholder {{{name}}} in command template")


@dataclass(frozen=True)
class StudyDefinition:
    study_name: str
    space: ParameterSpace
    command_template: str
    secondary_file: str = "secondary.csv"
    primary_globs: tuple = ()
    extra_cases: tuple = ()

    def __post_init__(self):
        if not isinstance(self.study_name, str) or not _STUDY_RE.fullmatch(self.study_name):
            raise DefinitionError(
                f"study name {self.study_name!r} must match [a-z0-9_-]+"
            )
        check_template(self.command_template, self.space.names)
        path = PurePosixPath(self.secondary_file)
        if not self.secondary_file or path.is_absolute() or ".." in path.parts:
            raise DefinitionError(
                f"secondary_file {self.secondary_file!r} must be a relative path "
                "inside the case directory"
            )
        object.__setattr__(self, "primary_globs", tuple(self.primary_globs))
        names = self.space.names
        extras = []
        for i, vector in enumerate(self.extra_cases):
            if set(vector) != set(names):
                raise DefinitionError(
                    f"explicit case {i} must set exactly the parameters {list(names)}"
                )
            extras.append({n: _check_scalar(n, vector[n]) for n in names})
        object.__setattr__(self, "extra_cases", tuple(extras))


@dataclass(frozen=True)
class CaseRecord:
    case_id: int
    vector: dict = field(hash=False)


@dataclass(frozen=True)
class StudyPlan:
    """Numbered cases of one study; IDs are contiguous from 0 in list order."""

    study_name: str
    parameters: tuple
    cases: tuple

    def __post_init__(self):
        object.__setattr__(self, "parameters", tuple(self.parameters))
        object.__setattr__(self, "cases", tuple(self.cases))
        names = set(self.parameters)
        seen = {}
        for position, case in enumerate(self.cases):
            if case.case_id != position:
                raise CaseMapError(
                    f"case IDs must be contiguous from 0; found {case.case_id} "
                    f"at position {position}"
                )
            if set(case.vector) != names:
                raise CaseMapError(
                    f"case {case.case_id} does not cover exactly {list(self.parameters)}"
                )
            key = self.vector_key(case)
            if key in seen:
                raise CaseMapError(
                    f"cases {seen[key]} and {case.case_id} have identical parameter vectors"
                )
            seen[key] = case.case_id

    def vector_key(self, case):
        return tuple(format_scalar(case.vector[n]) for n in self.parameters)

    def __len__(self):
        return len(self.cases)

    def case(self, case_id):
        return self.cases[case_id]


class _DefinitionLoader(yaml.SafeLoader):
    """Safe loader that rejects duplicate keys and reads ``1e-4`` as a float."""

    def construct_mapping(self, node, deep=False):
        keys = set()
        for key_node, _ in node.value:
            key = self.construct_object(key_node, deep=deep)
            if key in keys:
                mark = key_node.start_mark
                raise DefinitionError(
                    f"duplicate key {key!r}", line=mark.line + 1, column=mark.column + 1
                )
            keys.add(key)
        return super().construct_mapping(node, deep=deep)


_DefinitionLoader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(
        r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
        |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
        |\.[0-9_]+(?:[eE][-+][0-9]+)?
        |[-+]?\.(?:inf|Inf|INF)
        |\.(?:nan|NaN|NAN))$""",
        re.X,
    ),
    list("-+0123456789."),
)


def parse_study_definition(text):
    """Parse a YAML study definition into a validated :class:`StudyDefinition`."""
    try:
        doc = yaml.load(text, Loader=_DefinitionLoader)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        line = mark.line + 1 if mark else None
        column = mark.column + 1 if mark else None
        raise DefinitionError(exc.problem or str(exc), line=line, column=column) from None
    except yaml.YAMLError as exc:
        raise DefinitionError(str(exc)) from None

    if not isinstance(doc, dict):
        raise DefinitionError("definition must be a mapping at the top level")
    unknown = [k for k in doc if k not in _TOP_KEYS]
    if unknown:
        raise DefinitionError(f"unknown top-level keys: {unknown}")
    missing = [k for k in _REQUIRED_KEYS if k not in doc]
    if missing:
        raise DefinitionError(f"missing required keys: {missing}")

    params = doc["parameters"]
    if not isinstance(params, dict) or not params:
        raise DefinitionError("'parameters' must be a non-empty mapping of name to list")
    entries = []
    for name, values in params.items():
        if not isinstance(values, list):
            values = [values]
        entries.append((name, values))
    space = ParameterSpace(tuple(entries))

    globs = doc.get("primary_globs") or []
    if isinstance(globs, str):
        globs = [globs]
    cases = doc.get("cases") or []
    if not isinstance(cases, list) or not all(isinstance(c, dict) for c in cases):
        raise DefinitionError("'cases' must be a list of mappings")
    for key in ("command", "secondary_file"):
        if not isinstance(doc[key], str):
            raise DefinitionError(f"{key!r} must be a string")

    return StudyDefinition(
        study_name=str(doc["study"]),
        space=space,
        command_template=doc["command"],
        secondary_file=doc["secondary_file"],
        primary_globs=tuple(str(g) for g in globs),
        extra_cases=tuple(cases),
    )


def expand(definition):
    """Expand a definition into a :class:`StudyPlan`.

    The Cartesian product comes first, row-major with the last parameter
    varying fastest; explicit extra cases follow in file order.
    """
    names = definition.space.names
    value_lists = [values for _, values in definition.space.entries]
    vectors = [dict(zip(names, combo)) for combo in itertools.product(*value_lists)]
    vectors.extend(dict(v) for v in definition.extra_cases)
    cases = tuple(CaseRecord(i, v) for i, v in enumerate(vectors))
    return StudyPlan(definition.study_name, names, cases)


def write_case_map(plan):
    header = [CASE_ID, *plan.parameters]
    rows = [
        [str(case.case_id), *(format_scalar(case.vector[n]) for n in plan.parameters)]
        for case in plan.cases
    ]
    return write_rows(header, rows)


def read_case_map(text, study_name="study"):
    """Parse case-map CSV text back into a plan.

    Cell values are typed by :func:`studyforge._csvio.parse_scalar`, so any
    map written by :func:`write_case_map` reads back to an equal plan as long
    as its text values do not look like canonical numbers.
    """
    rows = read_rows(text)
    try:
        _, header = next(rows)
    except StopIteration:
        raise CaseMapError("case map is empty") from None
    except TableError as exc:
        raise CaseMapError(str(exc)) from None
    if not header or header[0] != CASE_ID:
        raise CaseMapError(f"case map header must begin with {CASE_ID}")
    names = header[1:]
    records = {}
    try:
        for line, row in rows:
            if len(row) != len(header):
                raise CaseMapError(
                    f"line {line}: expected {len(header)} cells, found {len(row)}"
                )
            try:
                case_id = int(row[0])
            except ValueError:
                raise CaseMapError(f"line {line}: invalid case ID {row[0]!r}") from None
            if case_id in records:
                raise CaseMapError(f"line {line}: duplicate case ID {case_id}")
            records[case_id] = {n: parse_scalar(v) for n, v in zip(names, row[1:])}
    except TableError as exc:
        raise CaseMapError(str(exc)) from None
    ids = sorted(records)
    if ids != list(range(len(ids))):
        missing = sorted(set(range(max(ids) + 1)) - set(ids)) if ids else []
        raise CaseMapError(f"gap in case IDs: missing {missing}")
    try:
        ParameterSpace(tuple((n, (0,)) for n in names))
    except DefinitionError as exc:
        raise CaseMapError(str(exc)) from None
    cases = tuple(CaseRecord(i, records[i]) for i in ids)
    return StudyPlan(study_name, tuple(names), cases)
