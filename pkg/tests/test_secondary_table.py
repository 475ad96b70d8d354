import pytest
from hypothesis import given, settings, strategies as st

from studyforge.errors import TableError
from studyforge.secondary_table import (
    SecondaryTable,
    collect,
    filter_rows,
    group_by_metadata,
    read_table,
    validate_table,
    write_table,
)
from studyforge.study_model import ParameterSpace, StudyDefinition, expand


def test_nn_table_shape(nn_table):
    assert nn_table.columns == (
        "PARAM_HIDDEN_LAYERS", "PARAM_OPTIMIZER_STEP", "PARAM_MAX_ITERATIONS",
        "EPOCH", "TRAINING_MSE",
    )
    assert len(nn_table) == 8
    assert len(nn_table.metadata_columns) == 3
    assert nn_table.column("TRAINING_MSE")[0] == "1.091560"
    assert nn_table.values("TRAINING_MSE")[-1] == 0.996143
    assert nn_table.values("PARAM_HIDDEN_LAYERS") == [None] * 8


def test_header_only():
    t = read_table("A,B\n")
    assert t.columns == ("A", "B") and len(t) == 0
    assert write_table(t) == "A,B\n"


@pytest.mark.parametrize(
    "text, match, line",
    [
        ("A,B\n1,2\n3\n", "expected 2 cells", 3),
        ("A,A\n1,2\n", "duplicate column", 1),
        ("A,\n1,2\n", "empty column", 1),
        ("A,B\n1,2\n1,2\n", "duplicate of the row on line 2", 3),
    ],
)
def test_read_errors(text, match, line):
    with pytest.raises(TableError, match=match) as info:
        read_table(text)
    assert info.value.line == line


def test_empty_input():
    with pytest.raises(TableError):
        read_table("")


def test_roundtrip_preserves_text(nn_csv, nn_table):
    assert write_table(nn_table) == nn_csv
    assert read_table(write_table(nn_table)) == nn_table


def test_quoting():
    t = SecondaryTable(["A", "B"], [("x,y", 'say "hi"'), ("plain", "multi\nline")])
    text = write_table(t)
    assert text == 'A,B\n"x,y","say ""hi"""\nplain,"multi\nline"\n'
    assert read_table(text) == t


def test_crlf_input_normalized():
    t = read_table("A,B\r\n1,2\r\n")
    assert write_table(t) == "A,B\n1,2\n"


def test_validate_nn_table(nn_table):
    assert validate_table(nn_table) == []


def test_validate_findings():
    only_meta = SecondaryTable(["PARAM_a"], [("1",)])
    assert [f.message for f in validate_table(only_meta)] == ["no data columns"]
    no_meta = SecondaryTable(["x"], [("1",)])
    assert [f.severity for f in validate_table(no_meta)] == ["warning"]
    mixed = SecondaryTable(["PARAM_a", "x"], [("1", "2"), ("2", "n/a")])
    (finding,) = validate_table(mixed)
    assert finding.column == "x" and finding.severity == "warning"
    dup = SecondaryTable(["PARAM_a", "x"], [("1", "2"), ("1", "2")], check_duplicates=False)
    assert [f.severity for f in validate_table(dup)] == ["error"]


def test_constructor_rejects_duplicates():
    with pytest.raises(TableError):
        SecondaryTable(["a"], [("1",), ("1",)])
    with pytest.raises(TableError):
        SecondaryTable(["a", "b"], [("1",)])


def _nn_plan():
    d = StudyDefinition(
        "nn",
        ParameterSpace((
            ("HIDDEN_LAYERS", ("10,10,10,10",)),
            ("OPTIMIZER_STEP", (0.0001, 0.001)),
            ("MAX_ITERATIONS", (3000,)),
        )),
        "true",
    )
    return expand(d)


def test_collect_reproduces_nn_table(nn_table):
    plan = _nn_plan()
    mse = {0: ["1.091560", "1.082970", "1.077200", "1.072650"],
           1: ["0.992354", "0.991959", "0.995102", "0.996143"]}
    per_case = {
        cid: SecondaryTable(["EPOCH", "TRAINING_MSE"], [(str(e + 1), v) for e, v in enumerate(vals)])
        for cid, vals in mse.items()
    }
    merged = collect(plan, per_case)
    assert merged == nn_table


def test_collect_single_case():
    plan = expand(StudyDefinition("s", ParameterSpace((("a", (1.5,)), ("b", ("x",)))), "true"))
    merged = collect(plan, {0: SecondaryTable(["LOSS"], [("0",)])})
    assert merged.columns == ("PARAM_a", "PARAM_b", "LOSS")
    assert merged.rows == [("1.5", "x", "0")]


def test_collect_case_id_column():
    plan = _nn_plan()
    per_case = {i: SecondaryTable(["L"], [("1",)]) for i in range(2)}
    merged = collect(plan, per_case, include_case_id=True)
    assert merged.columns[0] == "PARAM_CASE_ID"
    assert merged.column("PARAM_CASE_ID") == ["0", "1"]


def test_collect_skips_missing_cases():
    plan = _nn_plan()
    merged = collect(plan, {1: SecondaryTable(["L"], [("1",)])})
    assert merged.column("PARAM_OPTIMIZER_STEP") == ["0.001"]


@pytest.mark.parametrize(
    "tables, match",
    [
        ({0: SecondaryTable(["A"], [("1",)]), 1: SecondaryTable(["B"], [("1",)])}, "differ"),
        ({0: SecondaryTable(["PARAM_A"], [("1",)])}, "metadata columns"),
        ({5: SecondaryTable(["A"], [("1",)])}, "unknown cases"),
    ],
)
def test_collect_errors(tables, match):
    with pytest.raises(TableError, match=match):
        collect(_nn_plan(), tables)


def test_group_by_nn_table(nn_table):
    groups = group_by_metadata(nn_table)
    assert [key[1] for key, _ in groups] == ["0.0001", "0.001"]
    assert [len(g) for _, g in groups] == [4, 4]


def test_group_without_metadata():
    t = SecondaryTable(["x"], [("1",), ("2",)])
    (key, sub), = group_by_metadata(t)
    assert key == () and sub == t


def test_filter_nn_table(nn_table):
    hit = filter_rows(nn_table, {"PARAM_OPTIMIZER_STEP": "0.0001", "EPOCH": "1"})
    assert len(hit) == 1
    assert hit.column("TRAINING_MSE") == ["1.091560"]
    # numeric normalization: 1e-4 and 1.0 match the cells 0.0001 and 1
    assert filter_rows(nn_table, [("PARAM_OPTIMIZER_STEP", "1e-4"), ("EPOCH", 1.0)]) == hit
    assert filter_rows(nn_table, {}) == nn_table
    none = filter_rows(nn_table, {"EPOCH": "99"})
    assert len(none) == 0 and none.columns == nn_table.columns
    with pytest.raises(TableError, match="unknown column"):
        filter_rows(nn_table, {"NOPE": "1"})


def test_filter_text_metadata(nn_table):
    assert len(filter_rows(nn_table, {"PARAM_HIDDEN_LAYERS": "10,10,10,10"})) == 8


# properties

cell = st.one_of(
    st.integers(-1000, 1000).map(str),
    st.floats(allow_nan=False, allow_infinity=False).map(repr),
    st.text(alphabet="ab ,\"\n-", max_size=5),
)


@st.composite
def tables(draw):
    ncols = draw(st.integers(1, 5))
    names = draw(st.lists(st.from_regex(r"(PARAM_)?[A-Z]{1,4}", fullmatch=True),
                          min_size=ncols, max_size=ncols, unique=True))
    rows = draw(st.lists(st.tuples(*[cell] * ncols), max_size=12, unique=True))
    return SecondaryTable(names, rows)


@settings(max_examples=150, deadline=None)
@given(tables())
def test_write_read_write_byte_stable(t):
    text = write_table(t)
    assert read_table(text) == t
    assert write_table(read_table(text)) == text


@settings(max_examples=150, deadline=None)
@given(tables())
def test_group_by_is_partition(t):
    groups = group_by_metadata(t)
    assert all(len(g) > 0 for _, g in groups)
    assert sum(len(g) for _, g in groups) == len(t)
    keys = [k for k, _ in groups]
    assert len(set(keys)) == len(keys)
    # concatenation in group order keeps each group's rows in original order
    for key, g in groups:
        assert g.rows == [r for i, r in enumerate(t.rows) if t.metadata(i) == key]


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 4), min_size=1, max_size=6), st.integers(1, 3))
def test_collected_groups_concatenate_to_original(rows_per_case, n_params):
    space = ParameterSpace(tuple((f"p{i}", tuple(range(len(rows_per_case)))) for i in range(n_params)))
    plan = expand(StudyDefinition("s", space, "true"))
    per_case = {
        case.case_id: SecondaryTable(["Y"], [(str(r),) for r in range(rows_per_case[case.case_id % len(rows_per_case)])])
        for case in plan.cases
    }
    merged = collect(plan, per_case)
    groups = group_by_metadata(merged)
    assert [r for _, g in groups for r in g.rows] == merged.rows
    assert len(merged) == sum(len(t) for t in per_case.values())
