"""Acceptance suite: one check per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py`` or directly with
``python3 tests/test_acceptance.py``.
"""

import json
import math
import random
import string
import subprocess
import sys
import tarfile
import time
from itertools import combinations
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from conftest import DATA, quadratic_definition_text  # noqa: E402
from studyforge import crosslink as cl  # noqa: E402
from studyforge._csvio import format_scalar  # noqa: E402
from studyforge.recipe_lint import lint_text  # noqa: E402
from studyforge.regression import ToleranceSpec, compare_tables, values_close  # noqa: E402
from studyforge.secondary_table import (  # noqa: E402
    SecondaryTable, collect, filter_rows, group_by_metadata, load_table, validate_table,
)
from studyforge.study_model import ParameterSpace, StudyDefinition, expand  # noqa: E402


def criterion_1():
    table = load_table(DATA / "nn_table.csv")
    assert table.columns == ("PARAM_HIDDEN_LAYERS", "PARAM_OPTIMIZER_STEP",
                             "PARAM_MAX_ITERATIONS", "EPOCH", "TRAINING_MSE")
    assert len(table) == 8
    assert table.column("TRAINING_MSE")[0] == "1.091560"
    assert table.column("TRAINING_MSE")[-1] == "0.996143"
    assert validate_table(table) == []
    assert len(group_by_metadata(table)) == 2
    hit = filter_rows(table, {"PARAM_OPTIMIZER_STEP": "0.0001", "EPOCH": "1"})
    assert len(hit) == 1
    assert hit.column("TRAINING_MSE") == ["1.091560"]


def _random_space(rng):
    entries = []
    for p in range(rng.randint(1, 4)):
        n = rng.randint(1, 5)
        kind = rng.choice(["int", "float", "str"])
        if kind == "int":
            values = rng.sample(range(-100, 100), n)
        elif kind == "float":
            values = [rng.uniform(-1e3, 1e3) for _ in range(n)]
        else:
            values = ["".join(rng.choices(string.ascii_letters + ",", k=rng.randint(1, 6)))
                      for _ in range(n)]
            values = list(dict.fromkeys(values))
        entries.append((f"P{p}", tuple(values)))
    return ParameterSpace(tuple(entries))


def criterion_2():
    rng = random.Random(2)
    for _ in range(200):
        space = _random_space(rng)
        d = StudyDefinition("s", space, "run {CASE_ID}")
        plan = expand(d)
        assert len(plan.cases) == math.prod(len(v) for _, v in space.entries)
        again = expand(d)
        assert [c.vector for c in again.cases] == [c.vector for c in plan.cases]
        vectors = {tuple(c.vector[n] for n in plan.parameters) for c in plan.cases}
        assert len(vectors) == len(plan.cases)


def criterion_3():
    rng = random.Random(3)
    for _ in range(100):
        plan = expand(StudyDefinition("s", _random_space(rng), "run"))
        cols = [f"D{j}" for j in range(rng.randint(1, 3))]
        tables = {}
        for case in plan.cases:
            if rng.random() < 0.1:
                continue
            rows = [tuple(repr(rng.random()) for _ in cols) for _ in range(rng.randint(0, 4))]
            tables[case.case_id] = SecondaryTable(cols, rows)
        include_id = rng.random() < 0.5
        merged = collect(plan, tables, include_case_id=include_id)
        assert len(merged) == sum(len(t) for t in tables.values())
        pos = 0
        for case in plan.cases:
            t = tables.get(case.case_id)
            if t is None:
                continue
            expected = tuple(format_scalar(case.vector[n]) for n in plan.parameters)
            if include_id:
                expected = (str(case.case_id),) + expected
            for row in t.rows:
                assert merged.metadata(pos) == expected
                assert merged.rows[pos][len(expected):] == row
                pos += 1


def _brute_force(actual, reference, tol):
    failing = set()
    for col in reference.columns:
        for i, (a, r) in enumerate(zip(actual.column(col), reference.column(col))):
            if not values_close(float(a), float(r), tol.rel, tol.abs, tol.nan_equal):
                failing.add((i, col))
    return failing


def criterion_4():
    rng = random.Random(4)
    tol = ToleranceSpec()
    cols = [f"C{j}" for j in range(5)]
    for _ in range(100):
        ref_rows, act_rows = [], []
        for _ in range(50):
            ref = [rng.choice([0.0, rng.uniform(-1e3, 1e3), rng.uniform(-1e-9, 1e-9)]) for _ in cols]
            act = [v + rng.choice([0.0, 0.0, v * 5e-7, v * 2e-6, v * 1e-4, 5e-13, 1e-11])
                   for v in ref]
            ref_rows.append(tuple(repr(v) for v in ref))
            act_rows.append(tuple(repr(v) for v in act))
        reference = SecondaryTable(cols, ref_rows, check_duplicates=False)
        actual = SecondaryTable(cols, act_rows, check_duplicates=False)
        rep = compare_tables(actual, reference, tol)
        assert set(rep.failing_cells) == _brute_force(actual, reference, tol)
        assert compare_tables(reference, reference, tol).passed
        # inject where the relative term dominates the absolute floor
        row, col = rng.choice([(i, j) for i, r in enumerate(ref_rows) for j, c in enumerate(r)
                               if abs(float(c)) >= 1.0])
        rows = [list(r) for r in ref_rows]
        rows[row][col] = repr(float(rows[row][col]) * (1 + 1e3 * tol.rel))
        injected = compare_tables(SecondaryTable(cols, rows, check_duplicates=False), reference, tol)
        assert injected.status == "fail"
        assert injected.failing_cells == [(row, cols[col])]
        assert injected.columns[cols[col]].first_failing_row == row


def criterion_5():
    kinds = ["report", "code-snapshot", "secondary-data", "primary-data", "image"]
    for n in (2, 3, 5, 8):
        ledger = cl.Ledger()
        ids = []
        for i in range(n):
            kind = kinds[i % len(kinds)]
            cl.add_artifact(ledger, cl.ArtifactRecord(
                f"a{i}", kind, pid=f"10.48328/tudatalib-{100 + i}",
                vcs_tag="2022-jcp-ccs" if kind == "code-snapshot" else None))
            ids.append(f"a{i}")
        ledger.add_milestone("m", ids, "2022-jcp-ccs")
        cl.cross_link_mesh(ledger, "m")
        assert ledger.last_mesh_added == math.comb(n, 2)
        assert len(ledger.links) == 2 * math.comb(n, 2)
        for a, b in combinations(ids, 2):
            assert ledger.has_pair(a, b)
        assert cl.validate_milestone(ledger, "m") == []
        cl.cross_link_mesh(ledger, "m")
        assert ledger.last_mesh_added == 0
        for a in ids:
            text = cl.render_repo_metadata(ledger, a)
            assert '"dc.relation.isreferencedby"' in text
            record = json.loads(text)
            pids = {r["relatedIdentifier"] for r in record["relatedIdentifiers"]}
            assert len(record["relatedIdentifiers"]) == n - 1
            assert pids == {ledger.get(b).pid for b in ids if b != a}


def criterion_6():
    recipes = DATA / "recipes"
    dirty = [(f.rule, f.severity, f.line) for f in lint_text((recipes / "dirty.Dockerfile").read_bytes())]
    assert dirty == [
        ("R1-unpinned-base", "error", 2),
        ("R2-host-copy", "error", 3),
        ("R3-mutable-fetch", "error", 4),
        ("R4-unpinned-package", "warning", 5),
    ]
    assert lint_text((recipes / "clean.Dockerfile").read_bytes()) == []
    rng = random.Random(6)
    for _ in range(10_000):
        data = rng.randbytes(rng.randint(0, 256))
        if rng.random() < 0.5:
            data = b"FROM x\nRUN " + data.replace(b"\0", b"\\\n")
        lint_text(data)


def _cli(*args, cwd):
    proc = subprocess.run([sys.executable, "-m", "studyforge", *args], cwd=cwd,
                          capture_output=True, text=True)
    assert proc.returncode == 0, f"{args[0]} exited {proc.returncode}: {proc.stderr}"
    return proc.stdout


def criterion_7(workdir):
    workdir = Path(workdir)
    defn = workdir / "quadratic.yaml"
    defn.write_text(quadratic_definition_text())
    root = "results"
    _cli("plan", str(defn), "--root", root, cwd=workdir)
    _cli("run", str(defn), "--root", root, "--max-parallel", "3", cwd=workdir)
    _cli("collect", str(defn), "--root", root, cwd=workdir)
    secondary = workdir / root / "quadratic" / "secondary.csv"
    _cli("validate", str(secondary), cwd=workdir)
    ref = str(DATA / "quadratic_reference.csv")
    _cli("compare", "--reference", ref, "--actual", str(secondary), cwd=workdir)
    _cli("report", "--root", root, "--study", "quadratic", "--reference", ref,
         "--chart", "y=Y,x=X,group=PARAM_A", cwd=workdir)
    _cli("metadata", str(defn), "--root", root, "--timestamp", "1700000000", cwd=workdir)
    planted = workdir / root / "quadratic" / "field.h5"
    planted.write_bytes(b"\0" * 128)
    archives = []
    for name in ("a.tar.gz", "b.tar.gz"):
        _cli("pack", "secondary", "--root", root, "--out", name, "--timestamp", "1700000000",
             cwd=workdir)
        archives.append(workdir / name)
    with tarfile.open(archives[0]) as tar:
        names = tar.getnames()
    assert "quadratic/secondary.csv" in names and "quadratic/report.html" in names
    assert not any(n.endswith(".h5") for n in names)
    assert archives[0].read_bytes() == archives[1].read_bytes()
    assert ">PASS<" in (workdir / root / "quadratic" / "report.html").read_text()


def criterion_8():
    rng = random.Random(8)
    slug = string.ascii_lowercase + string.digits
    for _ in range(1000):
        year = rng.randint(1000, 9999)
        venue = "".join(rng.choices(slug, k=rng.randint(1, 10)))
        topic = "".join(rng.choices(slug, k=rng.randint(1, 10)))
        revision = rng.choice([None, rng.randint(1, 999)])
        assert cl.validate_tag(cl.make_tag(year, venue, topic, revision))
    assert cl.validate_tag("2022-jcp-ccs-r1")
    assert not cl.validate_tag("22-jcp-ccs")
    assert not cl.validate_tag("2022-JCP-ccs")


CRITERIA = [
    (1, "metadata-table fidelity", criterion_1, 1.0),
    (2, "expansion properties", criterion_2, 5.0),
    (3, "collection provenance", criterion_3, 5.0),
    (4, "comparator oracle equivalence", criterion_4, 10.0),
    (5, "cross-link mesh", criterion_5, 1.0),
    (6, "recipe lint golden corpus and fuzz", criterion_6, 10.0),
    (7, "end-to-end toy study", criterion_7, 10.0),
    (8, "tag convention", criterion_8, None),
]


def evaluate(func, limit, *args):
    """Run one criterion; return (passed, detail)."""
    start = time.perf_counter()
    try:
        func(*args)
    except AssertionError as exc:
        return False, f"assertion failed: {exc}" if str(exc) else "assertion failed"
    elapsed = time.perf_counter() - start
    if limit is not None and elapsed >= limit:
        return False, f"{elapsed:.2f} s exceeds {limit:g} s"
    return True, f"{elapsed:.2f} s"


@pytest.mark.parametrize("number, name, func, limit", CRITERIA, ids=[c[1] for c in CRITERIA])
def test_criterion(number, name, func, limit, tmp_path, capsys):
    args = (tmp_path,) if func is criterion_7 else ()
    passed, detail = evaluate(func, limit, *args)
    with capsys.disabled():
        print(f"\ncriterion {number} ({name}): {'PASS' if passed else 'FAIL'} [{detail}]")
    assert passed, detail


if __name__ == "__main__":
    import tempfile

    failures = 0
    for number, name, func, limit in CRITERIA:
        with tempfile.TemporaryDirectory() as tmp:
            args = (tmp,) if func is criterion_7 else ()
            passed, detail = evaluate(func, limit, *args)
        failures += not passed
        print(f"criterion {number} ({name}): {'PASS' if passed else 'FAIL'} [{detail}]")
    sys.exit(1 if failures else 0)
