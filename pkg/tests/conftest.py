import sys
from pathlib import Path

import pytest

from studyforge.runner import ExecutorConfig, materialize, run
from studyforge.secondary_table import read_table
from studyforge.study_model import expand, parse_study_definition

DATA = Path(__file__).parent / "data"


@pytest.fixture
def data_dir():
    return DATA


@pytest.fixture
def nn_csv():
    return (DATA / "nn_table.csv").read_text()


@pytest.fixture
def nn_table(nn_csv):
    return read_table(nn_csv)


def quadratic_definition_text(name="quadratic"):
    """The quadratic study definition with interpreter and script paths filled in."""
    text = (DATA / "quadratic.yaml").read_text()
    text = text.replace("{python}", sys.executable).replace("{script}", str(DATA / "quadratic_case.py"))
    return text.replace("study: quadratic", f"study: {name}")


def run_quadratic(root, name="quadratic"):
    definition = parse_study_definition(quadratic_definition_text(name))
    plan = expand(definition)
    materialize(plan, root)
    run(plan, definition, ExecutorConfig(root=root, max_parallel=3))
    return definition, plan


@pytest.fixture
def quadratic_root(tmp_path):
    root = tmp_path / "results"
    run_quadratic(root)
    return root
