"""
Scenario parsing and validation.
"""
import textwrap
from pathlib import Path

import pytest

from sojourn.errors import ScenarioParseError, ScenarioValidationError
from sojourn.manifolds import ModelId
from sojourn.scenario import Task, load_scenario, parse_scenario

MINIMAL = textwrap.dedent(
    """
    task = "SojournTable"

    [model]
    id = "FlatEuclidean"
    dim = 2

    [points]
    z = [[0.5, -0.25]]
    dir = [[1.0, 0.0]]
    """
)


def test_minimal_scenario_fills_defaults():
    scenario = parse_scenario(MINIMAL)
    assert scenario.task is Task.SOJOURN_TABLE
    assert scenario.model.id is ModelId.FLAT_EUCLIDEAN
    assert scenario.seed == 0
    assert scenario.tolerances.sojourn == 1e-8
    assert scenario.mollifier.normalization == "integral"
    assert scenario.model.build().dim == 2


def test_resolved_echoes_lambda_grid():
    text = MINIMAL + "\n[lambda_grid]\nmin = 10.0\nmax = 100.0\npoints = 4096\n"
    resolved = parse_scenario(text).resolved()
    assert resolved["lambda_grid"] == {"min": 10.0, "max": 100.0, "points": 4096}
    assert resolved["task"] == "SojournTable"
    assert resolved["points"]["z"] == [[0.5, -0.25]]


def test_unknown_key_names_key_and_line():
    text = MINIMAL.replace('dim = 2', 'dim = 2\nfooo = 1')
    with pytest.raises(ScenarioParseError) as exc:
        parse_scenario(text)
    assert "fooo" in str(exc.value)
    assert exc.value.line == text.splitlines().index("fooo = 1") + 1
    assert exc.value.exit_code == 1


def test_toml_syntax_error_reports_position():
    with pytest.raises(ScenarioParseError) as exc:
        parse_scenario('task = "SojournTable"\n[model\nid = 1\n')
    assert exc.value.line == 2


@pytest.mark.parametrize(
    "body",
    [
        'task = "BranchSearch"\n[model]\nid = "FlatEuclidean"\n',
        'task = "SojournTable"\n[model]\nid = "FlatEuclidean"\n[points]\nz = [[0.0, 0.0]]\n',
        'task = "SojournTable"\n[model]\nid = "FlatEuclidean"\n[points]\nz = [[0.0, 0.0, 1.0]]\ndir = [[1.0, 0.0, 0.0]]\n',
        'task = "PdeCrossCheck"\n[model]\nid = "FlatEuclidean"\ndim = 2\n',
        'task = "Teleport"\n[model]\nid = "FlatEuclidean"\n',
        'task = "KernelSynthesis"\n[model]\nid = "FlatEuclidean"\n[points]\nrandom = 2\n[lambda_grid]\nmin = 5.0\nmax = 1.0\n',
        'task = "PdeCrossCheck"\n[model]\nid = "FlatEuclidean"\ndim = 3\n[pde]\nwidth = 0.02\n',
        'task = "CatalogValidate"\n[model]\nid = "FlatEuclidean"\n[catalog]\nsamples = 0\n',
    ],
)
def test_invalid_scenarios(body):
    with pytest.raises(ScenarioValidationError) as exc:
        parse_scenario(body)
    assert exc.value.fields
    assert exc.value.exit_code == 1


def test_random_points_satisfy_point_requirement():
    scenario = parse_scenario('task = "BranchSearch"\nseed = 3\n[model]\nid = "HyperbolicHn"\n[points]\nrandom = 4\n')
    assert scenario.points.random == 4
    assert scenario.model.build().kind.value == "AsympHyperbolic"


def test_load_scenario_from_file(tmp_path):
    path = tmp_path / "flat.toml"
    path.write_text(MINIMAL, encoding="utf-8")
    assert load_scenario(path).points.dir == [[1.0, 0.0]]
    with pytest.raises(OSError):
        load_scenario(tmp_path / "missing.toml")


def test_pulse_width_resolves_ten_steps():
    scenario = parse_scenario('task = "PdeCrossCheck"\n[model]\nid = "FlatEuclidean"\ndim = 3\n[pde]\nds = 0.025\nwidth = 0.3\n')
    assert scenario.pde.width >= 10 * scenario.pde.ds
    assert scenario.pde.front_width < scenario.pde.ds


@pytest.mark.parametrize("path", sorted((Path(__file__).resolve().parents[2] / "scenarios").glob("*.toml")), ids=lambda p: p.stem)
def test_shipped_scenarios_validate(path):
    scenario = load_scenario(path)
    assert scenario.pde.width >= 10 * scenario.pde.ds
