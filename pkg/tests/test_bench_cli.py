import json

import numpy as np
import pytest

from app import main, parse_vector
from dcc_framework.exceptions import RejectedInputError, UnknownIdentifierError
from dcc_framework.experiment import build_objective, run_experiment
from dcc_framework.utils import Settings
from storage.models import ExperimentConfig
from storage.record_store import RecordStore, parse_csv


@pytest.fixture(autouse=True)
def quiet_environment(monkeypatch):
    monkeypatch.setenv("BENCH_PROGRESS", "0")
    monkeypatch.setenv("BENCH_LOG_LEVEL", "WARNING")


def _tiny_config(tmp_path, **overrides):
    config = {
        "function_id": "sphere",
        "dimension": 4,
        "seeds": [0, 1],
        "algorithm": "cma",
        "max_evaluations": 400,
        "output_path": str(tmp_path / "records"),
    }
    config.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config))
    return str(path)


def test_parse_vector():
    assert parse_vector("5,-2.5") == [5.0, -2.5]
    with pytest.raises(RejectedInputError):
        parse_vector("5,x")


def test_build_objective_is_seeded():
    a = build_objective("cigar", 6, seed=3)
    b = build_objective("cigar", 6, seed=3)
    assert np.array_equal(a.shift, b.shift)
    assert build_objective("f1", 99, seed=0).dimension == 2
    with pytest.raises(UnknownIdentifierError):
        build_objective("nope", 4, seed=0)


def test_run_experiment_one_record_per_seed(tmp_path):
    config = ExperimentConfig(function_id="ellipsoid", dimension=6, seeds=[3, 4],
                              algorithm="lmcma", max_evaluations=300)
    store = RecordStore(str(tmp_path))
    records = run_experiment(config, Settings(progress=False), store)
    assert [r.seed for r in records] == [3, 4]
    assert all(r.total_evaluations <= 300 for r in records)
    assert len({r.fingerprint for r in records}) == 1
    assert len(store.load_all()) == 2


def test_run_experiment_is_reproducible():
    config = ExperimentConfig(function_id="sphere", dimension=4, seeds=[7],
                              algorithm="cc", algorithm_config={"k": 2, "partition": "[[1,3],[2,4]]"},
                              max_evaluations=1000)
    first = run_experiment(config, Settings(progress=False))[0]
    second = run_experiment(config, Settings(progress=False))[0]
    assert [p.best_f for p in first.series] == [p.best_f for p in second.series]


def test_unknown_algorithm_is_rejected():
    config = ExperimentConfig(function_id="sphere", algorithm="pso", max_evaluations=10)
    with pytest.raises(UnknownIdentifierError) as info:
        run_experiment(config, Settings(progress=False))
    assert info.value.valid == ["cc", "cma", "dcc", "lmcma"]


def test_run_command_writes_records(tmp_path, capsys):
    assert main(["run", "--config", _tiny_config(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert out.startswith("function_id,algorithm,runs")
    records = RecordStore(str(tmp_path / "records")).load_all()
    assert [r.seed for r in records] == [0, 1]


def test_run_command_accepts_dcc(tmp_path, capsys):
    path = _tiny_config(tmp_path, algorithm="dcc", dimension=6, max_evaluations=3000,
                        algorithm_config={"p": 2, "k": 2, "cycle_evals": 100,
                                          "elitist_fraction": 0.2, "better_fraction": 0.5})
    assert main(["run", "--config", path]) == 0
    assert "sphere,dcc,2" in capsys.readouterr().out


def test_trace_command_prints_csv(capsys):
    assert main(["trace", "--function", "f1", "--start", "5,5", "--max-cycles", "100"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "cycle,x,y,f"
    assert lines[1].startswith("0,5,5,")


def test_trace_command_writes_file(tmp_path):
    target = tmp_path / "trace.csv"
    assert main(["trace", "--function", "f4", "--start", "5,-3", "--output", str(target)]) == 0
    assert target.read_text().splitlines()[0] == "cycle,x,y,f"


def test_pne_command(capsys):
    assert main(["pne", "--function", "f1", "--point", "0,0"]) == 0
    certificate = json.loads(capsys.readouterr().out)
    assert certificate["is_pne"] is True
    assert certificate["partition"] == [[1], [2]]


def test_pne_command_with_partition_and_negative_point(capsys):
    assert main(["pne", "--function", "schwefel221", "--point=-1,1,0.5,1",
                 "--partition", "[[1,2],[3,4]]"]) == 0
    assert json.loads(capsys.readouterr().out)["is_pne"] is True


def test_summarize_command(tmp_path, capsys):
    main(["run", "--config", _tiny_config(tmp_path)])
    capsys.readouterr()
    paths = sorted(str(p) for p in (tmp_path / "records").glob("*.csv"))
    out_file = tmp_path / "summary.csv"
    assert main(["summarize", *paths, "--output", str(out_file)]) == 0
    assert out_file.read_text().splitlines()[1].startswith("sphere,cma,2,")
    assert parse_csv(paths[0]).algorithm == "cma"


def test_unknown_function_exits_with_usage_error(capsys):
    assert main(["trace", "--function", "nope", "--start", "1,1"]) == 2
    assert "valid ids" in capsys.readouterr().err


def test_malformed_partition_exits_with_usage_error(capsys):
    assert main(["pne", "--function", "f1", "--point", "0,0", "--partition", "[[1,2]"]) == 2


def test_invalid_config_exits_with_usage_error(tmp_path):
    assert main(["run", "--config", _tiny_config(tmp_path, dimension=1)]) == 2


def test_missing_subcommand_is_a_usage_error():
    with pytest.raises(SystemExit) as info:
        main([])
    assert info.value.code == 2


def test_missing_record_file_exits_with_usage_error(tmp_path, capsys):
    assert main(["summarize", str(tmp_path / "absent.csv")]) == 2
    assert "absent.csv" in capsys.readouterr().err


def test_missing_config_exits_with_usage_error(tmp_path):
    assert main(["run", "--config", str(tmp_path / "absent.json")]) == 2


def test_partition_outside_the_dimension_exits_with_usage_error(capsys):
    assert main(["pne", "--function", "f1", "--point", "0,0", "--partition", "[[1],[3]]"]) == 2
