import numpy as np
import pytest

from slalomnet.config import ConfigError, ExperimentConfig, config_from_dict, load_config
from slalomnet.controller import LoopSettings, PdGains, run_closed_loop
from slalomnet.data import DATASET_COLUMNS, TRACE_COLUMNS, DataFormatError, Dataset, \
    read_trace_csv
from slalomnet.expert import SpeedProfile
from slalomnet.sim import VehicleParams, build_course


def test_dataset_csv_round_trip_is_exact(tmp_path):
    rng = np.random.default_rng(0)
    ds = Dataset(np.repeat([3, 7], 5), np.tile(np.arange(5) / 30, 2), rng.normal(size=(10, 7)),
                 rng.normal(size=10))
    ds.to_csv(tmp_path / "d.csv")
    assert (tmp_path / "d.csv").read_text().splitlines()[0] == ",".join(DATASET_COLUMNS)
    back = Dataset.from_csv(tmp_path / "d.csv")
    for col in ("run_id", "t", "features", "target"):
        np.testing.assert_array_equal(getattr(back, col), getattr(ds, col))
    assert back.run_ids.tolist() == [3, 7]
    assert len(ds.subset_runs([7])) == 5


@pytest.mark.parametrize("body, where", [
    ("1,0.0,1,2,3,4,5,6,7,0.5\n1,0.1,1,2,3,4,5,6,0.5\n", ":3:"),
    ("1,0.0,1,2,3,4,5,6,x,0.5\n", ":2:"),
    ("1,0.0,1,2,3,4,5,6,nan,0.5\n", ":2:"),
])
def test_malformed_dataset_rows_name_the_line(tmp_path, body, where):
    p = tmp_path / "bad.csv"
    p.write_text(",".join(DATASET_COLUMNS) + "\n" + body)
    with pytest.raises(DataFormatError, match=where):
        Dataset.from_csv(p)


def test_bad_header_and_empty_files(tmp_path):
    p = tmp_path / "h.csv"
    p.write_text("run_id,t\n")
    with pytest.raises(DataFormatError, match="header"):
        Dataset.from_csv(p)
    p.write_text("")
    with pytest.raises(DataFormatError):
        Dataset.from_csv(p)
    p.write_text(",".join(DATASET_COLUMNS) + "\n")
    with pytest.raises(DataFormatError, match="no samples"):
        Dataset.from_csv(p)


def test_trace_csv_round_trip(tmp_path):
    trace = run_closed_loop(None, build_course(), SpeedProfile.fixed(30.0), VehicleParams(),
                            PdGains(), LoopSettings(max_time=1.0), setpoint=0.2)
    trace.to_csv(tmp_path / "t.csv")
    tab = read_trace_csv(tmp_path / "t.csv")
    assert tuple(tab.columns) == TRACE_COLUMNS
    assert len(tab) == len(trace.records)
    for c in TRACE_COLUMNS:
        np.testing.assert_array_equal(tab[c], trace.column(c))


def test_config_defaults_and_overrides(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text("seed = 5\n[expert]\nnum_runs = 10\ntrain_runs = 8\n"
                 "[controller]\np = 6.0\nschedule = [[15.0, 1.0], [60.0, 2.0]]\n"
                 "[run]\ntrials = 3\n")
    cfg = load_config(p)
    assert cfg.seed == 5 and cfg.expert.seed == 5 and cfg.train.seed == 5
    assert cfg.expert.num_runs == 10 and cfg.run.trials == 3
    assert cfg.controller.schedule == ((15.0, 1.0), (60.0, 2.0))
    assert cfg.train.frame_stride == ExperimentConfig().train.frame_stride
    assert cfg.with_seed(9).expert.seed == 9


@pytest.mark.parametrize("data, match", [
    ({"bogus": 1}, "bogus"),
    ({"expert": {"num_runz": 3}}, "num_runz"),
    ({"train": {"epochs": 0}}, r"\[train\]"),
    ({"seed": -1}, "seed"),
    ({"course": {"x_finish": 100.0}}, r"\[course\]"),
    ({"controller": "fast"}, "table"),
])
def test_config_errors(data, match):
    with pytest.raises(ConfigError, match=match):
        config_from_dict(data)


def test_config_file_errors(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "missing.toml")
    (tmp_path / "bad.toml").write_text("seed = = 3\n")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "bad.toml")
