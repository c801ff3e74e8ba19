import pandas as pd
import pytest

import run_pipeline
from genstream.codec import Scheme
from genstream.config import RunSpec
from genstream.report import CSV_COLUMNS, transport_row, write_csv


def test_predict_writes_csv(tmp_path, capsys):
    out = tmp_path / "predict.csv"
    code = run_pipeline.main(["predict", "--scheme", "rls", "--scheme", "rs", "--gen-size", "4",
                              "--gen-size", "16", "--blocks", "64", "--out", str(out)])
    assert code == 0
    frame = pd.read_csv(out)
    assert list(frame.columns) == CSV_COLUMNS
    assert list(zip(frame.scheme, frame.g)) == [("rls", 4), ("rls", 16), ("rs", 4), ("rs", 16)]


def test_simulate_streams_csv_to_stdout(capsys):
    code = run_pipeline.main(["simulate", "--scheme", "pc", "--gen-size", "4", "--blocks", "16",
                              "--trials", "20", "--seed", "1"])
    assert code == 0
    captured = capsys.readouterr()
    lines = captured.out.splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 2
    assert "energy_J is modelled" in captured.err


def test_config_file_sits_under_flags(tmp_path):
    config = tmp_path / "run.env"
    config.write_text("scheme=rl\ngen_size=2\nblocks=8\nepsilon=0.4\n")
    out = tmp_path / "rows.csv"
    assert run_pipeline.main(["predict", "--config", str(config), "--epsilon", "0.1", "--out", str(out)]) == 0
    frame = pd.read_csv(out)
    assert frame.epsilon.tolist() == [0.1]
    assert frame.scheme.tolist() == ["rl"]


def test_errors_become_exit_code_one(capsys):
    assert run_pipeline.main(["predict", "--gen-size", "1024"]) == 1
    assert "❌" in capsys.readouterr().out
    assert run_pipeline.main(["send", "--scheme", "rls", "--gen-size", "4"]) == 1


def test_compare_reads_transport_rows(tmp_path):
    spec = RunSpec("send", schemes=(Scheme.PC,), gen_sizes=(4,), blocks=16)
    params = spec.params(Scheme.PC, 4)
    sessions = tmp_path / "sessions.csv"
    write_csv([transport_row(spec, params.with_epsilon(0.15), t, seed) for seed, t in enumerate((19, 22, 27))],
              sessions)
    out = tmp_path / "compare.csv"
    assert run_pipeline.main(["compare", "--scheme", "pc", "--gen-size", "4", "--blocks", "16",
                              "--transport-csv", str(sessions), "--out", str(out)]) == 0
    frame = pd.read_csv(out)
    assert frame.source.tolist() == ["analytic", "transport"]
    assert frame.trials.tolist() == [0, 3]
    assert frame.mean_T[1] == pytest.approx(68 / 3)
