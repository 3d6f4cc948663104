import numpy as np
import pandas as pd
import pytest

from tools.errors import ConfigError
from utils.csv_io import ArtifactWriter, header_line, read_csv, read_header, write_csv


def test_header_line_format():
    assert header_line("0123456789abcdef", 42) == "# config_hash=0123456789abcdef seed=42\n"


def test_write_then_read_keeps_full_precision(tmp_path):
    frame = pd.DataFrame({"x": [0.1, 1.0 / 3.0], "p": [np.pi, np.e]})
    path = write_csv(frame, tmp_path / "nested" / "density.csv", "abcdabcdabcdabcd", 5)
    assert path.read_text(encoding="utf-8").splitlines()[0] == "# config_hash=abcdabcdabcdabcd seed=5"
    table, header = read_csv(path)
    assert list(table.columns) == ["x", "p"]
    np.testing.assert_allclose(table.to_numpy(), frame.to_numpy(), rtol=1e-15)
    assert header == {"config_hash": "abcdabcdabcdabcd", "seed": "5"}


def test_plain_csv_has_no_header(tmp_path):
    path = tmp_path / "plain.csv"
    pd.DataFrame({"x": [0.5]}).to_csv(path, index=False)
    assert read_header(path) == {}
    assert read_csv(path)[0]["x"].tolist() == [0.5]


def test_missing_input_is_a_config_error(tmp_path):
    with pytest.raises(ConfigError):
        read_csv(tmp_path / "nothing.csv")


@pytest.mark.parametrize("text", ["", "# config_hash=0123456789abcdef seed=1\n", "x,p\n"])
def test_empty_input_is_a_config_error(tmp_path, text):
    path = tmp_path / "empty.csv"
    path.write_text(text)
    with pytest.raises(ConfigError):
        read_csv(path)


def test_artifact_writer_prefixes_files(tmp_path):
    writer = ArtifactWriter(str(tmp_path), "ffffffffffffffff", 0, prefix="sde")
    writer.write("histogram", pd.DataFrame({"count": [1, 2]}))
    writer.write("summary", pd.DataFrame({"mean": [0.5]}))
    assert [p.name for p in writer.written] == ["sde_histogram.csv", "sde_summary.csv"]
    assert read_header(writer.written[0])["config_hash"] == "ffffffffffffffff"
