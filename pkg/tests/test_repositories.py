import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose

from repositories.report_repository import ReportRepository
from repositories.tensor_repository import TensorRepository
from services.exceptions import TensorFormatError
from services.incoherent import random_incoherent
from services.odeco import to_dense


# ============ TENSOR DENSO ============

def test_parse_tensor_with_comments():
    text = "# tensor 2 x 2\n2 2 2\n1\n2  # fila 0\n3\n4\n"
    t = TensorRepository().parse_tensor(text)
    assert t.dims == (2, 2)
    assert_allclose(t.values, [[1.0, 2.0], [3.0, 4.0]])


@pytest.mark.parametrize("text", [
    "",
    "3 2 2\n" + "1\n" * 8,
    "3 2 2 2\n" + "1\n" * 7,
    "3 2 2 2\n" + "1\n" * 7 + "nan\n",
    "3 2 x 2\n" + "1\n" * 8,
    "2 2 2\n1\n2\n3\nfoo\n",
])
def test_parse_tensor_rejects_malformed(text):
    with pytest.raises(TensorFormatError):
        TensorRepository().parse_tensor(text)


def test_write_and_read_tensor_is_exact(tmp_path, small_odeco):
    repository = TensorRepository(str(tmp_path))
    dense = to_dense(small_odeco)
    path = repository.write_tensor("t.txt", dense)
    assert path == str(tmp_path / "t.txt")
    with open(path, encoding="utf-8") as fh:
        assert fh.readline().strip() == "3 4 5 6"
    assert np.array_equal(repository.read_tensor("t.txt").values, dense.values)


def test_read_missing_file(tmp_path):
    with pytest.raises(TensorFormatError):
        TensorRepository(str(tmp_path)).read_tensor("missing.txt")


# ============ ODECO Y CP ============

def test_parse_odeco_pads_to_d_min():
    text = "3 2 2 2 1\n2.5\n1\n0\n0\n1\n1\n0\n"
    t = TensorRepository().parse_odeco(text)
    assert t.d_min == 2
    assert_allclose(t.lambdas, [2.5, 0.0])
    assert_allclose(to_dense(t).values[0, 1, 0], 2.5)


def test_parse_odeco_rejects_wrong_counts():
    with pytest.raises(TensorFormatError):
        TensorRepository().parse_odeco("3 2 2 2 1\n2.5 1.0\n1\n0\n0\n1\n1\n0\n")
    with pytest.raises(TensorFormatError):
        TensorRepository().parse_odeco("3 2 2 2 1\n2.5\n1\n0\n0\n1\n1\n")


def test_odeco_file_round_trip(tmp_path, small_odeco):
    repository = TensorRepository(str(tmp_path))
    repository.write_odeco("t.odeco", small_odeco)
    loaded = repository.read_odeco("t.odeco")
    assert np.array_equal(loaded.lambdas, small_odeco.lambdas)
    assert all(np.array_equal(f, g) for f, g in zip(loaded.factors, small_odeco.factors))


def test_incoherent_file_round_trip(tmp_path):
    x = random_incoherent((4, 5, 4), 3, seed=2)
    repository = TensorRepository(str(tmp_path))
    repository.write_incoherent("x.cp", x)
    loaded = repository.read_incoherent("x.cp")
    assert np.array_equal(loaded.etas, x.etas)
    assert loaded.delta == pytest.approx(x.delta)


def test_incoherent_rejects_non_unit_columns():
    with pytest.raises(TensorFormatError):
        TensorRepository().parse_incoherent("2 2 2 1\n1\n2\n0\n1\n0\n")


# ============ PAYLOADS ============

def test_tensor_payload():
    payload = {"dims": [2, 2, 2], "values": [[[1, 0], [0, 0]], [[0, 0], [0, 2]]]}
    t = TensorRepository.tensor_from_payload(payload)
    assert t.values[1, 1, 1] == 2.0
    assert TensorRepository.tensor_to_payload(t)["values"][-1] == 2.0


@pytest.mark.parametrize("payload", [
    [],
    {"dims": [2, 2]},
    {"dims": [2, -2], "values": [1, 2, 3, 4]},
    {"dims": [2, 2], "values": [1, 2, 3]},
    {"dims": [2, 2], "values": ["a", 2, 3, 4]},
])
def test_tensor_payload_rejects(payload):
    with pytest.raises(TensorFormatError):
        TensorRepository.tensor_from_payload(payload)


def test_odeco_payload(small_odeco):
    payload = TensorRepository.odeco_to_payload(small_odeco)
    loaded = TensorRepository.odeco_from_payload(payload)
    assert_allclose(loaded.lambdas, small_odeco.lambdas)
    with pytest.raises(TensorFormatError):
        TensorRepository.odeco_from_payload({"dims": [2, 2], "lambdas": [1.0], "factors": [[[1.0], [0.0]]]})


# ============ REPORTES ============

def test_report_frame_round_trip(tmp_path):
    frame = pd.DataFrame({"k": [0, 1], "value": [1.0 / 3.0, np.pi], "pass": [True, False]})
    repository = ReportRepository(str(tmp_path))
    path = repository.write_frame("out/report.csv", frame, {"seed": 7, "experiment": "demo"})
    loaded, metadata = repository.read_frame(path)
    assert metadata == {"seed": "7", "experiment": "demo"}
    assert loaded["value"].tolist() == frame["value"].tolist()
    assert loaded["pass"].tolist() == [True, False]


def test_render_has_header_then_csv():
    text = ReportRepository.render(pd.DataFrame({"a": [0.1]}), {"seed": 1})
    assert text.splitlines() == ["# seed=1", "a", "0.10000000000000001"]