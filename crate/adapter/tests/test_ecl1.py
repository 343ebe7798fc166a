import numpy as np
import pytest

from drift_extract import ecl1


def base_cloud():
    return ecl1.Cloud(3, "base", ["s0", "s1"], np.arange(6, dtype=np.float32).reshape(2, 3))


def test_byte_layout():
    data = ecl1.encode(base_cloud())
    assert len(data) == 58
    assert data[:4] == b"ECL1"
    assert data[4:6] == (1).to_bytes(2, "little")
    assert data[6:8] == (3).to_bytes(2, "little")
    assert data[8:16] == (2).to_bytes(8, "little")
    assert data[16:20] == (3).to_bytes(4, "little")
    assert data[20:22] == (4).to_bytes(2, "little")
    assert data[22:26] == b"base"
    assert data[-4:] == b"\x02\x00s1"


def test_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    cloud = ecl1.Cloud(12, "modèle", [f"id-{i}" for i in range(7)], rng.normal(size=(7, 5)).astype(np.float32))
    path = tmp_path / ecl1.layer_file_name(12)
    ecl1.write(cloud, path)
    back = ecl1.read(path)
    assert back.layer_index == 12 and back.model_tag == "modèle"
    assert back.sample_ids == cloud.sample_ids
    assert np.array_equal(back.vectors, cloud.vectors)
    assert path.name == "layer_12.ecl1"


@pytest.mark.parametrize(
    "ids,vectors",
    [
        (["a"], np.zeros((2, 3), np.float32)),
        (["a", "a"], np.zeros((2, 3), np.float32)),
        (["a", "b"], np.array([[0, np.nan, 0], [0, 0, 0]], np.float32)),
        ([], np.zeros((0, 3), np.float32)),
    ],
)
def test_rejects_invalid(ids, vectors):
    with pytest.raises(ValueError):
        ecl1.encode(ecl1.Cloud(0, "t", ids, vectors))


def test_rejects_bad_magic_and_truncation():
    data = ecl1.encode(base_cloud())
    with pytest.raises(ValueError, match="magic"):
        ecl1.decode(b"ECL2" + data[4:])
    with pytest.raises(ValueError):
        ecl1.decode(data[:30])
    with pytest.raises(ValueError, match="trailing"):
        ecl1.decode(data + b"\x00")
