import numpy as np
import pytest

from infratl.container import ContainerError, read_container, write_container


def test_round_trip(tmp_path):
    path = tmp_path / "x.itl1"
    a = np.arange(12, dtype=np.float32).reshape(3, 4)
    b = np.linspace(-1, 1, 7).astype(np.float32)
    write_container(path, {"a": a, "b": b}, {"note": "hello", "n": 3})
    arrays, meta = read_container(path)
    assert set(arrays) == {"a", "b"}
    assert np.array_equal(arrays["a"], a)
    assert np.array_equal(arrays["b"], b)
    assert meta == {"note": "hello", "n": 3}


def test_float64_inputs_are_cast(tmp_path):
    path = tmp_path / "x.itl1"
    a = np.array([1.0, 2.0, np.pi])
    write_container(path, {"a": a})
    arrays, _ = read_container(path)
    assert arrays["a"].dtype == np.float32
    assert np.allclose(arrays["a"], a, atol=1e-6)


def test_write_is_deterministic(tmp_path):
    a = np.arange(5, dtype=np.float32)
    p1, p2 = tmp_path / "1.itl1", tmp_path / "2.itl1"
    write_container(p1, {"a": a}, {"k": 1})
    write_container(p2, {"a": a}, {"k": 1})
    assert p1.read_bytes() == p2.read_bytes()


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.itl1"
    path.write_bytes(b"NOPE" + b"\x00" * 64)
    with pytest.raises(ContainerError, match="magic"):
        read_container(path)


def test_truncated_payload(tmp_path):
    path = tmp_path / "t.itl1"
    write_container(path, {"a": np.zeros(100, dtype=np.float32)})
    data = path.read_bytes()
    path.write_bytes(data[:-50])
    with pytest.raises(ContainerError, match="truncated"):
        read_container(path)


def test_truncated_header(tmp_path):
    path = tmp_path / "h.itl1"
    write_container(path, {"a": np.zeros(4, dtype=np.float32)})
    path.write_bytes(path.read_bytes()[:10])
    with pytest.raises(ContainerError):
        read_container(path)
