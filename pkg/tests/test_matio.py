import numpy as np
import pytest

from manifoldconc.matio import read_matrix, read_tensor, write_matrix, write_tensor


def test_matrix_roundtrip_is_exact(tmp_path, rng):
    A = rng.standard_normal((4, 3))
    p = tmp_path / "a.csv"
    write_matrix(p, A, comments=["note"])
    lines = p.read_text().splitlines()
    assert lines[0] == "# rows=4 cols=3"
    assert lines[1] == "# note"
    np.testing.assert_array_equal(read_matrix(p), A)


def test_matrix_header_checks(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("1,2\n3,4\n")
    with pytest.raises(ValueError, match="header"):
        read_matrix(p)
    p.write_text("# rows=2 cols=3\n1,2\n3,4\n")
    with pytest.raises(ValueError, match="body"):
        read_matrix(p)
    p.write_text("# rows=1 cols=2\n1,nan\n")
    with pytest.raises(ValueError, match="non-finite"):
        read_matrix(p)


def test_tensor_roundtrip(tmp_path, rng):
    T = rng.standard_normal((2, 3, 4))
    p = tmp_path / "t.csv"
    write_tensor(p, T)
    assert p.read_text().splitlines()[0] == "# order=3 dims=2,3,4"
    np.testing.assert_array_equal(read_tensor(p), T)
    v = rng.standard_normal(5)
    write_tensor(p, v)
    np.testing.assert_array_equal(read_tensor(p), v)


def test_tensor_size_mismatch(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("# order=2 dims=2,2\n1,2\n3\n")
    with pytest.raises(ValueError):
        read_tensor(p)
