import numpy as np
import pytest

from slab.errors import ConfigurationError
from slab.fieldio import HEADER_SIZE, read_field, read_metric, write_field, write_metric
from slab.geometry import ComplexField, build_domain, build_interval, double_metric, extend, lipschitz_metric


def test_field_roundtrip_domain(tmp_path, rng):
    dom = build_domain(2.5, 8, 9)
    u = ComplexField(rng.standard_normal(dom.shape) + 1j * rng.standard_normal(dom.shape), dom)
    write_field(tmp_path / "u.slab", u)
    assert (tmp_path / "u.slab").stat().st_size == HEADER_SIZE + 16 * u.values.size
    back = read_field(tmp_path / "u.slab")
    np.testing.assert_array_equal(back.values, u.values)
    assert back.grid.L == 2.5 and back.grid.shape == dom.shape
    assert back.geometry == "domain"


def test_field_roundtrip_doubled(tmp_path):
    dom = build_interval(9)
    u = ComplexField(np.sin(np.pi * dom.r), dom)
    v = extend(u, "dirichlet")
    write_field(tmp_path / "v.slab", v)
    back = read_field(tmp_path / "v.slab")
    assert back.symmetry == "odd" and back.geometry == "double"
    np.testing.assert_array_equal(back.values, v.values)


def test_metric_roundtrip(tmp_path):
    g = double_metric(lipschitz_metric(build_domain(2.0, 8, 9)))
    write_metric(tmp_path / "g.slab", g)
    back = read_metric(tmp_path / "g.slab")
    np.testing.assert_array_equal(back.values, g.values)
    with pytest.raises(ConfigurationError):
        read_field(tmp_path / "g.slab")


def test_corrupt_files(tmp_path):
    (tmp_path / "short").write_bytes(b"SLAB")
    with pytest.raises(ConfigurationError):
        read_field(tmp_path / "short")
    (tmp_path / "magic").write_bytes(b"XXXX" + bytes(60))
    with pytest.raises(ConfigurationError):
        read_field(tmp_path / "magic")
    u = ComplexField(np.zeros(9), build_interval(9))
    write_field(tmp_path / "trunc", u)
    data = (tmp_path / "trunc").read_bytes()
    (tmp_path / "trunc").write_bytes(data[:-16])
    with pytest.raises(ConfigurationError):
        read_field(tmp_path / "trunc")
