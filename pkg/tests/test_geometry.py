import numpy as np
import pytest

from fsichannel.geometry import ChannelGeometry, InterfacePatch, build_geometry, normal_at


def make(**over):
    cfg = dict(L1=1.0, L2=2.0, L3=3.0, Nx=8, Ny=8, Nz_lower=8, Nz_elastic=8, Nz_upper=8, Nt=16)
    cfg.update(over)
    return build_geometry(cfg)


def test_uniform_spacing_per_layer():
    geom = make()
    assert geom.dz("lower") == pytest.approx(1.0 / 8)
    assert geom.dz("elastic") == pytest.approx(1.0 / 8)
    z = geom.z_nodes("lower")
    assert z[0] == 0.0 and z[-1] == pytest.approx(1.0)


def test_rejects_unordered_lengths():
    with pytest.raises(ValueError, match="not strictly ordered"):
        make(L2=1.0)
    with pytest.raises(ValueError, match="not strictly ordered"):
        make(L1=-1.0)


def test_interfaces_are_grid_planes():
    geom = make(L1=0.25, L2=0.5, L3=1.0, Nz_lower=8, Nz_elastic=8, Nz_upper=16)
    assert geom.z_nodes("lower")[-1] == pytest.approx(0.25)
    assert geom.z_nodes("elastic")[0] == pytest.approx(0.25)
    assert geom.z_nodes("elastic")[-1] == pytest.approx(0.5)
    assert geom.z_nodes("upper")[0] == pytest.approx(0.5)


def test_rejects_small_or_odd_counts():
    with pytest.raises(ValueError, match="too small"):
        make(Nz_lower=2)
    with pytest.raises(ValueError, match="power of two"):
        make(Nx=12)


def test_normals():
    assert np.array_equal(normal_at(InterfacePatch("lower")), [0.0, 0.0, -1.0])
    assert np.array_equal(normal_at(InterfacePatch("upper")), [0.0, 0.0, 1.0])
    for plane in ("lower", "upper"):
        assert np.linalg.norm(normal_at(InterfacePatch(plane))) == 1.0
    with pytest.raises(ValueError):
        InterfacePatch("sideways")


def test_layers_tile_the_channel():
    geom = make(L1=0.5, L2=1.25, L3=2.0)
    nodes = np.concatenate(
        [geom.z_nodes("lower"), geom.z_nodes("elastic"), geom.z_nodes("upper")]
    )
    # interface planes shared once by each adjacent layer, no other overlap
    uniq = np.unique(nodes)
    assert uniq[0] == 0.0 and uniq[-1] == pytest.approx(2.0)
    assert nodes.size == uniq.size + 2


def test_wavenumbers_symmetric_for_real_fields():
    geom = make()
    kx = geom.kx()
    for k in kx:
        if abs(k) != geom.Nx // 2:
            assert -k in kx


def test_interface_indexing():
    geom = make()
    layer, idx = geom.interface_fluid_layer("lower")
    assert layer == "lower" and idx == geom.Nz_lower
    layer, idx = geom.interface_fluid_layer("upper")
    assert layer == "upper" and idx == 0
    assert geom.interface_elastic_index("lower") == 0
    assert geom.interface_elastic_index("upper") == geom.Nz_elastic
