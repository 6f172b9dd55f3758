import numpy as np
import pytest

from mogpaug.kernels import Matern52
from mogpaug.synthetic import Scenario, generate


def test_floor_correlation_sets_vertical_gap():
    sc = Scenario(floor_correlation=0.8)
    assert Matern52(sc.length_scale).value(np.array([sc.field_floor_gap()]))[0] == pytest.approx(0.8)
    assert Scenario(floor_correlation=None).field_floor_gap() == 4.0
    with pytest.raises(ValueError):
        Scenario(floor_correlation=1.0).field_floor_gap()


def test_generate_shapes_and_sparsity():
    sc = Scenario(width=16.0, depth=8.0, n_aps=3, n_test_per_floor=5, sparse_keep=0.5, seed=1)
    train, test, truth = generate(sc)
    per_floor = 5 * 3
    assert truth["values"].shape == (3 * per_floor, 3)
    assert len(train) == truth["surveyed"].sum()
    assert truth["surveyed"][truth["floor"] != 1].all()
    assert 0 < truth["surveyed"][truth["floor"] == 1].sum() < per_floor
    assert len(test) == 15
    np.testing.assert_array_equal(truth["xyz"][:, 2], truth["floor"] * 4.0)


def test_cut_layout_and_determinism():
    sc = Scenario(width=16.0, depth=8.0, n_aps=3, sparse_layout="cut", sparse_keep=0.5, seed=2)
    a, _, truth = generate(sc)
    b, _, _ = generate(sc)
    assert a.fingerprint_hash() == b.fingerprint_hash()
    kept = truth["xyz"][(truth["floor"] == 1) & truth["surveyed"]]
    assert kept[:, 0].max() <= 8.0
    with pytest.raises(ValueError):
        generate(Scenario(sparse_layout="zigzag"))
