import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mogpaug.errors import InputError, ParameterError
from mogpaug.kernels import (
    RBF,
    Matern52,
    Product,
    Scaled,
    Sum,
    eval_kernel,
    gram_matrix,
    kernel_from_dict,
    kernel_gradient,
)

from oracles import mp_matern52

MATERN_AT_ONE = 0.52399410883182031  # (1 + sqrt5 + 5/3) exp(-sqrt5), 50-digit oracle

lengths = st.floats(0.05, 20.0)
coords = st.lists(st.floats(-10, 10), min_size=2, max_size=2)


def spec_strategy():
    atoms = st.one_of(lengths.map(RBF), lengths.map(Matern52))
    return st.recursive(
        atoms,
        lambda inner: st.one_of(
            st.tuples(inner, inner).map(lambda t: Sum(*t)),
            st.tuples(inner, inner).map(lambda t: Product(*t)),
            st.tuples(st.floats(0.1, 5.0), inner).map(lambda t: Scaled(*t)),
        ),
        max_leaves=4,
    )


def test_rbf_at_zero_distance():
    assert eval_kernel(RBF(2.0), [1.0, 2.0], [1.0, 2.0]) == 1.0


def test_rbf_unit_distance():
    assert eval_kernel(RBF(1.0), [0.0], [1.0]) == pytest.approx(math.exp(-1), abs=1e-15)


def test_matern_unit_distance():
    assert float(mp_matern52(1, 1)) == pytest.approx(MATERN_AT_ONE, abs=1e-16)
    assert eval_kernel(Matern52(1.0), [0.0], [1.0]) == pytest.approx(MATERN_AT_ONE, abs=1e-15)


def test_dimension_mismatch():
    with pytest.raises(InputError):
        eval_kernel(RBF(1.0), [0.0, 1.0], [0.0])


@pytest.mark.parametrize("bad", [0.0, -1.0, float("nan"), float("inf")])
def test_nonpositive_length_scale(bad):
    with pytest.raises(ParameterError):
        Matern52(bad)
    with pytest.raises(ParameterError):
        RBF(bad)


def test_gram_single_point():
    K = gram_matrix(Matern52(0.3), [[1.0, 2.0]])
    assert K.shape == (1, 1) and K[0, 0] == 1.0


def test_gram_duplicate_points():
    np.testing.assert_array_equal(gram_matrix(RBF(1.0), [[0.0], [0.0]]), np.ones((2, 2)))


def test_gram_two_points_matern():
    K = gram_matrix(Matern52(1.0), [[0.0], [1.0]])
    np.testing.assert_allclose(K, [[1, MATERN_AT_ONE], [MATERN_AT_ONE, 1]], atol=1e-15)


def test_gram_ragged_input():
    with pytest.raises(InputError):
        gram_matrix(RBF(1.0), [[0.0, 1.0], [2.0]])


def test_rbf_gradient_values():
    assert kernel_gradient(RBF(3.0), [1.0], [1.0])[0] == 0.0
    assert kernel_gradient(RBF(1.0), [0.0], [1.0])[0] == pytest.approx(
        0.73575888234288464, abs=1e-15
    )
    assert kernel_gradient(Matern52(1.0), [2.0], [2.0])[0] == 0.0


def test_rbf_gradient_finite_difference():
    eps = 1e-6
    fd = (eval_kernel(RBF(1 + eps), [0], [1]) - eval_kernel(RBF(1 - eps), [0], [1])) / (2 * eps)
    assert kernel_gradient(RBF(1.0), [0], [1])[0] == pytest.approx(fd, rel=1e-8)


def test_gradient_order_follows_params():
    spec = Scaled(2.0, Sum(RBF(1.5), Matern52(0.5)))
    assert spec.params() == (2.0, 1.5, 0.5)
    assert len(kernel_gradient(spec, [0.0], [0.7])) == 3
    assert spec.param_names() == [
        "scaled.variance", "scaled.sum.0.rbf.gamma", "scaled.sum.1.matern52.h",
    ]


def test_with_params_round_trip():
    spec = Product(RBF(1.0), Scaled(3.0, Matern52(2.0)))
    assert spec.with_params(spec.params()) == spec
    assert spec.with_params([2.0, 4.0, 5.0]).params() == (2.0, 4.0, 5.0)


def test_json_round_trip_example():
    spec = kernel_from_dict({"type": "matern52", "h": 1.5})
    assert spec == Matern52(1.5)
    assert json.loads(json.dumps(spec.to_dict())) == {"type": "matern52", "h": 1.5}


def test_unknown_kernel_type():
    with pytest.raises(ParameterError):
        kernel_from_dict({"type": "cosine"})


@given(spec_strategy())
def test_json_round_trip_lossless(spec):
    again = kernel_from_dict(json.loads(json.dumps(spec.to_dict())))
    assert again == spec
    assert again.params() == spec.params()


@given(spec_strategy(), coords, coords)
def test_symmetry_exact(spec, a, b):
    assert eval_kernel(spec, a, b) == eval_kernel(spec, b, a)


@given(st.one_of(lengths.map(RBF), lengths.map(Matern52)), coords, coords)
def test_unit_atoms_bounded(spec, a, b):
    k = eval_kernel(spec, a, b)
    if a == b:
        assert k == 1.0
    else:
        assert 0.0 <= k <= 1.0
        # strict inequality unless the distance is negligible w.r.t. the scale
        r = math.dist(a, b)
        if r / spec.params()[0] > 1e-6:
            assert k < 1.0


@given(st.one_of(lengths.map(RBF), lengths.map(Matern52)), st.floats(0.0, 5.0), st.floats(0.0, 5.0))
def test_monotone_decay(spec, r1, r2):
    lo, hi = sorted([r1, r2])
    assert spec.value(lo) >= spec.value(hi)


def test_psd_random_instances():
    rng = np.random.default_rng(1)
    for _ in range(200):
        n, dim = rng.integers(1, 31), rng.integers(1, 4)
        X = rng.uniform(-3, 3, size=(n, dim))
        a, b = rng.uniform(0.05, 5, size=2)
        spec = [Matern52(a), RBF(a), Sum(Matern52(a), Scaled(rng.uniform(0.1, 2), RBF(b))),
                Product(Matern52(a), RBF(b))][rng.integers(4)]
        K = gram_matrix(spec, X)
        assert np.array_equal(K, K.T)
        assert np.linalg.eigvalsh(K).min() >= -1e-8


def test_gradient_random_finite_difference():
    rng = np.random.default_rng(7)
    for _ in range(100):
        spec = Sum(Scaled(rng.uniform(0.2, 3), Matern52(rng.uniform(0.2, 3))),
                   Product(RBF(rng.uniform(0.2, 3)), Matern52(rng.uniform(0.2, 3))))
        x, x2 = rng.normal(size=2), rng.normal(size=2)
        theta = np.array(spec.params())
        g = kernel_gradient(spec, x, x2)
        for i in range(len(theta)):
            h = 1e-6 * max(1.0, theta[i])
            up, dn = theta.copy(), theta.copy()
            up[i] += h
            dn[i] -= h
            fd = (eval_kernel(spec.with_params(up), x, x2)
                  - eval_kernel(spec.with_params(dn), x, x2)) / (2 * h)
            assert abs(g[i] - fd) <= max(1e-5 * abs(fd), 1e-8)


def test_rescaled_matches_coordinate_scaling():
    spec = Sum(RBF(1.2), Matern52(0.7))
    assert eval_kernel(spec.rescaled(3.0), [0.0], [3.0]) == pytest.approx(
        eval_kernel(spec, [0.0], [1.0]), rel=1e-14)
