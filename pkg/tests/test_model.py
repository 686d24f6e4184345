import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fswel.model import (
    AssocParams,
    MissParams,
    ModelSpec,
    assoc_linpred,
    miss_design,
    miss_prob,
    term_matrix,
)

SIM = ModelSpec(("x",), ("x", "G"), ("1", "Y", "x", "G", "Y:x", "Y:G"))
AGE = ("age[24-30]", "age[30-35]", "age[35-40]", "age[>40]", "nulliparous")
FAMILY_STUDY = ModelSpec(AGE, AGE + ("G", "nulliparous:G"), ("1",) + AGE + ("G",), controls_only=True)


def test_linpred_zero_parameters():
    for x, g in [((0.0,), 0), ((1.0,), 2)]:
        assert assoc_linpred(SIM, AssocParams([0.0, 0.0], 0.2), x, g) == 0.0


def test_linpred_simulation_coefficients():
    eta = AssocParams([math.log(1.2), math.log(1.5)], 0.2)
    assert assoc_linpred(SIM, eta, (1.0,), 2) == pytest.approx(math.log(1.2) + 2 * math.log(1.5))


def test_linpred_nulliparous_interaction():
    beta = np.zeros(FAMILY_STUDY.n_assoc)
    beta[-2], beta[-1] = 0.369, -0.549
    x = (0, 0, 0, 0, 1)
    assert assoc_linpred(FAMILY_STUDY, AssocParams(beta, 0.4), x, 1) == pytest.approx(0.369 - 0.549)


def test_miss_design_layout():
    np.testing.assert_array_equal(miss_design(SIM, 1, (1.0,), 2), [1, 1, 1, 2, 1, 2])
    np.testing.assert_array_equal(miss_design(SIM, 0, (0.0,), 0), [1, 0, 0, 0, 0, 0])
    np.testing.assert_array_equal(miss_design(FAMILY_STUDY, 0, (1, 0, 0, 0, 0), 1), [1, 1, 0, 0, 0, 0, 1])


def test_miss_prob_examples():
    assert miss_prob(SIM, np.zeros(6), 1, (1.0,), 2) == 0.5
    spec = ModelSpec(("x",), ("G",), ("1",))
    assert miss_prob(spec, [math.log(4)], 0, (0.0,), 1) == pytest.approx(0.8)
    with pytest.raises(ValueError):
        miss_prob(spec, [0.0, 1.0], 0, (0.0,), 1)


def test_intercept_moved_first_and_names():
    spec = ModelSpec(("x",), ("x", "G"), ("x", "1", "G"))
    assert spec.miss_terms == ("1", "x", "G")
    assert spec.alpha_names == ["alpha[1]", "alpha[x]", "alpha[G]"]
    assert spec.eta_names == ["x", "G", "theta"]
    assert spec.mar_terms == ("1", "x")


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(covariates=("x",), assoc_terms=("1", "x", "G"), miss_terms=("1",)),
        dict(covariates=("x",), assoc_terms=("x", "G"), miss_terms=("x",)),
        dict(covariates=("x",), assoc_terms=("z",), miss_terms=("1",)),
        dict(covariates=("x",), assoc_terms=("x", "Y"), miss_terms=("1",)),
        dict(covariates=("x",), assoc_terms=("x", "x"), miss_terms=("1",)),
        dict(covariates=("x",), assoc_terms=("x",), miss_terms=("1", "Y"), controls_only=True),
        dict(covariates=("x",), assoc_terms=("x",), miss_terms=("1",), mar_terms=("1", "G")),
        dict(covariates=("x", "x"), assoc_terms=("x",), miss_terms=("1",)),
    ],
)
def test_invalid_specs_rejected(kwargs):
    with pytest.raises(ValueError):
        ModelSpec(**kwargs)


def test_log_additive_constructor():
    spec = ModelSpec.log_additive(("a", "b"), interactions=("b",))
    assert spec.assoc_terms == ("a", "b", "G", "b:G")
    assert spec.miss_terms == ("1", "Y", "a", "b", "G")
    np.testing.assert_array_equal(spec.genetic_mask, [False, False, True, True])
    eta = AssocParams([1, 2, 3, 4], 0.3)
    np.testing.assert_array_equal(eta.beta1(spec), [1, 2])
    np.testing.assert_array_equal(eta.beta2(spec), [3, 4])
    np.testing.assert_array_equal(AssocParams.from_vector(eta.to_vector()).beta, eta.beta)


@given(
    st.lists(st.floats(-5, 5), min_size=2, max_size=2),
    st.integers(0, 2),
    st.integers(0, 1),
)
def test_term_matrix_products(x, g, y):
    out = term_matrix(("1", "a", "b", "G", "a:G", "Y:b:G"), ("a", "b"), [x], g, y)[0]
    a, b = x
    np.testing.assert_allclose(out, [1, a, b, g, a * g, y * b * g])


def test_term_matrix_vectorized_broadcast():
    x = np.arange(6.0).reshape(3, 2)
    out = term_matrix(("a", "b:G"), ("a", "b"), x, np.array([0, 1, 2]))
    np.testing.assert_array_equal(out, [[0, 0], [2, 3], [4, 10]])
    assert MissParams([1, 2]).alpha.dtype == float
