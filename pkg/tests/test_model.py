import io

import numpy as np
import pytest

from usmo.exceptions import InputError, ParseError
from usmo.kernel import KernelSpec
from usmo.model import Model, dumps, load, loads, predict_label, predict_score, save


def t1_model():
    return Model(KernelSpec.linear(), 0.0, [1.0, -0.5, -0.5], [[1.0], [1.0], [-1.0]])


def test_predict_t1():
    m = t1_model()
    assert predict_score(m, [1.0]) == 1.0
    assert predict_score(m, [-1.0]) == -1.0
    assert predict_label(m, [1.0]) == 1 and predict_label(m, [-1.0]) == -1


def test_empty_expansion_returns_bias():
    m = Model(KernelSpec.gaussian(), 0.25, np.zeros(0), np.zeros((0, 3)))
    assert predict_score(m, [1, 2, 3]) == 0.25
    np.testing.assert_array_equal(m.decision_function(np.ones((4, 3))), 0.25)


def test_zero_score_is_positive():
    m = Model(KernelSpec.linear(), 0.0, np.zeros(0), np.zeros((0, 1)))
    assert predict_label(m, [5.0]) == 1
    assert m.predict([[1.0]])[0] == 1


def test_dimension_mismatch():
    with pytest.raises(InputError):
        predict_score(t1_model(), [1.0, 2.0])
    with pytest.raises(InputError):
        t1_model().decision_function(np.ones((2, 3)))


def test_construction_validation():
    with pytest.raises(InputError):
        Model(KernelSpec.linear(), 0.0, [1.0, 2.0], [[1.0]])
    with pytest.raises(InputError):
        Model(KernelSpec.linear(), float("nan"), [1.0], [[1.0]])


def test_linearity_in_coefficients(rng):
    sv = rng.normal(size=(7, 3))
    a = rng.normal(size=7)
    m = Model(KernelSpec.gaussian(0.6), 0.3, a, sv)
    m2 = Model(KernelSpec.gaussian(0.6), 0.6, 2 * a, sv)
    X = rng.normal(size=(20, 3))
    np.testing.assert_array_equal(m2.decision_function(X), 2 * m.decision_function(X))


def test_file_layout():
    text = dumps(t1_model())
    assert text.splitlines() == [
        "usmo-model v1", "kernel linear", "bias 0", "dim 1", "nsv 3", "1 1:1", "-0.5 1:1", "-0.5 1:-1",
    ]
    assert text.endswith("\n") and "\r" not in text


def test_round_trip_t1():
    m = t1_model()
    assert loads(dumps(m)) == m


def test_round_trip_bit_exact(rng, tmp_path):
    sv = rng.normal(size=(9, 4)) * 10.0 ** rng.integers(-200, 200, size=(9, 4))
    sv[rng.random((9, 4)) < 0.3] = 0.0
    sv[0, 0] = -0.0
    m = Model(KernelSpec.gaussian(np.pi), rng.normal() * 1e-300, rng.normal(size=9), sv)
    path = tmp_path / "m.txt"
    save(m, path)
    back = load(path)
    assert back == m
    assert np.signbit(back.support_vectors[0, 0])
    probe = rng.normal(size=(5, 4))
    m_small = Model(KernelSpec.gaussian(np.pi), 0.1, rng.normal(size=3), rng.normal(size=(3, 4)))
    again = loads(dumps(m_small))
    np.testing.assert_array_equal(again.decision_function(probe), m_small.decision_function(probe))


def test_save_to_stream():
    buf = io.StringIO()
    save(t1_model(), buf)
    assert load(io.StringIO(buf.getvalue())) == t1_model()


@pytest.mark.parametrize(
    "text,line",
    [
        ("usmo-model v99\n", 1),
        ("other v1\n", 1),
        ("", 1),
        ("usmo-model v1\nkernel poly\n", 2),
        ("usmo-model v1\nkernel gaussian -1\n", 2),
        ("usmo-model v1\nkernel linear\nbias nan\ndim 1\nnsv 0\n", 3),
        ("usmo-model v1\nkernel linear\nbias 0\n", 4),
        ("usmo-model v1\nkernel linear\nbias 0\ndim 1\nnsv 1\n1 1:\n", 6),
        ("usmo-model v1\nkernel linear\nbias 0\ndim 2\nnsv 1\n1 2:1 1:1\n", 6),
        ("usmo-model v1\nkernel linear\nbias 0\ndim 1\nnsv 1\n1 2:1\n", 6),
        ("usmo-model v1\nkernel linear\nbias 0\ndim 1\nnsv 1\ninf 1:1\n", 6),
        ("usmo-model v1\nkernel linear\nbias 0\ndim 1\nnsv 2\n1 1:1\n", 7),
    ],
)
def test_parse_errors_name_the_line(text, line):
    with pytest.raises(ParseError) as err:
        loads(text)
    assert err.value.line == line
    assert f"line {line}" in str(err.value)


def test_version_error_message():
    with pytest.raises(ParseError, match="version"):
        loads("usmo-model v99\nkernel linear\nbias 0\ndim 1\nnsv 0\n")


def test_models_immutable():
    m = t1_model()
    with pytest.raises(Exception):
        m.bias = 1.0
