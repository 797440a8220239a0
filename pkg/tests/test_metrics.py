import numpy as np
import pytest

from flowkrim import KrimFactors, mae, param_count, sparsity_report


def test_mae_examples():
    assert mae(np.zeros((2, 2)), np.zeros((2, 2))) == 0.0
    assert mae([[1.0, -1.0]], [[0.0, 0.0]]) == 1.0
    assert mae([[3.0, 0.0, 0.0, 0.0]], np.zeros((1, 4))) == 0.75
    with pytest.raises(ValueError):
        mae(np.zeros((2, 2)), np.zeros((2, 3)))


@pytest.mark.parametrize("args,expected", [
    ((40, 150, 300, 10, 10), 6400),
    ((38, 50, 300, 5, 5), 2190),
    ((1, 1, 1, 1, 1), 4),
])
def test_param_count(args, expected):
    assert param_count(*args) == expected


def test_param_count_rejects_zero():
    with pytest.raises(ValueError):
        param_count(40, 40, 300, 0, 10)


def test_sparsity_report():
    f = KrimFactors(np.zeros((2, 2)), np.array([[1.0, 0.0]]), np.array([[5e-4, 2e-3]]),
                    np.eye(2), np.full((2, 2), 0.5))
    assert sparsity_report(f) == {"u1": 0.5, "u2": 0.5, "v1": 0.5, "v2": 1.0}
    with pytest.raises(ValueError):
        sparsity_report(f, 0.0)
