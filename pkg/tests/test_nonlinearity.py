import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from grushinlab.nonlinearity import NonlinearitySpec, dominated_on_range


def test_power_values():
    h = NonlinearitySpec.power(2)
    assert h(-2.0) == -4.0
    assert NonlinearitySpec.power(1.5)(3.0) == pytest.approx(3 ** 1.5)
    assert NonlinearitySpec.power(3)(-2.0) == -8.0


def test_table_interpolation_and_extension():
    h = NonlinearitySpec.table([0, 1, 2], [0, 1, 4], 2)
    assert h(0.5) == 0.5
    assert h(1.5) == 2.5
    assert h(3.0) == 7.0          # last slope 3
    assert h(-1.5) == -2.5


@pytest.mark.parametrize("nodes,values", [([0, 1], [1, 2]), ([0, 2, 1], [0, 1, 2]), ([0, 1, 2], [0, 2, 1])])
def test_table_validation(nodes, values):
    with pytest.raises(ValueError):
        NonlinearitySpec.table(nodes, values, 2)


def test_rejects_bad_kind_and_exponent():
    with pytest.raises(ValueError):
        NonlinearitySpec("cubic")
    with pytest.raises(ValueError):
        NonlinearitySpec.power(1.0)


def test_dict_roundtrip():
    for h in (NonlinearitySpec.power(2.5), NonlinearitySpec.table([0, 1], [0, 3], 2)):
        assert NonlinearitySpec.from_dict(h.as_dict()) == h


def test_growth_constant_of_power():
    # |u^2 sgn u - v^2 sgn v| <= |u - v| (|u| + |v|)
    c = NonlinearitySpec.power(2).growth_constant(2.0)
    assert 0.5 < c <= 1 + 1e-12


def test_domination_below_state_one():
    # u^3 <= u^2 on [0, 1] and both are increasing
    ok, margin = dominated_on_range(NonlinearitySpec.power(3), NonlinearitySpec.power(2), 1.0)
    assert ok and margin > -1e-15
    ok, _ = dominated_on_range(NonlinearitySpec.power(3), NonlinearitySpec.power(2), 2.0)
    assert not ok


@settings(max_examples=50, deadline=None)
@given(st.floats(1.1, 5), st.floats(-10, 10), st.floats(-10, 10))
def test_power_odd_and_monotone(p, a, b):
    h = NonlinearitySpec.power(p)
    assert h(-a) == -h(a)
    lo, hi = min(a, b), max(a, b)
    assert h(lo) <= h(hi)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.01, 2), min_size=2, max_size=6), st.lists(st.floats(0, 2), min_size=2, max_size=6),
       st.floats(-20, 20), st.floats(-20, 20))
def test_table_odd_and_monotone(steps, rises, a, b):
    k = min(len(steps), len(rises))
    nodes = np.r_[0, np.cumsum(steps[:k])]
    values = np.r_[0, np.cumsum(rises[:k])]
    h = NonlinearitySpec.table(nodes, values, 2)
    assert h(-a) == -h(a)
    lo, hi = min(a, b), max(a, b)
    assert h(lo) <= h(hi) + 1e-12
