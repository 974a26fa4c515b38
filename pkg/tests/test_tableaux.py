import numpy as np
import pytest

from rkproj import ButcherTableau, builtin_tableaux, get_tableau, tableau_names, verify_order_conditions

EXPECTED = {
    "ssprk22": (2, 2),
    "rk33": (3, 3),
    "heun33": (3, 3),
    "rk44": (4, 4),
    "dp75": (7, 5),
    "bsrk85": (8, 5),
}


def test_names_and_shapes():
    assert tableau_names() == list(EXPECTED)
    for tab in builtin_tableaux():
        s, p = EXPECTED[tab.name]
        assert tab.stages == s and tab.order == p
        assert tab.a.shape == (s, s)
        assert np.all(np.triu(tab.a) == 0)
        assert tab.row_sum_defect() < 1e-15
        assert tab.weight_sum_defect() < 1e-15


def test_arrays_are_read_only():
    tab = get_tableau("rk44")
    with pytest.raises(ValueError):
        tab.b[0] = 1.0
    with pytest.raises(ValueError):
        tab.a[1, 0] = 0.0


def test_get_tableau_is_cached_and_rejects_unknown():
    assert get_tableau("dp75") is get_tableau("dp75")
    with pytest.raises(KeyError, match="rk44"):
        get_tableau("rk45")


def test_rk44_coefficients():
    tab = get_tableau("rk44")
    np.testing.assert_array_equal(tab.c, [0, 0.5, 0.5, 1])
    np.testing.assert_array_equal(tab.b, [1 / 6, 1 / 3, 1 / 3, 1 / 6])
    assert tab.a[1, 0] == tab.a[2, 1] == 0.5 and tab.a[3, 2] == 1.0


def test_kutta_third_order():
    tab = get_tableau("rk33")
    np.testing.assert_array_equal(tab.c, [0, 0.5, 1])
    assert tab.a[2, 0] == -1.0 and tab.a[2, 1] == 2.0
    np.testing.assert_allclose(tab.b, [1 / 6, 2 / 3, 1 / 6], rtol=0, atol=1e-16)


@pytest.mark.parametrize("name", list(EXPECTED))
def test_order_conditions_at_claimed_order(name):
    tab = get_tableau(name)
    rep = verify_order_conditions(tab, tab.order)
    assert rep.ok, rep.failures
    n_trees = {1: 1, 2: 2, 3: 4, 4: 8, 5: 17}[tab.order]
    assert len(rep.conditions) == n_trees


@pytest.mark.parametrize("name", [n for n, (s, p) in EXPECTED.items() if p < 5])
def test_order_conditions_fail_one_order_up(name):
    tab = get_tableau(name)
    rep = verify_order_conditions(tab, tab.order + 1)
    assert not rep.ok
    assert all(c.order == tab.order + 1 for c in rep.failures)


@pytest.mark.parametrize("name", ["dp75", "bsrk85"])
def test_native_embedded_weights(name):
    tab = get_tableau(name)
    emb = tab.embedded
    assert emb is not None and emb.order == 4
    assert verify_order_conditions(tab, 4, weights=emb.weights).ok
    assert not verify_order_conditions(tab, 5, weights=emb.weights).ok


def test_verify_rejects_bad_range():
    tab = get_tableau("rk44")
    for bad in (0, 6):
        with pytest.raises(ValueError):
            verify_order_conditions(tab, bad)


def test_construction_validates():
    with pytest.raises(ValueError, match="explicit"):
        ButcherTableau("bad", [[0, 1], [0, 0]], [0.5, 0.5], [0, 0], 1)
    with pytest.raises(ValueError, match="shapes"):
        ButcherTableau("bad", [[0]], [0.5, 0.5], [0, 0], 1)


def test_euler_weights():
    w = get_tableau("bsrk85").euler_weights()
    assert w.sum() == 1 and w[0] == 1


def _local_error(tab, dt):
    # y' = y cos t, y(0) = 1, exact y = exp(sin t); extended precision keeps rounding out of the way
    A = tab.a.astype(np.longdouble)
    b = tab.b.astype(np.longdouble)
    c = tab.c.astype(np.longdouble)
    h = np.longdouble(dt)
    K = []
    for i in range(tab.stages):
        y = 1 + h * sum(A[i, j] * K[j] for j in range(i))
        K.append(y * np.cos(c[i] * h))
    y1 = 1 + h * sum(b[j] * K[j] for j in range(tab.stages))
    return abs(float(y1 - np.exp(np.sin(h))))


@pytest.mark.parametrize("name", list(EXPECTED))
def test_empirical_local_order(name):
    # independent of the tree conditions: local error must scale like dt^(p+1)
    tab = get_tableau(name)
    dts = 0.1 * 0.5 ** np.arange(4)
    errs = [_local_error(tab, dt) for dt in dts]
    slope = np.polyfit(np.log2(dts), np.log2(errs), 1)[0]
    assert slope == pytest.approx(tab.order + 1, abs=0.3)
