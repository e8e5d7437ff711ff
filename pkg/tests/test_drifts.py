from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from emweak.drifts import (
    MAX_SVC_DEPTH,
    CatalogError,
    DepthLimitError,
    HolderDrift,
    catalog_get,
    holder_eval,
    svc_eval,
    svc_locate,
    svc_removed_intervals,
    svc_value,
)

from oracles import brute_force_eval, brute_force_intervals


class TestSvcConstruction:
    def test_level_one(self):
        (iv,) = svc_removed_intervals(1)
        assert (iv.left, iv.right) == (Fraction(3, 8), Fraction(5, 8))
        assert str(iv) == "(3/8,5/8)"

    def test_level_two(self):
        ivs = svc_removed_intervals(2)
        assert [(i.left, i.right) for i in ivs] == [
            (Fraction(5, 32), Fraction(7, 32)), (Fraction(25, 32), Fraction(27, 32))]

    @pytest.mark.parametrize("level", range(1, 9))
    def test_matches_centred_gap_construction(self, level):
        ref = [r for r in brute_force_intervals(level) if r[0] == level]
        got = svc_removed_intervals(level)
        assert [(i.index, i.left, i.right) for i in got] == [(r[1], r[2], r[3]) for r in ref]

    def test_cumulative_removed_length_exact(self):
        total = Fraction(0)
        for level in range(1, 21):
            ivs = svc_removed_intervals(level)
            assert len(ivs) == 2 ** (level - 1)
            num = sum(i.right_num - i.left_num for i in ivs)
            total += Fraction(num, 1 << ivs[0].bits)
            assert all(i.length == Fraction(1, 4 ** level) for i in ivs[:4])
        assert total == Fraction(1, 2) * (1 - Fraction(1, 2 ** 20))

    def test_intervals_disjoint_and_ordered(self):
        ivs = [i for n in range(1, 8) for i in svc_removed_intervals(n)]
        ivs.sort(key=lambda i: i.left)
        for a, b in zip(ivs, ivs[1:]):
            assert a.right < b.left

    def test_depth_limit(self):
        assert svc_locate(0.5, MAX_SVC_DEPTH).tag == "I(1,1)"
        with pytest.raises(DepthLimitError):
            svc_removed_intervals(MAX_SVC_DEPTH + 1)
        with pytest.raises(DepthLimitError):
            svc_eval(0.5, MAX_SVC_DEPTH + 1)


class TestSvcEval:
    @pytest.mark.parametrize("x, value, tag", [
        (0.5, 0.75, "I(1,1)"),
        (0.19, 0.875, "I(2,1)"),
        (0.8, 0.9375, "I(2,2)"),
        (3 / 8, 1.0, "A"),
        (5 / 8, 1.0, "A"),
        (0.0, 1.0, "A"),
        (1.0, 1.0, "A"),
        (-0.1, 0.0, "outside"),
        (1.5, 0.0, "outside"),
    ])
    def test_examples(self, x, value, tag):
        loc = svc_locate(x, 25)
        assert loc.tag == tag
        assert svc_value(loc) == value
        assert svc_eval(x, 25) == value
        assert svc_eval(np.array([x]), 25)[0] == value

    def test_vector_matches_brute_force(self, rng):
        depth = 12
        removed = brute_force_intervals(depth)
        ends = np.array([float(e) for r in removed for e in (r[2], r[3])])
        x = np.concatenate([
            rng.uniform(-0.1, 1.1, 10_000), ends,
            np.nextafter(ends, 2.0), np.nextafter(ends, -1.0), [0.0, 1.0, -0.0],
        ])
        np.testing.assert_array_equal(svc_eval(x, depth), brute_force_eval(x, depth))

    def test_scalar_and_vector_agree(self, rng):
        x = rng.uniform(0, 1, 300)
        v = svc_eval(x, 20)
        assert all(svc_eval(float(xi), 20) == vi for xi, vi in zip(x, v))

    def test_shape_preserved(self):
        x = np.linspace(0, 1, 12).reshape(3, 4, 1)
        assert svc_eval(x).shape == x.shape

    def test_depth_stability(self, rng):
        # a point removed at level n keeps its value at every deeper truncation
        x = rng.uniform(0, 1, 20_000)
        v10, v25 = svc_eval(x, 10), svc_eval(x, 25)
        removed10 = v10 < 1
        np.testing.assert_array_equal(v10[removed10], v25[removed10])
        assert np.all(v25 <= v10)

    def test_measure_of_top_set(self):
        # depth 5 keeps n + j <= 21, so no removed value rounds to 1.0
        depth = 5
        x = (np.arange(2 ** 20) + 0.5) / 2 ** 20
        frac = np.mean(svc_eval(x, depth) == 1.0)
        assert frac == pytest.approx(0.5 + 2.0 ** -(depth + 1), abs=2 ** -18)

    def test_deep_values_round_to_one(self):
        # 1 - 2**-(n+j) is not representable once n + j > 53
        last = svc_removed_intervals(8)[-1]
        mid = float((last.left + last.right) / 2)
        assert svc_locate(mid, 8).tag == "I(8,128)"
        assert svc_eval(mid, 8) == 1.0

    def test_values_in_range(self, rng):
        v = svc_eval(rng.uniform(-1, 2, 10_000))
        assert np.all((v >= 0) & (v <= 1))


class TestHolder:
    def test_examples(self):
        h = HolderDrift(0.5)
        np.testing.assert_allclose(holder_eval(h, [4.0, -4.0, 0.0, 0.25]), [2.0, -2.0, 0.0, 0.5])
        h2 = HolderDrift(0.5, scale=3.0, center=1.0)
        assert holder_eval(h2, 5.0) == pytest.approx(6.0)

    def test_sharp_constant(self):
        assert HolderDrift(0.5, 1.0).seminorm == pytest.approx(2 ** 0.5)
        assert HolderDrift(1.0, 2.0).seminorm == 2.0

    @given(st.floats(0.05, 1.0), st.floats(-5, 5), st.floats(-5, 5))
    @settings(max_examples=300, deadline=None)
    def test_holder_inequality(self, beta, x, y):
        h = HolderDrift(beta, 1.5, 0.3)
        lhs = abs(holder_eval(h, x) - holder_eval(h, y))
        assert lhs <= h.seminorm * abs(x - y) ** beta * (1 + 1e-9) + 1e-12

    def test_constant_is_attained(self):
        h = HolderDrift(0.4)
        x, y = 0.7, -0.7
        ratio = abs(holder_eval(h, x) - holder_eval(h, y)) / abs(x - y) ** 0.4
        assert ratio == pytest.approx(h.seminorm, rel=1e-12)

    @pytest.mark.parametrize("beta", [0.0, -0.5, 1.5])
    def test_invalid_beta(self, beta):
        with pytest.raises(ValueError):
            HolderDrift(beta)


class TestCatalog:
    def test_metadata(self):
        svc = catalog_get("svc")
        assert (svc.l1, svc.l2, svc.bounded, svc.theoretical_alpha) == (1.0, 0.0, True, 0.25)
        assert svc.support == (0.0, 1.0) and svc.effective_l2 == 0.0
        hold = catalog_get("holder", beta=0.4)
        assert hold.theoretical_alpha == pytest.approx(0.2) and hold.sublinear
        assert hold.effective_l2 == 0.0
        lin = catalog_get("linear", a=0.0, lam=1.0)
        assert lin.effective_l2 == 1.0 and not lin.constant
        assert catalog_get("zero").constant
        assert catalog_get("linear", a=2.0, lam=0.0).constant

    def test_growth_bound_holds(self, rng):
        x = rng.uniform(-50, 50, (5000, 1))
        for name, params in [("holder", {"beta": 0.3, "center": 2.0}), ("linear", {"a": 1.0, "lam": 2.0}),
                             ("svc", {}), ("indicator", {"a1": -1, "a2": 2})]:
            d = catalog_get(name, **params)
            assert np.all(np.abs(d(x)) <= d.l1 + d.l2 * np.abs(x) + 1e-12), name

    def test_unknown_name(self):
        with pytest.raises(CatalogError, match="known"):
            catalog_get("nope")

    def test_indicator_open_interval(self):
        d = catalog_get("indicator", a1=0.0, a2=1.0)
        np.testing.assert_array_equal(d(np.array([[0.0], [0.5], [1.0]]))[:, 0], [0, 1, 0])
        with pytest.raises(ValueError):
            catalog_get("indicator", a1=1.0, a2=0.0)
