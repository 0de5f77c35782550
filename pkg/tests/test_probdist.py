import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shuffle_amp.probdist import (DomainMismatchError, FiniteDist, InvalidWeightError, Kernel,
                                  hockey_stick, mixture, product)


def dists(size):
    return st.lists(st.floats(0.0, 1.0), min_size=size, max_size=size).filter(
        lambda w: sum(w) > 1e-3).map(lambda w: FiniteDist(tuple(range(size)), np.array(w) / sum(w)))


class TestFiniteDist:
    def test_rejects_bad_masses(self):
        with pytest.raises(ValueError):
            FiniteDist(("a", "b"), [0.5, 0.6])
        with pytest.raises(ValueError):
            FiniteDist(("a", "b"), [1.5, -0.5])
        with pytest.raises(ValueError):
            FiniteDist(("a", "a"), [0.5, 0.5])

    def test_lookup_and_immutability(self):
        d = FiniteDist.from_dict({"x": 0.25, "y": 0.75})
        assert d["y"] == 0.75
        assert d.get("z") == 0.0
        with pytest.raises(ValueError):
            d.masses[0] = 1.0


class TestHockeyStick:
    @pytest.mark.parametrize("p, q, alpha, expected", [
        ((0.5, 0.5), (0.5, 0.5), 1.0, 0.0),
        ((1.0, 0.0), (0.0, 1.0), 1.0, 1.0),
        ((0.75, 0.25), (0.25, 0.75), 2.0, 0.25),
    ])
    def test_examples(self, p, q, alpha, expected):
        P = FiniteDist((0, 1), p)
        Q = FiniteDist((0, 1), q)
        assert hockey_stick(P, Q, alpha) == pytest.approx(expected, abs=1e-15)

    def test_domain_mismatch(self):
        with pytest.raises(DomainMismatchError):
            hockey_stick(FiniteDist((0, 1), (0.5, 0.5)), FiniteDist((0, 2), (0.5, 0.5)), 1.0)

    def test_label_order_is_irrelevant(self):
        P = FiniteDist(("a", "b"), (0.75, 0.25))
        Q = FiniteDist(("b", "a"), (0.75, 0.25))
        assert hockey_stick(P, Q, 2.0) == pytest.approx(0.25)

    @settings(max_examples=60, deadline=None)
    @given(dists(4), dists(4), st.floats(0.1, 5.0), st.floats(0.1, 5.0))
    def test_nonincreasing_in_alpha(self, p, q, a1, a2):
        lo, hi = sorted((a1, a2))
        assert hockey_stick(p, q, hi) <= hockey_stick(p, q, lo) + 1e-15

    @settings(max_examples=60, deadline=None)
    @given(dists(5), dists(5))
    def test_alpha_one_is_total_variation(self, p, q):
        tv = 0.5 * np.abs(p.masses - q.masses).sum()
        assert hockey_stick(p, q, 1.0) == pytest.approx(tv, abs=1e-12)


class TestMixtureProduct:
    def test_single_part(self):
        d = FiniteDist((0, 1, 2), (0.2, 0.3, 0.5))
        assert mixture([(1.0, d)]).allclose(d)

    def test_two_points(self):
        m = mixture([(0.5, FiniteDist.point(0)), (0.5, FiniteDist.point(1))])
        assert m.as_dict() == {0: 0.5, 1: 0.5}

    @pytest.mark.parametrize("eps0, k", [(0.5, 3), (1.0, 10), (3.0, 6)])
    def test_krr_row_as_mixture(self, eps0, k):
        # e p at x0, p at x1 and the remaining (k - 2) p spread uniformly.
        e = math.exp(eps0)
        p = 1 / (e + k - 1)
        rest = FiniteDist.uniform(range(2, k))
        row = mixture([(e * p, FiniteDist.point(0)), (p, FiniteDist.point(1)),
                       ((k - 2) * p, rest)])
        expected = FiniteDist(tuple(range(k)), [e * p] + [p] * (k - 1))
        assert row.allclose(expected, atol=1e-15)

    def test_negative_weight(self):
        d = FiniteDist.point(0)
        with pytest.raises(InvalidWeightError):
            mixture([(1.5, d), (-0.5, d)])

    def test_product_with_point_mass(self):
        p = FiniteDist(("a", "b"), (0.3, 0.7))
        pq = product(p, FiniteDist.point("z"))
        assert pq.as_dict() == {("a", "z"): 0.3, ("b", "z"): 0.7}

    def test_product_uniform(self):
        u = FiniteDist.uniform((0, 1))
        assert np.allclose(product(u, u).masses, 0.25)

    def test_krr_rows_product_sums_to_one(self):
        e = math.exp(0.8)
        row = FiniteDist((0, 1, 2), np.array([e, 1, 1]) / (e + 2))
        pq = product(row, row)
        assert len(pq) == 9
        assert abs(pq.masses.sum() - 1) <= 1e-12

    @settings(max_examples=40, deadline=None)
    @given(dists(3), dists(4))
    def test_product_is_valid(self, p, q):
        pq = product(p, q)
        assert abs(pq.masses.sum() - 1) <= 1e-12


class TestKernel:
    def test_rows_align(self):
        k = Kernel((0, 1), ("u", "v"), [[0.2, 0.8], [0.6, 0.4]])
        assert k.row(1).as_dict() == {"u": 0.6, "v": 0.4}
        assert np.allclose(k.infimum(), [0.2, 0.4])
        assert k.max_log_ratio() == pytest.approx(math.log(3))

    def test_unknown_input(self):
        k = Kernel((0, 1), ("u", "v"), [[0.2, 0.8], [0.6, 0.4]])
        with pytest.raises(KeyError):
            k.row(7)

    def test_bad_row(self):
        with pytest.raises(ValueError):
            Kernel((0, 1), ("u", "v"), [[0.2, 0.7], [0.6, 0.4]])
