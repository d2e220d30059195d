import itertools

import numpy as np
import pytest

from dcsi.doftheory import (
    DofReport,
    dof_apzf,
    dof_apzf_hq,
    dof_bc,
    dof_bzf,
    dof_czf,
    dof_czf_hq,
    dof_for_scheme,
    select_passive_set,
)
from dcsi.precoders import PassiveSet

ALL = (dof_czf, dof_bzf, dof_apzf, dof_czf_hq, dof_apzf_hq)


def random_matrices(n, k, seed=0):
    rng = np.random.default_rng(seed)
    for _ in range(n):
        yield rng.choice([0.0, 0.2, 0.3, 0.5, 0.7, 1.0, 1.4], size=(k, k))


class TestBc:
    def test_values(self):
        assert dof_bc([1, 1, 1]).total == 3
        assert dof_bc([1, 0.5]).total == 1.5
        assert dof_bc([0, 0]).total == 0


class TestCzf:
    def test_appd(self, appd_alpha):
        assert dof_czf(appd_alpha).total == 0

    def test_fig2(self, fig2_alpha):
        assert dof_czf(fig2_alpha).total == 0

    def test_uniform(self):
        assert dof_czf(np.full((3, 3), 0.6)).total == pytest.approx(1.8, abs=1e-12)


class TestBzf:
    def test_fig2(self, fig2_alpha):
        assert dof_bzf(fig2_alpha).total == pytest.approx(0.5, abs=1e-12)

    def test_k3_equals_czf(self):
        for a in random_matrices(200, 3):
            assert dof_bzf(a).total == pytest.approx(dof_czf(a).total, abs=1e-12)

    def test_two_user_perfect(self):
        assert dof_bzf(np.ones((2, 2))).total == 2

    def test_two_user_row_min_form(self):
        for a in random_matrices(200, 2):
            e = np.minimum(a, 1)
            assert dof_bzf(a).total == pytest.approx(e.min(axis=1).sum(), abs=1e-12)


class TestApzf:
    def test_fig2(self, fig2_alpha):
        assert dof_apzf(fig2_alpha).total == pytest.approx(1.7, abs=1e-12)

    def test_two_user_is_sum_of_row_max(self):
        for a in random_matrices(200, 2):
            e = np.minimum(a, 1)
            assert dof_apzf(a).total == pytest.approx(e.max(axis=1).sum(), abs=1e-12)

    def test_appd_first_tx_passive(self, appd_alpha):
        r = dof_apzf(appd_alpha, PassiveSet.uniform(7, 0))
        assert r.total == pytest.approx(2.1, abs=1e-12)
        assert r.passive_set == (0,) * 7

    def test_perfect_any_set(self):
        for S in [(0, 0, 0), (2, 1, 0), (1, 1, 2)]:
            assert dof_apzf(np.ones((3, 3)), PassiveSet(S)).total == 3

    def test_invalid_set(self):
        with pytest.raises(ValueError):
            dof_apzf(np.ones((3, 3)), PassiveSet((0, 3, 0)))


class TestPassiveSet:
    def test_appd(self, appd_alpha):
        assert select_passive_set(appd_alpha).n == (0,) * 7
        assert select_passive_set(appd_alpha, hq=True).n == (0,) * 7

    def test_uniform_tie_break(self):
        assert select_passive_set(np.full((4, 4), 0.5)).n == (0,) * 4
        assert select_passive_set(np.full((4, 4), 0.5), hq=True).n == (0,) * 4

    def test_brute_force_k3_not_asserted_but_k4_holds(self):
        for a in random_matrices(50, 4, seed=1):
            best = max(dof_apzf(a, PassiveSet(S)).total for S in itertools.product(range(4), repeat=4))
            assert dof_apzf(a).total == best


class TestHq:
    def test_czf_hq_appd(self, appd_alpha):
        assert dof_czf_hq(appd_alpha).total == pytest.approx(5.3, abs=1e-12)

    def test_czf_hq_fig2(self, fig2_alpha):
        assert dof_czf_hq(fig2_alpha).total == pytest.approx(0.5, abs=1e-12)

    def test_apzf_hq_appd(self, appd_alpha):
        assert dof_apzf_hq(appd_alpha).total == pytest.approx(6.3, abs=1e-12)

    def test_apzf_hq_forced(self, appd_alpha):
        assert dof_apzf_hq(appd_alpha, PassiveSet.uniform(7, 5)).total == pytest.approx(6.0, abs=1e-12)

    def test_perfect(self):
        assert dof_czf_hq(np.ones((4, 4))).total == 4
        assert dof_apzf_hq(np.ones((4, 4))).total == 4


class TestProperties:
    def test_ordering(self):
        for k in (2, 3, 4):
            for a in random_matrices(1000 // 3, k, seed=k):
                c, b, h, p = (dof_czf(a).total, dof_bzf(a).total, dof_czf_hq(a).total,
                              dof_apzf(a).total)
                assert c <= b + 1e-12 and b <= h + 1e-12 and c <= p + 1e-12

    def test_hq_beats_plain_on_appd(self, appd_alpha):
        assert dof_apzf_hq(appd_alpha).total >= dof_apzf(appd_alpha).total

    @pytest.mark.parametrize("k", [2, 3, 5])
    @pytest.mark.parametrize("a", [0.0, 0.35, 1.0])
    def test_uniform_collapse(self, k, a):
        for f in ALL:
            assert f(np.full((k, k), a)).total == pytest.approx(k * a, abs=1e-12)

    def test_clipping(self):
        for a in random_matrices(100, 3, seed=9):
            b = np.where(a >= 1, a + 5, a)
            for f in ALL:
                assert f(a).total == f(b).total

    def test_report_invariants(self):
        for a in random_matrices(100, 4, seed=2):
            for f in ALL:
                r = f(a)
                assert all(0 <= v <= 1 for v in r.per_user)
                assert abs(r.total - sum(r.per_user)) <= 1e-12

    def test_json(self, fig2_alpha):
        d = dof_apzf(fig2_alpha).to_dict()
        assert d["total"] == pytest.approx(1.7) and d["passive_set"] == [0, 1]
        assert isinstance(dof_czf(fig2_alpha).to_json(), str)


class TestSchemeLookup:
    def test_known(self, fig2_alpha):
        assert dof_for_scheme("perfect-zf", fig2_alpha).total == 2
        assert dof_for_scheme("rzf", fig2_alpha).total == dof_czf(fig2_alpha).total
        assert dof_for_scheme("apzf-qpower:3", fig2_alpha).total == pytest.approx(1.7)

    def test_unknown(self, fig2_alpha):
        with pytest.raises(KeyError):
            dof_for_scheme("apzf-heuristic", fig2_alpha)
