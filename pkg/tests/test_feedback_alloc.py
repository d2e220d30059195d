import numpy as np
import pytest

from dcsi.doftheory import dof_apzf, dof_czf
from dcsi.errors import ContractError
from dcsi.feedback_alloc import (
    activation_point,
    allocate,
    allocate_apzf,
    allocate_czf,
    allocation_sweep,
    expand_to_matrix,
    saturation_point,
    sweep_to_csv,
)
from dcsi.precoders import PassiveSet


class TestCzf:
    def test_gamma_4(self):
        p = allocate_czf(4)
        assert (p.n_active, p.per_link_alpha, p.dof) == (2, 1.0, 2.0)

    def test_gamma_18(self):
        p = allocate_czf(18)
        assert (p.n_active, p.dof) == (3, 3.0)

    def test_gamma_8_flat(self):
        p = allocate_czf(8)
        assert (p.n_active, p.dof) == (2, 2.0)

    def test_table(self):
        assert [saturation_point(n) for n in range(1, 6)] == [0, 4, 18, 48, 100]
        assert [activation_point(n) for n in range(1, 6)] == [2, 12, 36, 80, 150]

    def test_boundary_prefers_fewer_users(self):
        assert allocate_czf(12).n_active == 2
        assert allocate_czf(12 + 1e-9).n_active == 3

    def test_negative(self):
        with pytest.raises(ContractError):
            allocate_czf(-1)


class TestApzf:
    def test_gamma_2(self):
        p = allocate_apzf(2)
        assert (p.n_active, p.dof) == (2, 2.0)

    def test_gamma_12(self):
        p = allocate_apzf(12)
        assert (p.n_active, p.dof) == (3, 3.0)

    def test_gamma_0(self):
        p = allocate_apzf(0)
        assert (p.n_active, p.dof) == (1, 1.0)

    def test_rising_segment(self):
        # DoF = gamma / (n-1)^2 on [(n-1)^3, n(n-1)^2]
        for g in np.linspace(8, 12, 11):
            assert allocate_apzf(g).dof == pytest.approx(g / 4, abs=1e-12)


class TestSweep:
    def test_monotone(self):
        plans = allocation_sweep(range(13), "czf")
        dofs = [p.dof for p in plans]
        assert all(b >= a for a, b in zip(dofs, dofs[1:]))

    def test_rising_slope(self):
        # n = 3 segment: per-link alpha rises as 1/(n^2 (n-1)), the DoF n times faster.
        a, b = allocate_czf(13), allocate_czf(18)
        assert (b.per_link_alpha - a.per_link_alpha) / 5 == pytest.approx(1 / 18, abs=1e-12)
        assert (b.dof - a.dof) / 5 == pytest.approx(3 / 18, abs=1e-12)

    def test_apzf_dominates(self):
        grid = np.linspace(0, 200, 2001)
        for c, a in zip(allocation_sweep(grid, "czf"), allocation_sweep(grid, "apzf")):
            assert a.dof >= c.dof - 1e-12

    def test_budget_and_continuity(self):
        grid = np.linspace(0, 200, 4001)
        for scheme in ("czf", "apzf"):
            plans = allocation_sweep(grid, scheme)
            ns = [p.n_active for p in plans]
            assert all(b >= a for a, b in zip(ns, ns[1:]))
            for p in plans:
                assert p.spend <= p.gamma + 1e-12
                assert 0 <= p.per_link_alpha <= 1
            for n in range(1, 6):
                g = activation_point(n, scheme)
                left, right = allocate(g, scheme), allocate(g + 1e-10, scheme)
                assert abs(left.dof - right.dof) <= 1e-9

    def test_empty_grid(self):
        with pytest.raises(ContractError):
            allocation_sweep([], "czf")

    def test_unknown_scheme(self):
        with pytest.raises(ContractError):
            allocate(3, "bzf")

    def test_csv(self):
        text = sweep_to_csv(allocation_sweep([0, 4], "czf"))
        lines = text.strip().splitlines()
        assert lines[0] == "gamma,scheme,n_active,alpha,dof"
        assert lines[2] == "4.0,czf,2,1.0,2.0"


class TestExpand:
    def test_czf(self):
        m = expand_to_matrix(allocate_czf(4))
        np.testing.assert_array_equal(m.alpha, np.ones((2, 2)))
        assert dof_czf(m).total == 2

    def test_apzf(self):
        m = expand_to_matrix(allocate_apzf(12), passive_tx=0)
        np.testing.assert_array_equal(m.alpha[:, 0], 0)
        assert dof_apzf(m, PassiveSet.uniform(3, 0)).total == 3

    def test_round_trip(self):
        rng = np.random.default_rng(0)
        for g in rng.uniform(1.01, 150, 100):
            for scheme, calc in (("czf", dof_czf), ("apzf", dof_apzf)):
                p = allocate(g, scheme)
                if p.n_active < 2:
                    continue
                assert calc(expand_to_matrix(p)).total == pytest.approx(p.dof, abs=1e-12)

    def test_single_user(self):
        with pytest.raises(ContractError):
            expand_to_matrix(allocate_czf(1))
