import numpy as np
import pytest

from egs_control import (
    ConfigError,
    DimensionError,
    EgsConfig,
    SessionId,
    SessionTable,
    capacity_check,
    feasible_rate_region_clamp,
    lambda_egs,
    slater_check,
    total_service_rate,
)
from egs_control.model import default_lam_min


def make_config(n_nodes=4, r=3, p_gen=0.05, lam_node=0.5, theta=1.0 / 6, **kw):
    return EgsConfig(
        n_nodes=n_nodes,
        n_resources=r,
        p_gen=p_gen,
        lam_node=np.full(n_nodes, lam_node),
        theta_c=theta,
        **kw,
    )


TRIANGLE = [(0, 1), (0, 2), (1, 2)]


class TestSessionId:
    def test_ordered_pair(self):
        s = SessionId(1, 3)
        assert s.members() == (1, 3)

    @pytest.mark.parametrize("pair", [(2, 1), (1, 1), (-1, 2)])
    def test_rejects_unordered(self, pair):
        with pytest.raises(ConfigError):
            SessionId(*pair)


class TestSessionTable:
    def test_rejects_duplicates(self):
        with pytest.raises(ConfigError):
            SessionTable(4, [(0, 1), (0, 1)])

    def test_rejects_out_of_range_node(self):
        with pytest.raises(ConfigError):
            SessionTable(3, [(0, 3)])

    def test_rejects_nonpositive_lam_min(self):
        with pytest.raises(ConfigError):
            SessionTable(3, TRIANGLE, lam_min=0.0)

    def test_sessions_of_node(self):
        tab = SessionTable(4, [(0, 1), (0, 2), (1, 2), (2, 3)])
        assert tab.sessions_of_node(2) == [1, 2, 3]
        assert tab.sessions_of_node(3) == [3]

    def test_incidence_rows_match_membership(self):
        tab = SessionTable(4, [(0, 1), (0, 2), (1, 2), (2, 3)])
        inc = tab.incidence
        assert inc.shape == (4, 4)
        for u in range(4):
            assert list(np.flatnonzero(inc[u])) == tab.sessions_of_node(u)
        # each session touches exactly two nodes
        assert np.all(inc.sum(axis=0) == 2)

    def test_lam_max(self):
        tab = SessionTable(3, TRIANGLE, x=[1, 2, 3])
        assert np.allclose(tab.lam_max(0.05), [0.05, 0.10, 0.15])

    def test_designated_defaults_to_lower_node(self):
        tab = SessionTable(3, TRIANGLE)
        assert list(tab.designated) == [0, 0, 1]

    def test_designated_must_be_member(self):
        with pytest.raises(ConfigError):
            SessionTable(3, [(0, 1)], designated=[2])


class TestEgsConfig:
    def test_rejects_bad_p_gen(self):
        with pytest.raises(ConfigError):
            make_config(p_gen=1.5)

    def test_rejects_zero_service_rate(self):
        with pytest.raises(ConfigError):
            make_config(r=0, p_gen=0.5, lam_node=0.5)

    def test_rejects_nonpositive_theta(self):
        with pytest.raises(ConfigError):
            make_config(theta=0.0)

    def test_theta_u_defaults_to_theta_c(self):
        cfg = make_config(theta=0.25)
        assert np.all(cfg.theta_u == 0.25)


class TestServiceRate:
    def test_case_study_value(self):
        assert total_service_rate(3, 0.05) == pytest.approx(0.15)

    def test_zero_resources(self):
        assert total_service_rate(0, 0.5) == 0.0

    def test_arithmetic(self):
        assert total_service_rate(4, 0.25) == 1.0

    def test_lambda_egs_from_config(self):
        assert lambda_egs(make_config()) == pytest.approx(0.15)


class TestCapacityCheck:
    def setup_method(self):
        self.table = SessionTable(3, TRIANGLE)
        self.config = make_config(n_nodes=3)

    def test_interior_point(self):
        v = capacity_check(np.array([0.04, 0.04, 0.04]), self.config, self.table)
        assert v.inside_interior
        assert v.binding_constraints == ()

    def test_per_session_boundary(self):
        v = capacity_check(np.array([0.05, 0.05, 0.05]), self.config, self.table)
        assert not v.inside_interior
        assert sum("session" in c for c in v.binding_constraints) == 3

    def test_total_rate_violation(self):
        v = capacity_check(np.array([0.10, 0.10, 0.01]), self.config, self.table)
        assert not v.inside_interior
        assert any("total" in c for c in v.binding_constraints)
        assert sum("session" in c for c in v.binding_constraints) == 2

    def test_negative_rate_flagged(self):
        v = capacity_check(np.array([-0.01, 0.01, 0.01]), self.config, self.table)
        assert not v.inside_interior

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            capacity_check(np.array([0.01, 0.01]), self.config, self.table)

    def test_permutation_invariance(self):
        lam = np.array([0.01, 0.06, 0.04])
        perm = [2, 0, 1]
        tab2 = SessionTable(3, [TRIANGLE[k] for k in perm])
        v1 = capacity_check(lam, self.config, self.table)
        v2 = capacity_check(lam[perm], self.config, tab2)
        assert v1.inside_interior == v2.inside_interior
        assert len(v1.binding_constraints) == len(v2.binding_constraints)

    def test_scaling_monotonicity(self):
        lam = np.array([0.045, 0.045, 0.045])
        assert capacity_check(lam, self.config, self.table).inside_interior
        assert not capacity_check(lam * 1.2, self.config, self.table).inside_interior


class TestSlaterCheck:
    def test_comfortable_margin(self):
        pairs = [(0, k) for k in range(1, 20)]
        tab = SessionTable(20, pairs, lam_min=0.001)
        cfg = make_config(n_nodes=20, lam_node=0.5)
        ok, violations = slater_check(tab, cfg)
        assert ok and violations == []

    def test_total_rate_boundary_fails(self):
        tab = SessionTable(3, TRIANGLE, lam_min=0.05)
        ok, violations = slater_check(tab, make_config(n_nodes=3))
        assert not ok
        assert any("total" in v for v in violations)

    def test_node_cap_binds(self):
        tab = SessionTable(2, [(0, 1)], lam_min=0.01)
        cfg = make_config(n_nodes=2, lam_node=[0.005, 0.5])
        ok, violations = slater_check(tab, cfg)
        assert not ok
        assert any("node" in v for v in violations)

    def test_slater_implies_total_rate_interior(self):
        tab = SessionTable(3, TRIANGLE, lam_min=0.01)
        cfg = make_config(n_nodes=3)
        ok, _ = slater_check(tab, cfg)
        assert ok
        verdict = capacity_check(tab.lam_min, cfg, tab)
        assert not any("total" in c for c in verdict.binding_constraints)


class TestFeasibleClamp:
    def setup_method(self):
        self.table = SessionTable(2, [(0, 1)], lam_min=0.001)
        self.config = make_config(n_nodes=2)

    def test_upper_clamp(self):
        assert feasible_rate_region_clamp(2.0, (0, 1), self.table, self.config) == pytest.approx(0.05)

    def test_lower_clamp(self):
        assert feasible_rate_region_clamp(0.0001, (0, 1), self.table, self.config) == pytest.approx(0.001)

    def test_identity_inside(self):
        assert feasible_rate_region_clamp(0.03, (0, 1), self.table, self.config) == pytest.approx(0.03)

    def test_empty_interval_rejected(self):
        table = SessionTable(2, [(0, 1)], lam_min=0.1)
        with pytest.raises(ConfigError):
            feasible_rate_region_clamp(0.03, (0, 1), table, self.config)


def test_default_lam_min_margin():
    cfg = make_config()
    lam_min = default_lam_min(cfg, n_sessions=19)
    assert lam_min * 19 == pytest.approx(0.1 * 0.15)
