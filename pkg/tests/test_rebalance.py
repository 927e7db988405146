import pytest

from orchsim.cluster import NodeStatus, Phase
from orchsim.errors import SimulationError
from orchsim.eventlog import MIGRATION_FALLBACK, Recorder
from orchsim.rebalance import (
    Move,
    RebalanceConfig,
    begin_migration,
    execute_migration,
    imbalance_score,
    in_maintenance_window,
    land_migration,
    plan_rebalance,
)
from orchsim.scheduler import SchedulingQueue

from conftest import GIB, add_service, make_node, make_service, make_state


def cluster_with_utils(*loads):
    """Nodes n0..nK with one service each sized to the given cpu load."""
    state = make_state(*(make_node(f"n{i}", 1000, GIB, GIB) for i in range(len(loads))))
    for i, load in enumerate(loads):
        if load:
            add_service(state, make_service(f"s{i}", load, 0, 0), f"n{i}")
    return state


class TestImbalanceScore:
    def test_post_outage_spread_near_one(self):
        state = cluster_with_utils(990, 1000, 0)
        assert imbalance_score(state) > 0.25

    def test_equal_utilization_is_zero(self):
        state = cluster_with_utils(400, 400, 400)
        assert imbalance_score(state) == 0.0

    def test_max_minus_min(self):
        state = cluster_with_utils(200, 500, 900)
        assert imbalance_score(state) == pytest.approx(0.7)

    def test_single_node_is_zero(self):
        state = cluster_with_utils(700)
        assert imbalance_score(state) == 0.0

    def test_no_up_nodes_errors(self):
        state = make_state(make_node("n1", status=NodeStatus.DOWN))
        with pytest.raises(SimulationError, match="no Up nodes"):
            imbalance_score(state)


class TestMaintenanceWindow:
    def test_empty_window_list_always_false(self):
        assert in_maintenance_window(0, []) is False
        assert in_maintenance_window(10**9, []) is False

    def test_half_open_interval(self):
        windows = [(100, 200)]
        assert in_maintenance_window(100, windows) is True
        assert in_maintenance_window(199, windows) is True
        assert in_maintenance_window(200, windows) is False
        assert in_maintenance_window(99, windows) is False

    def test_config_rejects_overlaps_and_empty_windows(self):
        with pytest.raises(ValueError):
            RebalanceConfig(windows=[(5, 5)])
        with pytest.raises(ValueError):
            RebalanceConfig(windows=[(0, 10), (5, 20)])


class TestPlanRebalance:
    def test_balanced_cluster_yields_empty_plan(self):
        state = cluster_with_utils(400, 400, 400)
        plan = plan_rebalance(state, RebalanceConfig(threshold=0.25))
        assert plan.moves == []

    def test_automatic_picks_spread_minimizing_move(self):
        # n0 runs 700+200 (0.9), n1 runs 100 (0.1), n2 runs 300 (0.3).
        # Moving the small service to the min node gives spread 0.4 versus
        # 0.6 for the big one.
        state = make_state(
            make_node("n0", 1000, GIB, GIB),
            make_node("n1", 1000, GIB, GIB),
            make_node("n2", 1000, GIB, GIB),
        )
        add_service(state, make_service("s-big", 700, 0, 0), "n0")
        add_service(state, make_service("s-small", 200, 0, 0), "n0")
        add_service(state, make_service("s-mid", 100, 0, 0), "n1")
        add_service(state, make_service("s-other", 300, 0, 0), "n2")
        plan = plan_rebalance(state, RebalanceConfig(threshold=0.25, max_migrations_per_step=1))
        assert plan.moves == [Move("s-small", "n0", "n1")]
        assert plan.predicted_spread_after < imbalance_score(state)

    def test_monolithic_service_that_cannot_improve_spread_stays(self):
        # A single 0.9 service moved to the empty node reproduces the same
        # spread, which is not a strict improvement, so the plan is empty.
        state = cluster_with_utils(900, 500, 0)
        plan = plan_rebalance(state, RebalanceConfig(threshold=0.25, max_migrations_per_step=1))
        assert plan.moves == []

    def test_spread_tie_breaks_on_service_id(self):
        # Both moves yield the same spread; the smaller id wins.
        state = make_state(
            make_node("n0", 1000, GIB, GIB),
            make_node("n1", 1000, GIB, GIB),
            make_node("n2", 1000, GIB, GIB),
        )
        add_service(state, make_service("alpha", 450, 0, 0), "n0")
        add_service(state, make_service("beta", 450, 0, 0), "n0")
        add_service(state, make_service("mid", 500, 0, 0), "n1")
        plan = plan_rebalance(state, RebalanceConfig(threshold=0.25, max_migrations_per_step=1))
        assert plan.moves == [Move("alpha", "n0", "n2")]

    def test_no_reschedule_label_respected(self):
        state = make_state(make_node("n0", 1000, GIB, GIB), make_node("n1", 1000, GIB, GIB))
        add_service(
            state,
            make_service("pinned", 800, 0, 0, labels={"no-reschedule": "true"}),
            "n0",
        )
        plan = plan_rebalance(state, RebalanceConfig(threshold=0.25, max_migrations_per_step=3))
        assert plan.moves == []

    def test_constraints_respected(self):
        state = make_state(
            make_node("n0", 1000, GIB, GIB, labels={"zone": "eu"}),
            make_node("n1", 1000, GIB, GIB, labels={"zone": "us"}),
        )
        add_service(
            state, make_service("pinned", 800, 0, 0, constraints={"zone": "eu"}), "n0"
        )
        plan = plan_rebalance(state, RebalanceConfig(threshold=0.25))
        assert plan.moves == []

    def test_manual_plan_validated_and_truncated(self):
        state = cluster_with_utils(900, 700, 0)
        config = RebalanceConfig(
            threshold=0.25,
            max_migrations_per_step=1,
            strategy="Manual",
            manual_moves=[("s0", "n2"), ("s1", "n2")],
        )
        plan = plan_rebalance(state, config)
        assert plan.moves == [Move("s0", "n0", "n2")]

    def test_manual_move_violating_fit_errors(self):
        state = cluster_with_utils(900, 100, 0)
        add_service(state, make_service("fat", 900, 0, 0), "n2")
        config = RebalanceConfig(threshold=0.25, strategy="Manual", manual_moves=[("s0", "n2")])
        with pytest.raises(SimulationError, match="s0->n2"):
            plan_rebalance(state, config)

    def test_manual_move_of_pinned_service_errors(self):
        state = cluster_with_utils(900, 100, 0)
        state.services["s0"].spec.labels["no-reschedule"] = "true"
        config = RebalanceConfig(threshold=0.25, strategy="Manual", manual_moves=[("s0", "n2")])
        with pytest.raises(SimulationError, match="no-reschedule"):
            plan_rebalance(state, config)

    def test_step_bound(self):
        state = make_state(make_node("n0", 1000, GIB, GIB), make_node("n1", 1000, GIB, GIB))
        for i in range(4):
            add_service(state, make_service(f"s{i}", 200, 0, 0), "n0")
        plan = plan_rebalance(state, RebalanceConfig(threshold=0.1, max_migrations_per_step=2))
        assert len(plan.moves) <= 2

    def test_service_never_moved_twice_in_one_plan(self):
        # With two nodes a single big service would bounce back and forth
        # through the simulated view; it must be picked at most once.
        state = make_state(make_node("n0", 1000, GIB, GIB), make_node("n1", 1000, GIB, GIB))
        add_service(state, make_service("hot", 600, 0, 0), "n0")
        add_service(state, make_service("warm", 100, 0, 0), "n1")
        plan = plan_rebalance(state, RebalanceConfig(threshold=0.2, max_migrations_per_step=5))
        assert len([m for m in plan.moves if m.service_id == "hot"]) <= 1
        assert len(plan.moves) == len({m.service_id for m in plan.moves})


class TestExecuteMigration:
    def test_immediate_migration_moves_service(self):
        state = cluster_with_utils(900, 0)
        queue = SchedulingQueue()
        rec = Recorder(state)
        execute_migration(state, queue, rec, Move("s0", "n0", "n1"), now=10)
        assert state.services["s0"].status.node_id == "n1"
        assert state.services["s0"].status.progress_lost_count == 1
        kinds = [r["kind"] for r in rec.records]
        assert kinds == ["migration", "service-evicted", "service-placed"]

    def test_migrating_pending_service_errors(self):
        state = cluster_with_utils(900, 0)
        state.nodes["n0"].placed.clear()
        state.services["s0"].status.phase = Phase.PENDING
        state.services["s0"].status.node_id = None
        with pytest.raises(SimulationError, match="not running"):
            execute_migration(state, SchedulingQueue(), Recorder(state), Move("s0", "n0", "n1"), 0)

    def test_target_filled_concurrently_falls_back_to_queue(self):
        state = cluster_with_utils(900, 0)
        queue = SchedulingQueue()
        rec = Recorder(state)
        move = Move("s0", "n0", "n1")
        begin_migration(state, queue, rec, move, now=10)
        # A competing placement takes the target before the landing.
        add_service(state, make_service("rival", 600, 0, 0), "n1")
        landed = land_migration(state, queue, rec, move, now=11)
        assert landed is False
        assert "s0" in queue
        assert any(r["kind"] == MIGRATION_FALLBACK for r in rec.records)
        assert state.services["s0"].status.phase is Phase.PENDING
