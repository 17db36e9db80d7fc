import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from robust_isr._validation import ConvergenceError
from robust_isr.belief import CredibleSets
from robust_isr.graph_env import GraphEnvironment, TopologySpec, build_topology
from robust_isr.planner import (
    PlanningProblem,
    RobustPlanner,
    bellman_backup,
    greedy_policy,
    iteration_bound,
    nominal_bellman_backup,
    planning_reward_bound,
    robust_bellman_backup,
    solve,
    value_function_csv,
    value_iteration,
)
from robust_isr.reward import RewardConfig, stage_table
from robust_isr.threat_models import Gaussian, PrototypeSet, ThreatPrototype, bundled_prototypes

CFG = RewardConfig()
PROTOS = bundled_prototypes("exp1")


def grid(rows=3, cols=4, seed=0):
    return build_topology(TopologySpec("grid", rows=rows, cols=cols, seed=seed))


def random_members(rng, n_nodes, truth=None):
    members = rng.random((n_nodes, 3)) < 0.5
    if truth is not None:
        members[np.arange(n_nodes), np.asarray(truth) - 1] = True
    empty = ~members.any(axis=1)
    members[empty, rng.integers(0, 3, size=empty.sum())] = True
    return members


def problem(env, novelty=None, members=None, theta_hat=None, cfg=CFG, protos=PROTOS):
    novelty = np.zeros(env.n_nodes) if novelty is None else novelty
    return PlanningProblem.from_prototypes(env, protos, cfg, novelty, members, theta_hat)


def one_action_protos(mean):
    # exposure tail is numerically zero: the stage value is just the mean
    return PrototypeSet([ThreatPrototype(1, {"A": Gaussian(mean, 1.0)}, {"A": Gaussian(-100.0, 1.0)})])


def test_two_state_fixed_point():
    env = GraphEnvironment(1, (), (1,), 1)
    cfg = RewardConfig(gamma=0.5, c_move=1.0, c_sense=(0.0,))
    prob = problem(env, cfg=cfg, protos=one_action_protos(1.0))
    V, _ = value_iteration("static", prob, tol=1e-13)
    # V_S = 1 + V_M / 2, V_M = -1 + V_S / 2
    oracle = np.linalg.solve(np.array([[1.0, -0.5], [-0.5, 1.0]]), np.array([1.0, -1.0]))
    np.testing.assert_allclose(V[0], oracle, atol=1e-12)
    np.testing.assert_allclose(V[0], [2 / 3, -2 / 3], atol=1e-12)


def test_constant_shift():
    env = grid()
    rng = np.random.default_rng(0)
    members = random_members(rng, env.n_nodes)
    nov = rng.uniform(0, 3, env.n_nodes)
    V = rng.normal(size=(env.n_nodes, 2)) * 10
    a = robust_bellman_backup(V + 7.5, env, members, nov, PROTOS, CFG)
    b = robust_bellman_backup(V, env, members, nov, PROTOS, CFG) + CFG.gamma * 7.5
    np.testing.assert_allclose(a, b, atol=1e-10)


def test_singleton_sets_match_nominal_backup():
    env = grid()
    rng = np.random.default_rng(1)
    theta = np.array(env.threat)
    U = CredibleSets.from_sets([{t} for t in theta], 3)
    V = rng.normal(size=(env.n_nodes, 2))
    nov = rng.uniform(0, 2, env.n_nodes)
    a = robust_bellman_backup(V, env, U, nov, PROTOS, CFG)
    b = nominal_bellman_backup(V, env, theta, nov, PROTOS, CFG)
    assert np.max(np.abs(a - b)) <= 1e-12


def test_contraction_both_operators():
    env = grid(5, 5)
    rng = np.random.default_rng(2)
    for _ in range(200):
        members = random_members(rng, env.n_nodes)
        theta_hat = rng.integers(1, 4, env.n_nodes)
        nov = rng.uniform(0, 5, env.n_nodes)
        V = rng.normal(scale=50, size=(env.n_nodes, 2))
        W = rng.normal(scale=50, size=(env.n_nodes, 2))
        d = np.max(np.abs(V - W))
        for op in (
            lambda X: robust_bellman_backup(X, env, members, nov, PROTOS, CFG),
            lambda X: nominal_bellman_backup(X, env, theta_hat, nov, PROTOS, CFG),
        ):
            assert np.max(np.abs(op(V) - op(W))) <= CFG.gamma * d + 1e-12


def test_zero_rewards_fixed_point_is_zero():
    env = grid()
    cfg = RewardConfig(c_move=0.0, c_sense=(0.0,))
    prob = problem(env, cfg=cfg, protos=one_action_protos(0.0))
    V, n_iter = value_iteration("static", prob)
    assert np.all(V == 0.0)
    assert n_iter == 1


def brute_force(env, rewards, nov, cfg, sweeps):
    V = np.zeros((env.n_nodes, 2))
    for _ in range(sweeps):
        V = bellman_backup(V, env, rewards, nov, cfg)
    return V


def test_fixed_point_matches_long_brute_force():
    env = grid()
    rng = np.random.default_rng(3)
    theta_hat = rng.integers(1, 4, env.n_nodes)
    nov = rng.uniform(0, 3, env.n_nodes)
    prob = problem(env, nov, theta_hat=theta_hat)
    V, _ = value_iteration("nominal", prob, tol=1e-12)
    ref = brute_force(env, prob.sense_rewards("nominal"), nov, CFG, 100_000)
    assert np.max(np.abs(V - ref)) < 1e-8


def test_kernel_matches_numpy_backup():
    env = build_topology(TopologySpec("erdos-renyi", n_nodes=20, p=0.15, seed=4))
    rng = np.random.default_rng(4)
    prob = problem(env, rng.uniform(0, 4, env.n_nodes), members=random_members(rng, env.n_nodes))
    rewards = prob.sense_rewards("adaptive")
    V, n_iter, _ = solve(env, rewards, prob.novelty, CFG, tol=1e-9)
    ref = np.zeros((env.n_nodes, 2))
    for _ in range(n_iter):
        ref = bellman_backup(ref, env, rewards, prob.novelty, CFG)
    np.testing.assert_allclose(V, ref, rtol=0, atol=1e-9)


def test_residual_below_tol_at_termination():
    env = grid()
    prob = problem(env, np.linspace(0, 2, env.n_nodes))
    V, _ = value_iteration("static", prob, tol=1e-6)
    TV = bellman_backup(V, env, prob.sense_rewards("static"), prob.novelty, CFG)
    assert np.max(np.abs(TV - V)) < 1e-6


def test_iteration_bound_gamma_half():
    env = GraphEnvironment(2, ((0, 1),), (1, 1), 1)
    cfg = RewardConfig(gamma=0.5, c_move=1.0, c_sense=(0.0,))
    prob = problem(env, cfg=cfg, protos=one_action_protos(1.0))
    V, n_iter = value_iteration("static", prob, tol=1e-6)
    bound = iteration_bound(1.0, 0.5, 1e-6)
    assert bound <= 25
    assert n_iter <= bound


@pytest.mark.parametrize("gamma", [0.5, 0.9, 0.98])
def test_iteration_counts_within_bound(gamma):
    rng = np.random.default_rng(int(gamma * 100))
    cfg = CFG.replace(gamma=gamma)
    for _ in range(20):
        env = grid(int(rng.integers(2, 6)), int(rng.integers(2, 6)), seed=int(rng.integers(1000)))
        prob = problem(env, rng.uniform(0, 10, env.n_nodes), members=random_members(rng, env.n_nodes),
                       cfg=cfg)
        rewards = prob.sense_rewards("adaptive")
        for tol in (1e-3, 1e-6, 1e-9):
            _, n_iter, _ = solve(env, rewards, prob.novelty, cfg, tol=tol)
            r_max = planning_reward_bound(rewards, prob.novelty, cfg)
            assert n_iter <= iteration_bound(r_max, gamma, tol)


def test_loose_tolerance_one_sweep():
    env = grid()
    V, n_iter = value_iteration("static", problem(env), tol=1e9)
    assert n_iter == 1


def test_deterministic_bit_for_bit():
    env = grid()
    prob = problem(env, np.arange(env.n_nodes) / 3.0, members=random_members(np.random.default_rng(5), 12))
    a, _ = value_iteration("adaptive", prob)
    b, _ = value_iteration("adaptive", prob)
    assert a.tobytes() == b.tobytes()


def test_convergence_error_carries_residual():
    env = grid()
    with pytest.raises(ConvergenceError) as exc:
        value_iteration("static", problem(env), tol=1e-12, max_iter=5)
    assert exc.value.n_iter == 5
    assert exc.value.residual > 1e-12


def test_static_policy_is_all_d():
    env = grid()
    prob = problem(env)
    V, _ = value_iteration("static", prob)
    pol = greedy_policy(V, "static", prob)
    assert all(pol.sense_action(v) == "D" for v in range(env.n_nodes))


def test_truth_singletons_pick_matched_action():
    env = grid()
    theta = np.array(env.threat)
    table = stage_table(PROTOS, CFG) - np.asarray(CFG.c_sense)
    prob = problem(env, members=CredibleSets.from_sets([{t} for t in theta], 3).members)
    V, _ = value_iteration("adaptive", prob)
    pol = greedy_policy(V, "adaptive", prob)
    for v in range(env.n_nodes):
        # oracle: enumerate the surrogate per action
        assert pol.sense[v] == int(np.argmax(table[theta[v] - 1]))
        assert pol.sense_action(v) == "ABC"[theta[v] - 1]


def test_move_ties_go_to_lowest_node():
    # symmetric star: every leaf has the same value, the hub must pick leaf 1
    env = build_topology(TopologySpec("star", n_leaves=4))
    prob = problem(env)
    V, _ = value_iteration("static", prob)
    pol = greedy_policy(V, "static", prob)
    assert pol.move[0] == 1
    assert all(pol.move[v] == 0 for v in range(1, 5))


def test_move_targets_are_admissible():
    env = build_topology(TopologySpec("erdos-renyi", n_nodes=15, p=0.1, seed=9))
    prob = problem(env, np.random.default_rng(9).uniform(0, 3, env.n_nodes))
    V, _ = value_iteration("static", prob)
    pol = greedy_policy(V, "static", prob)
    for v in range(env.n_nodes):
        assert pol.move[v] in env.move_targets[v]


def test_singleton_collapse_fixed_points_and_policies():
    env = grid(5, 5, seed=3)
    theta = np.array(env.threat)
    nov = np.random.default_rng(6).uniform(0, 3, env.n_nodes)
    members = CredibleSets.from_sets([{t} for t in theta], 3).members
    rob = problem(env, nov, members=members)
    nom = problem(env, nov, theta_hat=theta)
    Vr, _ = value_iteration("adaptive", rob)
    Vn, _ = value_iteration("nominal", nom)
    assert np.max(np.abs(Vr - Vn)) <= 1e-10
    pr, pn = greedy_policy(Vr, "adaptive", rob), greedy_policy(Vn, "nominal", nom)
    assert (pr.sense == pn.sense).all() and (pr.move == pn.move).all()


def test_robust_value_below_nominal_at_truth():
    env = grid()
    theta = np.array(env.threat)
    rng = np.random.default_rng(7)
    for _ in range(30):
        nov = rng.uniform(0, 3, env.n_nodes)
        Vr, _ = value_iteration("adaptive", problem(env, nov, members=random_members(rng, 12, theta)))
        Vn, _ = value_iteration("nominal", problem(env, nov, theta_hat=theta))
        assert np.all(Vr <= Vn + 1e-9)


def test_shrinking_sets_never_lowers_value():
    env = grid()
    rng = np.random.default_rng(8)
    for _ in range(30):
        big = random_members(rng, 12)
        small = big & (rng.random(big.shape) < 0.6)
        empty = ~small.any(axis=1)
        small[empty] = big[empty]
        nov = rng.uniform(0, 3, 12)
        Vb, _ = value_iteration("adaptive", problem(env, nov, members=big), tol=1e-10)
        Vs, _ = value_iteration("adaptive", problem(env, nov, members=small), tol=1e-10)
        assert np.all(Vs >= Vb - 1e-8)


def test_estimator_api():
    env = grid()
    prob = problem(env)
    est = RobustPlanner(kind="static", tol=1e-8)
    assert est.get_params() == {"kind": "static", "tol": 1e-8, "max_iter": 10_000, "warm_start": False}
    with pytest.raises(NotFittedError):
        est.predict([0])
    est.fit(prob)
    assert list(est.predict([0, 5])) == ["D", "D"]
    assert est.predict_move(0)[0] in env.move_targets[0]
    assert est.n_iter_ >= 1 and est.residual_ < 1e-8
    twin = clone(est).set_params(kind="nominal")
    assert twin.kind == "nominal" and not hasattr(twin, "value_")


def test_warm_start_reaches_same_fixed_point():
    env = grid()
    prob = problem(env, np.linspace(0, 1, 12))
    cold = RobustPlanner(kind="static", tol=1e-10).fit(prob)
    warm = RobustPlanner(kind="static", tol=1e-10, warm_start=True).fit(prob)
    second = warm.fit(problem(env, np.linspace(0, 1.1, 12)))
    again = RobustPlanner(kind="static", tol=1e-10).fit(problem(env, np.linspace(0, 1.1, 12)))
    assert np.max(np.abs(second.value_ - again.value_)) < 1e-8
    assert warm.n_iter_ < cold.n_iter_


def test_value_function_csv():
    text = value_function_csv(np.array([[1.5, -2.0]]))
    assert text.splitlines() == ["node,phase,value", "0,sense,1.5", "0,move,-2.0"]
