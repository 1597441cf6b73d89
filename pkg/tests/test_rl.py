import numpy as np
import pytest

from featforge.data import make_folds, synthetic_interaction
from featforge.evaluator import Scorer
from featforge.expr import DEFAULT_OPERATORS
from featforge.models import ModelSpec
from featforge.rl import (HEAD, OPERATION, TAIL, Agent, Collector, CollectorConfig, LinearQ, MLPQ,
                          RunningNorm, Transition, bellman_target, collect, q_update,
                          random_collect, select_action)
from featforge.state import STATE_DIM


def loss_at(approx, flat, s, a, target):
    approx.set_flat(flat)
    return (approx.predict(s)[a] - target) ** 2


def finite_difference(approx, s, a, target, h=1e-6):
    theta = approx.get_flat().copy()
    grad = np.empty_like(theta)
    for i in range(theta.size):
        up, dn = theta.copy(), theta.copy()
        up[i] += h
        dn[i] -= h
        grad[i] = (loss_at(approx, up, s, a, target) - loss_at(approx, dn, s, a, target)) / (2 * h)
    approx.set_flat(theta)
    return grad


def relative_error(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)


def gradient_check(kind, draws=100, n_in=6, n_out=4):
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(draws):
        if kind == "linear":
            approx = LinearQ(n_in, n_out, rng, init_scale=1.0)
            approx.b[...] = rng.standard_normal(n_out)
        else:
            approx = MLPQ(n_in, n_out, rng, hidden=5)
            approx.set_flat(rng.standard_normal(approx.get_flat().size))
        s = rng.standard_normal(n_in)
        a = int(rng.integers(n_out))
        target = float(rng.standard_normal())
        _, grads = approx.gradient(s, a, target)
        analytic = np.concatenate([g.ravel() for g in grads])
        worst = max(worst, relative_error(analytic, finite_difference(approx, s, a, target)))
    return worst


@pytest.mark.parametrize("kind", ["linear", "mlp"])
def test_gradients_match_finite_differences(kind):
    assert gradient_check(kind) < 1e-5


def test_loss_decreases_after_small_step():
    rng = np.random.default_rng(1)
    q = MLPQ(STATE_DIM, 5, rng)
    s = rng.standard_normal(STATE_DIM)
    before, grads = q.gradient(s, 2, 3.0)
    q.step(grads, 1e-3)
    after, _ = q.gradient(s, 2, 3.0)
    assert after < before


def test_select_action_greedy_ties_lowest_and_restricted():
    q = LinearQ(3, 5)
    q.b[...] = [0.0, 2.0, 2.0, 1.0, 9.0]
    agent = Agent(HEAD, q, epsilon=0.0)
    rng = np.random.default_rng(0)
    s = np.zeros(3)
    assert select_action(agent, s, 4, rng) == 1
    assert select_action(agent, s, 5, rng) == 4
    assert select_action(agent, s, 1, rng) == 0
    with pytest.raises(ValueError):
        select_action(agent, s, 0, rng)


def test_select_action_random_within_range():
    agent = Agent(TAIL, LinearQ(3, 10), epsilon=1.0)
    rng = np.random.default_rng(0)
    picks = {select_action(agent, np.zeros(3), 3, rng) for _ in range(200)}
    assert picks == {0, 1, 2}


def test_bellman_target_and_update():
    q = LinearQ(2, 3)
    q.b[...] = [1.0, 5.0, 3.0]
    head = Agent(HEAD, q, learning_rate=0.1, gamma=0.5)
    tr = Transition(np.array([1.0, 0.0]), (0, 1, 2), 0.2, np.zeros(2), False, n_next_features=1)
    # next-state max is restricted to the features that exist afterwards
    assert bellman_target(head, tr) == pytest.approx(0.2 + 0.5 * 1.0)
    op = Agent(OPERATION, q, gamma=0.5)
    assert bellman_target(op, tr) == pytest.approx(0.2 + 0.5 * 5.0)
    term = Transition(tr.state, tr.actions, 0.2, tr.next_state, True, 1)
    assert bellman_target(head, term) == 0.2
    q_update(head, term)                # Q(s, a=0) = 1 -> 1 - 0.1 * 2 * (1 - 0.2)
    assert q.predict(np.array([1.0, 0.0]))[0] == pytest.approx(1.0 - 0.16 - 0.16)


def test_running_norm_matches_batch_statistics():
    rng = np.random.default_rng(0)
    xs = rng.standard_normal((50, 4)) * [1, 10, 100, 1000]
    norm = RunningNorm(4)
    for x in xs:
        norm.update(x)
    np.testing.assert_allclose(norm.mean, xs.mean(axis=0))
    np.testing.assert_allclose(norm(xs[0]), (xs[0] - xs.mean(0)) / np.sqrt(xs.var(0) + 1e-8))


# --- collection ---------------------------------------------------------------------------

def setup(seed=0, n_rows=120):
    ds = synthetic_interaction(n_rows=n_rows, seed=seed)
    return ds, Scorer(ds, ModelSpec("ridge"), make_folds(ds, 5, seed))


def test_episode_structure():
    ds, sc = setup()
    run = collect(ds, sc, CollectorConfig(episodes=1, steps=3, seed=0))
    (ep,) = run.episodes
    assert len(ep.rewards) == 3 and len(run.transitions) == 3
    sizes = [len(ind) for ind in ep.population]
    assert sizes == sorted(sizes)
    assert all(s > ds.n_features for s in sizes)
    assert len(ep.population) == sum(ep.accepted)
    # every accepted step appends exactly one expression
    assert sizes == [ds.n_features + i + 1 for i in range(len(sizes))]
    assert all(ind.origin == "rl_collector" and ind.score is not None for ind in ep.population)


def test_rewards_telescope():
    ds, sc = setup(1)
    run = collect(ds, sc, CollectorConfig(episodes=4, steps=10, seed=1))
    for ep in run.episodes:
        accepted = sum(r for r, ok in zip(ep.rewards, ep.accepted) if ok)
        assert abs(accepted - (ep.final_score - ep.initial_score)) <= 1e-12
        for r, ok in zip(ep.rewards, ep.accepted):
            if not ok:
                assert r == -0.01


def test_degenerate_step_is_penalised_not_appended():
    ds, sc = setup()
    ds.X[:, 2] = 1.0                    # any unary op on f2 is constant
    ops = DEFAULT_OPERATORS.subset(["sqrt"])
    cfg = CollectorConfig(episodes=1, steps=20, seed=0)
    run = Collector(ds, sc, cfg, ops).run()
    ep = run.episodes[0]
    assert not all(ep.accepted)
    assert len(ep.population) == sum(ep.accepted)


def test_collection_deterministic():
    ds, sc = setup(2)
    a = collect(ds, sc, CollectorConfig(episodes=2, steps=5, seed=7))
    b = collect(ds, setup(2)[1], CollectorConfig(episodes=2, steps=5, seed=7))
    assert [[str(i) for i in p] for p in a.populations] == \
        [[str(i) for i in p] for p in b.populations]
    assert [t.reward for t in a.transitions] == [t.reward for t in b.transitions]


def test_frozen_greedy_is_deterministic():
    ds, sc = setup(3)
    cfg = CollectorConfig(episodes=2, steps=4, epsilon_start=0.0, epsilon_end=0.0, seed=0)
    runs = []
    for _ in range(2):
        c = Collector(ds, sc, cfg, learn=True)
        c.learn = False                  # frozen approximator, epsilon 0
        for agent in c.agents.values():
            agent.epsilon = 0.0
        c._epsilon = lambda: 0.0
        runs.append([str(i) for p in c.run().populations for i in p])
    assert runs[0] == runs[1]


def test_epsilon_anneals_linearly():
    ds, sc = setup()
    c = Collector(ds, sc, CollectorConfig(episodes=2, steps=5, seed=0))
    seen = []
    orig = c._epsilon

    def spy():
        v = orig()
        seen.append(v)
        return v

    c._epsilon = spy
    c.run()
    assert seen[0] == 1.0 and seen[-1] == pytest.approx(0.1)
    assert np.allclose(np.diff(seen), np.diff(seen)[0])


def test_random_collector_uses_no_learning():
    ds, sc = setup()
    c = Collector(ds, sc, CollectorConfig(episodes=1, steps=3, seed=0), learn=False,
                  origin="random_collector")
    before = {r: a.approximator.get_flat().copy() for r, a in c.agents.items()}
    c.run()
    for r, a in c.agents.items():
        np.testing.assert_array_equal(a.approximator.get_flat(), before[r])
    run = random_collect(ds, sc, CollectorConfig(episodes=1, steps=3, seed=0))
    assert all(i.origin == "random_collector" for i in run.populations[0])


def test_config_validation():
    with pytest.raises(ValueError):
        CollectorConfig(episodes=0)
    with pytest.raises(ValueError):
        CollectorConfig(gamma=1.5)
    with pytest.raises(ValueError):
        CollectorConfig(lr=0)
