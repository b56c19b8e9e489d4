import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from clipdsp.errors import DimensionMismatch, IdentityViolation, ScheduleInvalid
from clipdsp.graph import AdjacencyMatrix, build_graph
from clipdsp.noise import NoiseModel, estimate_delta_moment
from clipdsp.optimizer import (
    SchedulePair,
    agent_step,
    clip,
    clip_rows,
    clipping_bias_bound,
    estimate_clipping_bias,
    record_iterations,
    run,
    validate_schedules,
)
from clipdsp.problem import (
    ConstraintSet,
    QuadraticProblem,
    gradient_bound,
    project,
    projected_gradient_descent,
    solve_centralized,
)

PAPER_SCHEDULES = SchedulePair(10.0, 1.0, 10.0, 0.4, 1.5)
ZERO6 = NoiseModel("zero", 6)
PARETO6 = NoiseModel("shifted_pareto", 6)


# ---- clipping


def test_clip_examples():
    np.testing.assert_allclose(clip([3.0, 4.0], 2.5), [1.5, 2.0])
    np.testing.assert_array_equal(clip([1.0, 0.0], 5), [1.0, 0.0])
    np.testing.assert_array_equal(clip([0.0, 0.0], 1), [0.0, 0.0])


def test_clip_rejects_nonpositive_tau():
    with pytest.raises(ValueError):
        clip([1.0], 0.0)


@settings(max_examples=300, deadline=None)
@given(arrays(np.float64, 5, elements=st.floats(-1e6, 1e6)), st.floats(1e-3, 1e3))
def test_clip_properties(g, tau):
    c = clip(g, tau)
    n = np.linalg.norm(g)
    assert np.linalg.norm(c) <= min(n, tau) * (1 + 1e-12)
    if n <= tau:
        np.testing.assert_array_equal(c, g)
    elif n > 0:
        np.testing.assert_allclose(c / np.linalg.norm(c), g / n, atol=1e-12)


def test_clip_rows_matches_clip():
    G = np.random.default_rng(0).standard_normal((8, 3)) * 5
    G[2] = 0
    np.testing.assert_allclose(clip_rows(G, 2.0), [clip(g, 2.0) for g in G])


# ---- agent step


def test_agent_step_no_gradient_no_noise():
    box = ConstraintSet.box(3)
    v = np.array([0.2, -0.4, 0.9])
    np.testing.assert_array_equal(agent_step(v, np.zeros(3), np.zeros(3), 0.5, 1.0, box), v)


def test_agent_step_clips_large_gradient(paper):
    inst, _ = paper
    c0 = gradient_bound(inst)
    grad = np.zeros(6)
    grad[0] = 10 * c0
    alpha, tau = 0.3, 2 * c0
    expected = project(inst.omega, -alpha * tau * np.eye(6)[0])
    np.testing.assert_allclose(agent_step(np.zeros(6), grad, np.zeros(6), alpha, tau, inst.omega), expected)


def test_agent_step_displacement_bound():
    rng = np.random.default_rng(1)
    for omega in (ConstraintSet.box(4), ConstraintSet.ball(4)):
        for _ in range(1000):
            v = project(omega, rng.uniform(-1.5, 1.5, 4))
            grad = rng.standard_normal(4) * rng.uniform(0, 10)
            noise = rng.standard_cauchy(4)
            alpha, tau = rng.uniform(0.01, 2), rng.uniform(0.1, 5)
            x = agent_step(v, grad, noise, alpha, tau, omega)
            assert np.linalg.norm(x - v) <= alpha * tau * (1 + 1e-12)
            assert omega.contains(x, tol=1e-12)


def test_agent_step_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        agent_step(np.zeros(3), np.zeros(2), np.zeros(3), 0.1, 1.0, ConstraintSet.box(3))


# ---- schedule validator


def test_reference_schedule_passes():
    c0 = 0.5749579515849603
    rep = validate_schedules(SchedulePair(1.0, 1.0, 2 * c0, 0.4, 1.5), c0)
    assert rep.passed
    assert [c.name for c in rep.checks] == ["c1", "c2", "c3"]


def test_p_half_fails_c1():
    rep = validate_schedules(SchedulePair(1.0, 0.5, 2.0, 0.0, 1.5), 1.0)
    assert not rep["c1"].passed
    assert "2p > 1): 1 > 1 [FAIL]" in rep["c1"].inequalities[1]


def test_constant_tau_fails_c3():
    rep = validate_schedules(SchedulePair(1.0, 1.0, 2.0, 0.0, 1.5), 1.0)
    assert rep["c1"].passed and rep["c2"].passed
    assert not rep["c3"].passed
    assert "1 > 1 [FAIL]" in rep["c3"].inequalities[1]


def test_delta_1_2_still_passes():
    # p + (2 delta - 2) q = 1 + 0.4 * 0.4 = 1.16 > 1
    rep = validate_schedules(SchedulePair(1.0, 1.0, 2.0, 0.4, 1.2), 1.0)
    assert rep.passed
    assert "1.16 > 1 [ok]" in rep["c3"].inequalities[1]


def test_tau_below_2c0_fails_c2():
    rep = validate_schedules(SchedulePair(1.0, 1.0, 1.0, 0.4, 1.5), 1.0)
    assert not rep["c2"].passed


def test_fast_growing_tau_fails_c2_and_c3():
    rep = validate_schedules(SchedulePair(1.0, 1.0, 2.0, 1.0, 1.5), 1.0)
    assert not rep["c2"].passed
    assert not rep["c3"].passed


def test_paper_preset_schedules(paper):
    inst, _ = paper
    assert validate_schedules(PAPER_SCHEDULES, gradient_bound(inst)).passed


@settings(max_examples=200, deadline=None)
@given(st.floats(0.01, 2), st.floats(0, 1.5), st.floats(1.01, 2))
def test_validator_agrees_with_partial_sums(p, q, delta):
    # c1 second part and c3 first part against a direct series-growth test
    rep = validate_schedules(SchedulePair(1.0, p, 10.0, q, delta), 1.0)
    assert rep["c1"].passed == (p <= 1 and 2 * p > 1)
    assert rep["c3"].passed == (2 * p - 2 * q > 1 and p + (2 * delta - 2) * q > 1)


def test_schedule_values():
    s = SchedulePair(10.0, 1.0, 10.0, 0.4)
    np.testing.assert_allclose(s.alpha([0, 9]), [10.0, 1.0])
    np.testing.assert_allclose(s.tau([0, 31]), [10.0, 10 * 32**0.4])


@pytest.mark.parametrize(
    "args", [(0.0, 1.0, 1.0, 0.4), (1.0, -1.0, 1.0, 0.4), (1.0, 1.0, 1.0, 0.4, 1.0), (1.0, 1.0, 1.0, 0.4, 2.5)]
)
def test_schedule_invalid_args(args):
    with pytest.raises(ValueError):
        SchedulePair(*args)


# ---- clipping bias


@pytest.mark.parametrize("factor", [2, 10, 100])
def test_clipping_bias_bound(paper, factor):
    inst, _ = paper
    c0 = gradient_bound(inst)
    rng = np.random.default_rng(factor)
    v = np.array([0.5, -0.5, 0.5, -0.5, 0.5, -0.5])
    nu = estimate_delta_moment(PARETO6, 1.5, 10**6, rng) ** (1 / 1.5)
    bias, se = estimate_clipping_bias(inst.local_gradient(2, v), PARETO6, factor * c0, 10**6, rng)
    assert np.linalg.norm(bias) <= clipping_bias_bound(nu, 1.5, factor * c0) + 3 * se


def test_clipping_bias_zero_without_clipping_effect():
    bias, se = estimate_clipping_bias(np.ones(2), NoiseModel("zero", 2), 10.0, 1000, np.random.default_rng(0))
    np.testing.assert_array_equal(bias, 0)
    assert se == 0


# ---- run


def test_record_iterations():
    np.testing.assert_array_equal(record_iterations(100, 10), np.arange(10, 101, 10))
    np.testing.assert_array_equal(record_iterations(105, 10)[-2:], [100, 105])
    assert len(record_iterations(105, 10)) == 11
    np.testing.assert_array_equal(record_iterations(3, 10), [3])


def test_noise_free_run_converges(paper):
    inst, A = paper
    tr = run(inst, A, ZERO6, PAPER_SCHEDULES, 20_000, seed=0, stride=1000)
    assert tr.dist_to_opt[-1] < 1e-3
    assert not tr.diverged


def test_single_agent_matches_pgd():
    omega = ConstraintSet.box(2)
    inst = QuadraticProblem([[3.0, 0.2]], omega, weights=0.5)
    sched = SchedulePair(0.9, 1.0, 50.0, 0.4, 2.0)
    T = 50
    steps = sched.alpha(np.arange(T))
    ref = list(projected_gradient_descent(inst, [0.0, 0.0], steps))
    theta = solve_centralized(inst)
    for t in range(1, T + 1):
        tr = run(inst, AdjacencyMatrix.trivial(), NoiseModel("zero", 2), sched, t, seed=0, stride=t, theta_star=theta)
        np.testing.assert_array_equal(tr.final_states[0], ref[t - 1])


def test_states_feasible_and_metrics_nonnegative(paper):
    inst, A = paper
    tr = run(inst, A, PARETO6, PAPER_SCHEDULES, 500, seed=3, stride=7)
    assert len(tr) == int(np.ceil(500 / 7))
    assert inst.omega.contains(tr.final_states)
    for m in tr.METRICS:
        assert np.all(tr.metric(m) >= 0)


def test_ball_run_feasible(paper):
    from clipdsp.problem import build_paper_instance

    inst, A = build_paper_instance(omega="ball")
    tr = run(inst, A, PARETO6, PAPER_SCHEDULES, 300, seed=1)
    assert inst.omega.contains(tr.final_states, tol=1e-12)


def test_run_deterministic(paper):
    inst, A = paper
    a = run(inst, A, PARETO6, PAPER_SCHEDULES, 300, seed=5, clipping=False)
    b = run(inst, A, PARETO6, PAPER_SCHEDULES, 300, seed=5, clipping=False)
    np.testing.assert_array_equal(a.dist_to_opt, b.dist_to_opt)
    np.testing.assert_array_equal(a.final_states, b.final_states)


def test_zero_noise_unclipped_run_bitwise_reproducible(paper):
    inst, A = paper
    a = run(inst, A, ZERO6, PAPER_SCHEDULES, 200, seed=1, clipping=False)
    b = run(inst, A, ZERO6, PAPER_SCHEDULES, 200, seed=99, clipping=False)
    np.testing.assert_array_equal(a.final_states, b.final_states)


def test_average_update_identity(paper):
    inst, A = paper
    run(inst, A, PARETO6, PAPER_SCHEDULES, 2000, seed=2, check_identities=True)


def test_identity_check_catches_non_doubly_stochastic(paper):
    inst, _ = paper
    w = np.full((6, 6), 0.1)
    w[:, 0] += 0.4  # row-stochastic, columns unbalanced
    bad = AdjacencyMatrix.from_weights(w)
    with pytest.raises(IdentityViolation):
        run(inst, bad, PARETO6, PAPER_SCHEDULES, 50, seed=0, check_identities=True)


def test_invalid_schedule_rejected(paper):
    inst, A = paper
    bad = SchedulePair(1.0, 0.4, 10.0, 0.0, 1.5)
    with pytest.raises(ScheduleInvalid):
        run(inst, A, ZERO6, bad, 10, seed=0)
    run(inst, A, ZERO6, bad, 10, seed=0, override_schedule_check=True)


def test_dimension_checks(paper):
    inst, A = paper
    with pytest.raises(DimensionMismatch):
        run(inst, build_graph(2, [(1, 2, 0.5)]), ZERO6, PAPER_SCHEDULES, 10, seed=0)
    with pytest.raises(DimensionMismatch):
        run(inst, A, NoiseModel("zero", 3), PAPER_SCHEDULES, 10, seed=0)


def test_divergence_is_recorded():
    class Exploding(QuadraticProblem):
        # gradients become NaN once the iterates have been mixed 25 times
        def gradients(self, X):
            self.calls += 1
            g = super().gradients(X)
            return np.full_like(g, np.nan) if self.calls > self.fuse else g

    omega = ConstraintSet.box(2)
    inst = Exploding([[0.5, 0.5], [0.0, 0.0]], omega)
    A = build_graph(2, [(1, 2, 0.5)])
    sched = SchedulePair(0.1, 1.0, 100.0, 0.4, 2.0)
    inst.calls, inst.fuse = 0, 10**9
    run(inst, A, NoiseModel("zero", 2), sched, 1, seed=0, clipping=False, theta_star=np.zeros(2))
    setup_calls = inst.calls - 1
    inst.calls, inst.fuse = 0, setup_calls + 25
    tr = run(inst, A, NoiseModel("zero", 2), sched, 100, seed=0, clipping=False, stride=10,
             theta_star=np.array([0.25, 0.25]))
    assert tr.diverged
    assert tr.diverged_at == 26
    np.testing.assert_array_equal(tr.k, [10, 20])
    assert np.all(np.isfinite(tr.final_states))


def test_trace_lookup(paper):
    inst, A = paper
    tr = run(inst, A, ZERO6, PAPER_SCHEDULES, 100, seed=0)
    assert tr.at(10) == tr.dist_to_opt[0]
    with pytest.raises(KeyError):
        tr.at(15)
