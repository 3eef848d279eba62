import numpy as np
import pytest

from formation_sensing_system.core.exceptions import InvalidArgumentError
from formation_sensing_system.core.models import ObstacleState, VfeoContext
from formation_sensing_system.logic_blocks.numerics import finite_diff_grad
from formation_sensing_system.logic_blocks.vfeo import (
    constraint_terms,
    formula_vfts,
    is_feasible,
    optimize,
    penalty,
    penalty_gradient,
    positions_to_velocity,
    predicted_crlb,
    should_trigger,
)

LEADER_POSITION = np.array([150.0, 130.0, 102.0])
LEADER_VELOCITY = np.array([4.0, -1.0, 0.5])


def make_context(**overrides) -> VfeoContext:
    base = VfeoContext(
        current_positions=np.zeros((5, 3)),
        leader_position=LEADER_POSITION,
        leader_velocity=LEADER_VELOCITY,
        obstacle=ObstacleState.from_parts([172.0, 113.0, 94.0], [-3.0, 3.0, 1.0]),
        link_variances_r=np.full(5, 1e-2),
        link_variances_v=np.full(5, 1e-1),
        zeta=1e-6,
    )
    # The formation one cycle earlier.
    current = formula_vfts(base) - LEADER_VELOCITY * base.dt
    return base.model_copy(update={"current_positions": current, **overrides})


@pytest.fixture
def ctx():
    return make_context()


def test_uniform_layout_is_feasible(ctx):
    uniform = formula_vfts(ctx)
    terms = constraint_terms(uniform, ctx)
    np.testing.assert_allclose(terms["circle"], 0.0, atol=1e-9)
    np.testing.assert_allclose(terms["altitude"], 0.0, atol=1e-9)
    assert is_feasible(uniform, ctx)


def test_trigger_compares_uniform_accuracy_with_threshold(ctx):
    triggered, eps_p = should_trigger(ctx)
    assert triggered
    assert eps_p == pytest.approx(predicted_crlb(ctx, formula_vfts(ctx)).eps_p)
    relaxed = make_context(zeta=10 * eps_p)
    assert should_trigger(relaxed) == (False, pytest.approx(eps_p))


def test_optimize_keeps_formula_layout_below_threshold():
    ctx = make_context(zeta=1e6)
    result = optimize(ctx)
    assert not result.triggered
    np.testing.assert_allclose(result.positions, formula_vfts(ctx))
    assert result.eps_p == result.eps_p_uniform


@pytest.mark.parametrize("parameterization", ["angle", "cartesian"])
def test_optimize_improves_accuracy_within_constraints(ctx, parameterization):
    result = optimize(ctx, max_iters=60, parameterization=parameterization)
    assert result.triggered
    assert result.eps_p < result.eps_p_uniform
    assert is_feasible(result.positions, ctx)
    assert result.eps_p == pytest.approx(predicted_crlb(ctx, result.positions).eps_p)


def test_parameterizations_reach_the_same_accuracy():
    ctx = make_context(zeta=0.5)
    angle = optimize(ctx, parameterization="angle")
    cartesian = optimize(ctx, parameterization="cartesian")
    assert angle.eps_p < angle.eps_p_uniform
    assert abs(angle.eps_p - cartesian.eps_p) <= 0.05 * angle.eps_p


def test_optimized_layout_meets_the_accuracy_threshold():
    ctx = make_context(zeta=0.5, link_variances_r=np.full(5, 8e-3), link_variances_v=np.full(5, 8e-2))
    triggered, eps_uniform = should_trigger(ctx)
    assert triggered
    result = optimize(ctx)
    assert result.triggered
    assert result.eps_p < eps_uniform
    assert result.eps_p < ctx.zeta


def random_trigger(seed) -> VfeoContext:
    """Obstacle off the formation plane, clear of every uniform VFT, with a threshold that always fires."""
    rng = np.random.default_rng(seed)
    base = make_context()
    uniform = formula_vfts(base)
    while True:
        bearing = rng.uniform(0, 2 * np.pi)
        planar = rng.uniform(0.0, 40.0) * np.array([np.cos(bearing), np.sin(bearing)])
        height = rng.choice([-1.0, 1.0]) * rng.uniform(5.0, 20.0)
        position = LEADER_POSITION + np.array([planar[0], planar[1], height])
        if np.min(np.linalg.norm(uniform - position, axis=1)) > base.r_s:
            break
    obstacle = ObstacleState.from_parts(position, rng.uniform(-5.0, 5.0, 3))
    return base.model_copy(update={"obstacle": obstacle})


@pytest.mark.parametrize("seed", range(50))
def test_optimized_layouts_are_feasible(seed):
    ctx = random_trigger(seed)
    result = optimize(ctx, max_iters=15)
    assert is_feasible(result.positions, ctx)
    assert result.eps_p <= result.eps_p_uniform + 1e-9


def test_optimize_is_deterministic(ctx):
    a = optimize(ctx, max_iters=30)
    b = optimize(ctx, max_iters=30)
    np.testing.assert_array_equal(a.positions, b.positions)
    assert a.iterations == b.iterations


def test_optimize_accepts_context_dicts(ctx):
    result = optimize(dict(ctx), max_iters=10)
    assert result.eps_p_uniform == pytest.approx(should_trigger(ctx)[1])


def test_optimize_rejects_bad_arguments(ctx):
    with pytest.raises(InvalidArgumentError):
        optimize("not a context")
    with pytest.raises(InvalidArgumentError):
        optimize(ctx, mu_schedule=[])
    with pytest.raises(InvalidArgumentError):
        optimize(ctx, parameterization="polar")


def test_penalty_gradient_matches_finite_differences():
    # A tight speed limit and a crowded pair make the inequality terms active.
    ctx = make_context(v_max=1.0)
    u = formula_vfts(ctx) + np.array(
        [[0.4, -0.3, 0.2], [0.0, 0.0, 0.0], [1.1, 0.5, -0.6], [-0.7, 0.2, 0.3], [0.3, 0.9, -0.1]]
    )
    u[1] = u[2] + np.array([2.0, 1.0, 0.5])
    terms = constraint_terms(u, ctx)
    assert np.any(terms["speed"] > 0) and np.any(terms["separation"] > 0)

    mu = 10.0
    numeric = finite_diff_grad(lambda x: penalty(x, ctx, mu), u, h=1e-6)
    np.testing.assert_allclose(penalty_gradient(u, ctx, mu), numeric, rtol=1e-4, atol=1e-5)


def test_penalty_requires_positive_weight(ctx):
    with pytest.raises(InvalidArgumentError):
        penalty(formula_vfts(ctx), ctx, 0.0)


def test_positions_to_velocity_clips_each_uav():
    current = np.zeros((2, 3))
    target = np.array([[3.0, 4.0, 0.0], [300.0, 0.0, 0.0]])
    velocity = positions_to_velocity(current, target, dt=1.0, v_max=78.0)
    np.testing.assert_allclose(velocity[0], [3.0, 4.0, 0.0])
    np.testing.assert_allclose(velocity[1], [78.0, 0.0, 0.0])
    with pytest.raises(InvalidArgumentError):
        positions_to_velocity(current, target[:1], dt=1.0, v_max=78.0)
