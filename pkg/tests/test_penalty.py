import numpy as np
import pytest

from mincoplan import minco, penalty
from mincoplan.errors import DimensionMismatch
from oracles import random_instance


def make_traj(rng, s, M, m=3, scale=1.0):
    q, T, bc0, bcf = random_instance(rng, s, M, m,
                                     t_range=(0.6, 1.8), scale=scale)
    return minco.construct(q, T, bc0, bcf, s)


def fd_worst(cs, traj, n_dirs=20, h=1e-5, rng=None):
    """Worst relative FD error over random coefficient/duration directions."""
    rng = rng or np.random.default_rng(0)
    s, m, M = traj.s, traj.m, traj.n_pieces
    I, dI_dc, dI_dT = penalty.integrate_penalty(cs, traj)
    assert I > 0, "instance is not violated; the check would be vacuous"
    worst = 0.0
    for _ in range(n_dirs):
        d = rng.normal(size=traj.coeffs.shape)
        tp = minco.Trajectory(s, traj.durations, traj.coeffs + h * d)
        tm = minco.Trajectory(s, traj.durations, traj.coeffs - h * d)
        num = (penalty.integrate_penalty(cs, tp)[0]
               - penalty.integrate_penalty(cs, tm)[0]) / (2 * h)
        ana = float(np.sum(dI_dc.reshape(traj.coeffs.shape) * d))
        worst = max(worst, abs(num - ana) / max(abs(num), abs(ana), 1.0))
        dT = rng.normal(size=M)
        tp = minco.Trajectory(s, traj.durations + h * dT, traj.coeffs)
        tm = minco.Trajectory(s, traj.durations - h * dT, traj.coeffs)
        num = (penalty.integrate_penalty(cs, tp)[0]
               - penalty.integrate_penalty(cs, tm)[0]) / (2 * h)
        ana = float(dI_dT @ dT)
        worst = max(worst, abs(num - ana) / max(abs(num), abs(ana), 1.0))
    return worst


def test_satisfied_constraints_give_zero():
    rng = np.random.default_rng(0)
    traj = make_traj(rng, 3, 3, scale=0.5)
    cs = penalty.ConstraintSet([
        penalty.ConstraintEntry("speed", penalty.SpeedLimit(1e3), 10.0),
        penalty.ConstraintEntry("ball", penalty.BallContain(np.zeros(3), 1e3), 5.0),
    ])
    I, dI_dc, dI_dT = penalty.integrate_penalty(cs, traj)
    assert I == 0.0
    assert np.max(np.abs(dI_dc)) == 0.0 and np.max(np.abs(dI_dT)) == 0.0


def test_constant_violation_is_integrated_exactly():
    # A trajectory pinned at x=1 against the plane x<=0.3 violates by 0.7
    # at every stamp; the trapezoid rule is exact for constants, so
    # I = chi * 0.7^3 * total duration with no quadrature error.
    s, M = 3, 4
    rng = np.random.default_rng(1)
    q = np.tile([1.0, 0.0, 0.0], (M - 1, 1))
    T = rng.uniform(0.5, 2.0, size=M)
    bc = np.zeros((s, 3))
    bc[0] = [1.0, 0.0, 0.0]
    traj = minco.construct(q, T, bc, bc, s)
    chi = 5.0
    cs = penalty.ConstraintSet([
        penalty.ConstraintEntry(
            "plane", penalty.PolytopeContain([[1.0, 0.0, 0.0]], [0.3]), chi
        )
    ])
    I, _, dI_dT = penalty.integrate_penalty(cs, traj)
    exact = chi * 0.7**3 * T.sum()
    assert abs(I - exact) <= 1e-12 * exact
    assert np.allclose(dI_dT, chi * 0.7**3, rtol=1e-10)


def test_speed_limit_on_stationary_point():
    derivs = np.zeros((4, 3))
    vals, grads = penalty.SpeedLimit(2.0)(derivs[None])
    assert vals.shape == (1, 1) and vals[0, 0] == -4.0
    assert np.max(np.abs(grads)) == 0.0


def test_polytope_contain_is_metric():
    d = 0.37
    derivs = np.zeros((4, 3))
    derivs[0] = [d, 0.0, 0.0]
    # Rows are normalized internally, so violations read in meters.
    ev = penalty.PolytopeContain([[2.0, 0.0, 0.0]], [0.0])
    vals, grads = ev(derivs[None])
    assert abs(vals[0, 0] - d) <= 1e-12
    assert np.allclose(grads[0, 0, 0], [1.0, 0.0, 0.0], atol=1e-12)


def test_thrust_window_at_hover():
    g = 9.81
    derivs = np.zeros((4, 3))
    ev = penalty.ThrustWindow(5.0, 18.5, scale=1.0)
    vals, _ = ev(derivs[None])
    # Two rows: f_min - f and f - f_max, satisfied with hover margins.
    assert np.allclose(np.sort(vals[0]), np.sort([5.0 - g, g - 18.5]), atol=1e-9)


def test_sample_constraints_matches_direct_evaluation():
    rng = np.random.default_rng(2)
    traj = make_traj(rng, 3, 3)
    speed = penalty.SpeedLimit(0.4)
    ball = penalty.BallContain([0.1, 0.0, 0.0], 0.2)
    cs = penalty.ConstraintSet([
        penalty.ConstraintEntry("speed", speed, 1.0),
        penalty.ConstraintEntry("ball", ball, 1.0, pieces=[1]),
    ])
    derivs = traj.sample(np.array([0.4 * traj.total_duration]), 3)[0]
    out = penalty.sample_constraints(cs, derivs, piece=1)
    assert [name for name, _, _ in out] == ["speed", "ball"]
    vals, grads = speed(derivs[None])
    assert np.array_equal(out[0][1], vals[0])
    assert np.array_equal(out[0][2], grads[0])
    out0 = penalty.sample_constraints(cs, derivs, piece=0)
    assert [name for name, _, _ in out0] == ["speed"]


@pytest.mark.parametrize("case", [
    "speed_accel", "containment", "thrust_rate", "ellipsoid"
])
def test_gradients_match_finite_differences(case):
    rng = np.random.default_rng(
        {"speed_accel": 3, "containment": 4, "thrust_rate": 5, "ellipsoid": 6}[case]
    )
    if case == "speed_accel":
        cs = penalty.ConstraintSet([
            penalty.ConstraintEntry("speed", penalty.SpeedLimit(0.4), 100.0),
            penalty.ConstraintEntry("accel", penalty.AccelLimit(0.8), 50.0,
                                    pieces=[0, 2]),
        ])
        traj = make_traj(rng, 3, 4)
    elif case == "containment":
        cs = penalty.ConstraintSet([
            penalty.ConstraintEntry(
                "box", penalty.PolytopeContain(np.eye(3), 0.05 * np.ones(3)), 80.0
            ),
            penalty.ConstraintEntry(
                "ball", penalty.BallContain([0.1, 0.0, 0.0], 0.2), 60.0, pieces=[1]
            ),
        ])
        traj = make_traj(rng, 3, 3)
    elif case == "thrust_rate":
        cs = penalty.ConstraintSet([
            penalty.ConstraintEntry("thrust", penalty.ThrustWindow(9.0, 10.5), 30.0),
            penalty.ConstraintEntry("rate", penalty.BodyRateLimit(0.5), 40.0),
        ])
        traj = make_traj(rng, 4, 3, scale=2.0)
    else:
        A = np.vstack([np.eye(3), -np.eye(3)])
        cs = penalty.ConstraintSet([
            penalty.ConstraintEntry(
                "ell",
                penalty.EllipsoidInPolytope(A, 0.3 * np.ones(6), [0.5, 0.5, 0.1]),
                25.0,
            )
        ])
        traj = make_traj(rng, 3, 3, scale=1.5)
    assert fd_worst(cs, traj, rng=rng) <= 1e-5


def test_quadrature_error_decays_quadratically():
    rng = np.random.default_rng(7)
    traj = make_traj(rng, 3, 3)

    def I_at(kappa):
        cs = penalty.ConstraintSet(
            [penalty.ConstraintEntry("speed", penalty.SpeedLimit(0.5), 10.0)],
            resolution=kappa,
        )
        return penalty.integrate_penalty(cs, traj)[0]

    ref = I_at(4096)
    errors = [abs(I_at(k) - ref) for k in (8, 16, 32)]
    assert errors[0] / errors[1] >= 3.5
    assert errors[1] / errors[2] >= 3.5


def test_penalty_is_c2_across_activation():
    # Slide a constant-position trajectory across the plane x <= 0: the
    # cubed hinge keeps the integral C^2 in the offset, so second
    # differences must be continuous through the crossing.
    s, M = 3, 2
    T = np.array([1.0, 1.0])

    def I_of(offset):
        bc = np.zeros((s, 3))
        bc[0] = [offset, 0.0, 0.0]
        traj = minco.construct(np.array([[offset, 0.0, 0.0]]), T, bc, bc, s)
        cs = penalty.ConstraintSet([
            penalty.ConstraintEntry(
                "plane", penalty.PolytopeContain([[1.0, 0.0, 0.0]], [0.0]), 1.0
            )
        ])
        return penalty.integrate_penalty(cs, traj)[0]

    h = 1e-3
    xs = np.linspace(-3 * h, 3 * h, 7)
    second = np.array([
        (I_of(x + h) - 2.0 * I_of(x) + I_of(x - h)) / h**2 for x in xs
    ])
    # I(x) = 2 x^3 for x > 0, 0 otherwise; d2I/dx2 = 12 max(x, 0).
    ref = 12.0 * np.maximum(xs, 0.0)
    assert np.max(np.abs(second - ref)) <= 1e-2


def test_piece_routing_restricts_entries():
    rng = np.random.default_rng(8)
    traj = make_traj(rng, 3, 3)
    limited = penalty.ConstraintSet([
        penalty.ConstraintEntry("speed", penalty.SpeedLimit(0.3), 7.0, pieces=[1])
    ])
    everywhere = penalty.ConstraintSet([
        penalty.ConstraintEntry("speed", penalty.SpeedLimit(0.3), 7.0)
    ])
    I_lim = penalty.integrate_penalty(limited, traj)[0]
    I_all = penalty.integrate_penalty(everywhere, traj)[0]
    assert 0.0 < I_lim < I_all
    # Restricting to one piece must equal summing that piece alone.
    single = minco.Trajectory(3, traj.durations[1:2], traj.coeffs[1:2])
    I_single = penalty.integrate_penalty(everywhere, single)[0]
    assert abs(I_lim - I_single) <= 1e-12 * max(1.0, I_single)


def test_max_violations_fresh_grid():
    rng = np.random.default_rng(9)
    traj = make_traj(rng, 3, 3)
    cs = penalty.ConstraintSet([
        penalty.ConstraintEntry("speed", penalty.SpeedLimit(0.5), 10.0),
        penalty.ConstraintEntry("huge", penalty.SpeedLimit(1e3), 10.0),
    ])
    worst = penalty.max_violations(cs, traj, factor=4)
    assert set(worst) == {"speed", "huge"}
    assert worst["speed"] > 0.0 > worst["huge"]
    # Denser sampling can only find worse (or equal) violations.
    assert penalty.max_violations(cs, traj, factor=8)["speed"] >= worst["speed"] - 1e-12


def test_per_piece_resolution_accepted():
    rng = np.random.default_rng(10)
    traj = make_traj(rng, 3, 3)
    cs = penalty.ConstraintSet(
        [penalty.ConstraintEntry("speed", penalty.SpeedLimit(0.5), 10.0)],
        resolution=np.array([8, 16, 32]),
    )
    I, dI_dc, dI_dT = penalty.integrate_penalty(cs, traj)
    assert np.isfinite(I) and I > 0.0


def test_parameter_validation():
    with pytest.raises(DimensionMismatch):
        penalty.ConstraintSet([], exponent=1)
    cs = penalty.ConstraintSet(
        [penalty.ConstraintEntry("speed", penalty.SpeedLimit(1.0), 1.0)],
        resolution=0,
    )
    rng = np.random.default_rng(11)
    traj = make_traj(rng, 3, 2)
    with pytest.raises(DimensionMismatch):
        penalty.integrate_penalty(cs, traj)
    bad = penalty.ConstraintSet(
        [penalty.ConstraintEntry("speed", penalty.SpeedLimit(1.0), 1.0,
                                 pieces=[5])]
    )
    with pytest.raises(DimensionMismatch):
        penalty.integrate_penalty(bad, traj)


def test_builtin_catalog_complete():
    cat = penalty.builtin_evaluators()
    assert set(cat) == {
        "speed", "accel", "polytope_contain", "ball_contain",
        "thrust_window", "body_rate", "ellipsoid_in_polytope",
    }
