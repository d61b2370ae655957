import numpy as np
import pytest

from mas_track import second_order as so
from mas_track.first_order import Gains
from mas_track.graph import Topology, build_matrices
from mas_track.integrator import IntegrationConfig, integrate
from mas_track.io_cli import initial_state, load_scenario, resolve_config
from mas_track.signals import constant

RING_X = np.array([3.0, 0.0, -2.0, 1.0, -1.0])
RING_V = np.array([1.0, -2.0, 3.0, 0.0, -1.0])


@pytest.fixture(scope="module")
def ring():
    sc = load_scenario(resolve_config("ring5_second_order.json"))
    return sc, build_matrices(sc.topology)


def zero_state(n, **overrides):
    fields = dict(x0=0.0, v0=0.0, x=np.zeros(n), v=np.zeros(n), u_hat0=np.zeros(n),
                  d=np.zeros(n), z_v0=np.zeros(n), z_f0=np.zeros(n),
                  z_v=np.zeros(n), z_f=np.zeros(n))
    fields.update(overrides)
    return so.SecondOrderState(**fields)


def single_agent(b=1.0):
    links = {1: b} if b else {}
    return build_matrices(Topology(n_followers=1, leader_links=links))


def test_state_pack_unpack_round_trip():
    rng = np.random.default_rng(1)
    flat = rng.normal(size=so.SecondOrderState.dim(5))
    state = so.SecondOrderState.unpack(flat, 5)
    assert np.array_equal(state.pack(), flat)
    assert so.SecondOrderState.dim(5) == 42


def test_estimates_are_pure_functions_of_state(ring):
    sc, graph = ring
    rng = np.random.default_rng(2)
    state = so.SecondOrderState.unpack(rng.normal(size=42), 5)
    first = so.estimates(state, graph, sc.gains)
    second = so.estimates(state, graph, sc.gains)
    for a, b in zip(first, second):
        assert np.array_equal(a, b)


def test_estimates_evaluation_order(ring):
    sc, graph = ring
    rng = np.random.default_rng(3)
    state = so.SecondOrderState.unpack(rng.normal(size=42), 5)
    v_hat0, f_hat0, v_hat, f_hat = so.estimates(state, graph, sc.gains)
    inj = np.zeros(5)
    inj[graph.leader_idx] = graph.b[graph.leader_idx] * state.x0
    assert np.array_equal(v_hat0, state.z_v0 + inj)
    assert np.array_equal(f_hat0, state.z_f0 + v_hat0)
    assert np.array_equal(v_hat, state.z_v + sc.gains.l * state.x)
    assert np.array_equal(f_hat, state.z_f + v_hat)


def test_controller_zero_state(ring):
    sc, graph = ring
    assert np.array_equal(so.controller(zero_state(5), sc.gains, graph), np.zeros(5))


def test_controller_velocity_damping_isolated(ring):
    # consensus positions at zero; v_hat - v_hat0 = 1 with all other estimates zero
    sc, graph = ring
    state = zero_state(5, z_v=np.ones(5), z_f=-np.ones(5))
    u = so.controller(state, sc.gains, graph)
    assert np.allclose(u, -1.0, atol=1e-15)


def test_controller_ring_hand_values(ring):
    # zero observers, x = (3,0,-2,1,-1), x0 = 0: the velocity estimate
    # v_hat = l x and the local disturbance estimate f_hat = v_hat add -2 x_i
    # to the -k coupling term; follower 1 lands at -11
    sc, graph = ring
    state = zero_state(5, x=RING_X.copy())
    u = so.controller(state, sc.gains, graph)
    assert np.allclose(u, [-11.0, 0.5, 6.5, -4.5, 5.0], atol=1e-14)
    assert u[0] == pytest.approx(-11.0, abs=0.0)


def test_leader_velocity_observer_scalar_hand_value():
    graph = single_agent()
    gains = Gains(k=1.0, l=1.0, tau=(1.0,))
    # v_hat0 = z_v0 + b x0 = 3, f_hat0 = z_f0 + v_hat0 = 0, u_hat0 = 0.5
    state = zero_state(1, x0=1.0, z_v0=np.array([2.0]), z_f0=np.array([-3.0]),
                       u_hat0=np.array([0.5]))
    dz = so.leader_velocity_observer_rhs(state, gains, graph, x0=state.x0)
    assert dz[0] == pytest.approx(-2.5, abs=0.0)


def test_leader_velocity_observer_zero_unlinked():
    graph = single_agent(b=0.0)
    gains = Gains(k=1.0, l=1.0, tau=(1.0,))
    dz = so.leader_velocity_observer_rhs(zero_state(1), gains, graph, x0=123.0)
    assert dz[0] == 0.0


def test_leader_dist_observer_scalar_hand_value():
    graph = single_agent(b=0.0)
    gains = Gains(k=1.0, l=1.0, tau=(1.0,))
    # v_hat0 = z_v0 = 2 (no leader link), z_f0 = 1, u_hat0 = 3 -> dz = -6
    state = zero_state(1, z_v0=np.array([2.0]), z_f0=np.array([1.0]), u_hat0=np.array([3.0]))
    dz = so.leader_dist_observer_rhs(state, gains, graph)
    assert dz[0] == pytest.approx(-6.0, abs=0.0)


def test_own_velocity_observer_scalar_hand_value():
    graph = single_agent()
    gains = Gains(k=1.0, l=1.0, tau=(1.0,))
    # v_hat = z_v + l x = 3, f_hat = z_f + v_hat = 0.5
    state = zero_state(1, x=np.array([2.0]), z_v=np.array([1.0]), z_f=np.array([-2.5]))
    dz = so.own_velocity_observer_rhs(state, gains, u=np.array([1.0]))
    assert dz[0] == pytest.approx(-1.5, abs=0.0)


def test_own_dist_observer_scalar_hand_value():
    graph = single_agent()
    gains = Gains(k=1.0, l=1.0, tau=(1.0,))
    # v_hat = z_v = 2 (x = 0), z_f = 1, u = -3 -> dz = -1 - 2 + 3 = 0
    state = zero_state(1, z_v=np.array([2.0]), z_f=np.array([1.0]))
    dz = so.own_dist_observer_rhs(state, gains, u=np.array([-3.0]))
    assert dz[0] == pytest.approx(0.0, abs=0.0)


def test_closed_loop_rhs_global_equilibrium():
    graph = build_matrices(Topology(
        n_followers=2, follower_edges=((1, 2, 1.0),), leader_links={2: 1.0}))
    gains = Gains(k=0.5, l=1.0, tau=(1.0, 1.0))
    zero_sig = constant(0.0)
    out = so.closed_loop_rhs(0.0, np.zeros(so.SecondOrderState.dim(2)), graph, gains,
                             zero_sig, zero_sig, (zero_sig, zero_sig))
    assert np.array_equal(out, np.zeros_like(out))


def test_closed_loop_rhs_leader_acceleration(ring):
    sc, graph = ring
    flat = initial_state(sc)
    out = so.closed_loop_rhs(0.0, flat, graph, sc.gains, sc.u0, sc.f0, sc.f)
    assert out[1] == pytest.approx(-3.0, abs=0.0)
    assert out[0] == 0.0  # leader position derivative is its velocity


def test_closed_loop_matches_op_composition(ring):
    sc, graph = ring
    rng = np.random.default_rng(4)
    for _ in range(25):
        flat = rng.normal(size=so.SecondOrderState.dim(5))
        t = float(rng.uniform(0.0, 20.0))
        inline = so.closed_loop_rhs(t, flat, graph, sc.gains, sc.u0, sc.f0, sc.f)
        state = so.SecondOrderState.unpack(flat, 5)
        u0v, f0v = sc.u0.value(t), sc.f0.value(t)
        f_vals = np.array([s.value(t) for s in sc.f])
        u = so.controller(state, sc.gains, graph)
        du, dd = so.input_observer_rhs(state, sc.gains, graph, u0v)
        composed = np.concatenate([
            [state.v0, u0v + f0v], state.v, u + f_vals, du, dd,
            so.leader_velocity_observer_rhs(state, sc.gains, graph, state.x0),
            so.leader_dist_observer_rhs(state, sc.gains, graph),
            so.own_velocity_observer_rhs(state, sc.gains, u),
            so.own_dist_observer_rhs(state, sc.gains, u),
        ])
        assert np.array_equal(inline, composed)


def test_error_oracle_rhs_zeros(ring):
    sc, graph = ring
    z2 = np.zeros(10)
    z1 = np.zeros(5)
    de_0vf, de_vf, de = so.error_oracle_rhs(z2, z2, z2, z1, graph, sc.gains, 0.0, z1)
    assert np.array_equal(de_0vf, z2)
    assert np.array_equal(de_vf, z2)
    assert np.array_equal(de, z2)


def test_no_velocity_measurements_in_controller_or_observers(ring):
    # controller and observers must never read v or v0: poisoning them with
    # NaN leaves every non-kinematic derivative finite
    sc, graph = ring
    rng = np.random.default_rng(5)
    flat = rng.normal(size=so.SecondOrderState.dim(5))
    flat[1] = float("nan")        # v0
    flat[2 + 5:2 + 10] = float("nan")  # v block
    out = so.closed_loop_rhs(0.0, flat, graph, sc.gains, sc.u0, sc.f0, sc.f)
    nan_actual = set(np.flatnonzero(~np.isfinite(out)).tolist())
    # only the kinematic rows dx0 = v0 and dx_i = v_i may carry the NaN
    assert nan_actual == {0, 2, 3, 4, 5, 6}


def test_observer_error_dynamics_by_finite_differences(ring):
    # the simulated estimate errors obey the stacked error blocks:
    #   de_0v = -(H e_0v) + e_u + e_0f,  de_v = -l e_v + e_f,  de_f = -l e_v - df
    # checked by central differences on a fine-step run
    sc, graph = ring
    dt = 1e-4
    rhs = so.make_closed_loop_rhs(graph, sc.gains, sc.u0, sc.f0, sc.f)
    cfg = IntegrationConfig(t_end=1.0, dt=dt, record_stride=1)
    trace = integrate(rhs, initial_state(sc), cfg)

    n = 5
    states = trace.states
    times = trace.times
    x0 = states[:, 0]
    v0 = states[:, 1]
    x = states[:, 2:7]
    v = states[:, 7:12]
    u_hat0 = states[:, 12:17]
    z_v0 = states[:, 22:27]
    z_f0 = states[:, 27:32]
    z_v = states[:, 32:37]
    z_f = states[:, 37:42]
    b = graph.b
    u0_vals = np.array([sc.u0.value(t) for t in times])
    f0_vals = np.array([sc.f0.value(t) for t in times])
    f_vals = np.array([[sig.value(t) for sig in sc.f] for t in times])
    df_vals = np.array([[sig.derivative(t) for sig in sc.f] for t in times])

    v_hat0 = z_v0 + b * x0[:, None]
    f_hat0 = z_f0 + v_hat0
    v_hat = z_v + sc.gains.l * x
    f_hat = z_f + v_hat
    e_u = u_hat0 - u0_vals[:, None]
    e_0v = v_hat0 - v0[:, None]
    e_0f = f_hat0 - f0_vals[:, None]
    e_v = v_hat - v
    e_f = f_hat - f_vals

    # skip windows near a signum switching surface of the input observer:
    # a flip (or double crossing) inside the window kinks the higher
    # derivatives that bound the central-difference error
    h = graph.coupling
    s = e_u @ h.T  # switching function equals H e_u
    stable = [i for i in np.arange(100, len(times) - 100, 197)
              if np.array_equal(np.sign(s[i - 2]), np.sign(s[i + 2]))
              and np.array_equal(np.sign(s[i - 1]), np.sign(s[i + 1]))
              and np.abs(s[i - 2:i + 3]).min() > 0.02]
    assert len(stable) >= 20
    l = sc.gains.l
    checked = 0
    for i in stable:
        fd = lambda series: (series[i + 1] - series[i - 1]) / (2 * dt)
        assert np.abs(fd(e_0v) - (-(h @ e_0v[i]) + e_u[i] + e_0f[i])).max() <= 1e-6
        assert np.abs(fd(e_0f) - (-(h @ e_0v[i]) - sc.f0.derivative(times[i]))).max() <= 1e-6
        assert np.abs(fd(e_v) - (-l * e_v[i] + e_f[i])).max() <= 1e-6
        assert np.abs(fd(e_f) - (-l * e_v[i] - df_vals[i])).max() <= 1e-6
        checked += 1
    assert checked == len(stable)


def test_tracking_error_dynamics_by_finite_differences(ring):
    # d/dt [e_pos; e_vel] = [[0, I], [-kH, -I]] [e_pos; e_vel]
    #                       + [0; -e_v + e_0v + e_0f - e_f + e_u]
    sc, graph = ring
    dt = 1e-4
    rhs = so.make_closed_loop_rhs(graph, sc.gains, sc.u0, sc.f0, sc.f)
    cfg = IntegrationConfig(t_end=0.5, dt=dt, record_stride=1)
    trace = integrate(rhs, initial_state(sc), cfg)
    states, times = trace.states, trace.times
    e_pos = states[:, 2:7] - states[:, 0:1]
    e_vel = states[:, 7:12] - states[:, 1:2]
    h = graph.coupling
    k, l = sc.gains.k, sc.gains.l
    b = graph.b
    u0_vals = np.array([sc.u0.value(t) for t in times])
    s_all = (states[:, 12:17] - u0_vals[:, None]) @ h.T
    for i in range(50, len(times) - 50, 83):
        if not (np.array_equal(np.sign(s_all[i - 2]), np.sign(s_all[i + 2]))
                and np.array_equal(np.sign(s_all[i - 1]), np.sign(s_all[i + 1]))
                and np.abs(s_all[i - 2:i + 3]).min() > 0.02):
            continue
        t = times[i]
        x0, v0 = states[i, 0], states[i, 1]
        u0v, f0v = sc.u0.value(t), sc.f0.value(t)
        fvals = np.array([sig.value(t) for sig in sc.f])
        v_hat0 = states[i, 22:27] + b * x0
        f_hat0 = states[i, 27:32] + v_hat0
        v_hat = states[i, 32:37] + l * states[i, 2:7]
        f_hat = states[i, 37:42] + v_hat
        drive = (-(v_hat - states[i, 7:12]) + (v_hat0 - v0) + (f_hat0 - f0v)
                 - (f_hat - fvals) + (states[i, 12:17] - u0v))
        fd_pos = (e_pos[i + 1] - e_pos[i - 1]) / (2 * dt)
        fd_vel = (e_vel[i + 1] - e_vel[i - 1]) / (2 * dt)
        assert np.abs(fd_pos - e_vel[i]).max() <= 1e-6
        assert np.abs(fd_vel - (-k * (h @ e_pos[i]) - e_vel[i] + drive)).max() <= 1e-6
