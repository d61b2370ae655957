"""Second-order leader-follower tracking loop.

Agents are double integrators and no velocity is measured anywhere, so each
follower estimates four quantities besides the leader input: the leader's
velocity and disturbance (distributed observers) and its own velocity and
disturbance (local observers).  The input observer is the same adaptive
signum design as in the first-order loop.  All estimates are explicit
functions of the state; the fixed evaluation order is leader velocity,
leader disturbance, own velocity, own disturbance, then the controller.

Flat state layout (N followers):
``[x0 | v0 | x (N) | v (N) | u_hat0 (N) | d (N) | z_v0 (N) | z_f0 (N) | z_v (N) | z_f (N)]``
dimension ``2 + 8N``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .first_order import Gains, leader_injection, signum
from .graph import GraphMatrices
from .linalg import error_block_matrix
from .signals import SignalSpec


@dataclass(frozen=True)
class SecondOrderState:
    """Unpacked view of the flat second-order state vector."""

    x0: float
    v0: float
    x: np.ndarray
    v: np.ndarray
    u_hat0: np.ndarray
    d: np.ndarray
    z_v0: np.ndarray
    z_f0: np.ndarray
    z_v: np.ndarray
    z_f: np.ndarray

    @property
    def n(self) -> int:
        return self.x.shape[0]

    def pack(self) -> np.ndarray:
        return np.concatenate(([self.x0, self.v0], self.x, self.v, self.u_hat0,
                               self.d, self.z_v0, self.z_f0, self.z_v, self.z_f))

    @staticmethod
    def dim(n: int) -> int:
        return 2 + 8 * n

    @classmethod
    def unpack(cls, flat: np.ndarray, n: int) -> "SecondOrderState":
        flat = np.asarray(flat)
        if flat.shape != (cls.dim(n),):
            raise ValueError(f"expected a flat vector of length {cls.dim(n)}, got {flat.shape}")
        blocks = [flat[2 + i * n:2 + (i + 1) * n] for i in range(8)]
        return cls(float(flat[0]), float(flat[1]), *blocks)


def estimates(state: SecondOrderState, graph: GraphMatrices, gains: Gains):
    """All algebraic estimates, in the fixed evaluation order:

    v_hat0 = z_v0 + b x0;  f_hat0 = z_f0 + v_hat0;
    v_hat  = z_v + l x;    f_hat  = z_f + v_hat.
    Returns (v_hat0, f_hat0, v_hat, f_hat).
    """
    v_hat0 = state.z_v0 + leader_injection(graph, state.x0)
    f_hat0 = state.z_f0 + v_hat0
    v_hat = state.z_v + gains.l * state.x
    f_hat = state.z_f + v_hat
    return v_hat0, f_hat0, v_hat, f_hat


def controller(state: SecondOrderState, gains: Gains, graph: GraphMatrices) -> np.ndarray:
    """Position-consensus controller with velocity damping through estimates:

    u_i = -k [sum_j a_ij (x_i - x_j) + b_i (x_i - x0)]
          - (v_hat_i - v_hat0_i) + u_hat0_i + f_hat0_i - f_hat_i
    """
    v_hat0, f_hat0, v_hat, f_hat = estimates(state, graph, gains)
    coupling = graph.coupling @ state.x - leader_injection(graph, state.x0)
    return -gains.k * coupling - (v_hat - v_hat0) + state.u_hat0 + f_hat0 - f_hat


def input_observer_rhs(state: SecondOrderState, gains: Gains, graph: GraphMatrices,
                       u0: float, sgn_eps: float = 0.0):
    """The adaptive signum input observer, unchanged from the first-order loop."""
    s = graph.coupling @ state.u_hat0 - leader_injection(graph, u0)
    du_hat0 = -s - state.d * signum(s, sgn_eps)
    dd = gains.tau_vec * np.abs(s)
    return du_hat0, dd


def leader_velocity_observer_rhs(state: SecondOrderState, gains: Gains,
                                 graph: GraphMatrices, x0: float) -> np.ndarray:
    """d/dt z_v0_i = -b_i z_v0_i - b_i^2 x0 - sum_j a_ij (v_hat0_i - v_hat0_j)
    + f_hat0_i + u_hat0_i, with v_hat0_i = z_v0_i + b_i x0."""
    b = graph.b
    v_hat0, f_hat0, _, _ = estimates(state, graph, gains)
    return (-b * state.z_v0
            - leader_injection(graph, x0, scale=b)
            - graph.laplacian @ v_hat0
            + f_hat0 + state.u_hat0)


def leader_dist_observer_rhs(state: SecondOrderState, gains: Gains,
                             graph: GraphMatrices) -> np.ndarray:
    """d/dt z_f0_i = -z_f0_i - v_hat0_i - u_hat0_i, with f_hat0_i = z_f0_i + v_hat0_i."""
    v_hat0, _, _, _ = estimates(state, graph, gains)
    return -state.z_f0 - v_hat0 - state.u_hat0


def own_velocity_observer_rhs(state: SecondOrderState, gains: Gains,
                              u: np.ndarray) -> np.ndarray:
    """d/dt z_v_i = -l z_v_i - l^2 x_i + f_hat_i + u_i, with v_hat_i = z_v_i + l x_i."""
    l = gains.l
    v_hat = state.z_v + l * state.x
    f_hat = state.z_f + v_hat
    return -l * state.z_v - l * l * state.x + f_hat + u


def own_dist_observer_rhs(state: SecondOrderState, gains: Gains,
                          u: np.ndarray) -> np.ndarray:
    """d/dt z_f_i = -z_f_i - v_hat_i - u_i, with f_hat_i = z_f_i + v_hat_i."""
    v_hat = state.z_v + gains.l * state.x
    return -state.z_f - v_hat - u


def closed_loop_rhs(t: float, flat: np.ndarray, graph: GraphMatrices, gains: Gains,
                    u0_sig: SignalSpec, f0_sig: SignalSpec, f_sigs: tuple,
                    sgn_eps: float = 0.0) -> np.ndarray:
    """Full closed-loop derivative.  Only the kinematic rows read velocities;
    the controller and every observer work from positions and internal states.

    Formulas are inlined with the estimates and leader couplings computed
    once; the per-operation functions above are the reference, and a
    compositional-equality test holds the two together.
    """
    n = graph.n
    x0 = flat[0]
    v0 = flat[1]
    x = flat[2:2 + n]
    v = flat[2 + n:2 + 2 * n]
    u_hat0 = flat[2 + 2 * n:2 + 3 * n]
    d = flat[2 + 3 * n:2 + 4 * n]
    z_v0 = flat[2 + 4 * n:2 + 5 * n]
    z_f0 = flat[2 + 5 * n:2 + 6 * n]
    z_v = flat[2 + 6 * n:2 + 7 * n]
    z_f = flat[2 + 7 * n:2 + 8 * n]
    u0_val = u0_sig.value(t)
    f0_val = f0_sig.value(t)
    f_vals = np.array([sig.value(t) for sig in f_sigs])
    h = graph.coupling
    lap = graph.laplacian
    b = graph.b
    idx = graph.leader_idx
    l = gains.l

    inj_x0 = np.zeros(n)
    inj_u0 = np.zeros(n)
    inj_bx0 = np.zeros(n)
    if idx.size:
        bi = b[idx]
        inj_x0[idx] = bi * x0
        inj_u0[idx] = bi * u0_val
        inj_bx0[idx] = bi * bi * x0

    v_hat0 = z_v0 + inj_x0
    f_hat0 = z_f0 + v_hat0
    v_hat = z_v + l * x
    f_hat = z_f + v_hat
    u = -gains.k * (h @ x - inj_x0) - (v_hat - v_hat0) + u_hat0 + f_hat0 - f_hat
    s = h @ u_hat0 - inj_u0

    out = np.empty(2 + 8 * n)
    out[0] = v0
    out[1] = u0_val + f0_val
    out[2:2 + n] = v
    out[2 + n:2 + 2 * n] = u + f_vals
    out[2 + 2 * n:2 + 3 * n] = -s - d * signum(s, sgn_eps)
    out[2 + 3 * n:2 + 4 * n] = gains.tau_vec * np.abs(s)
    out[2 + 4 * n:2 + 5 * n] = -b * z_v0 - inj_bx0 - lap @ v_hat0 + f_hat0 + u_hat0
    out[2 + 5 * n:2 + 6 * n] = -z_f0 - v_hat0 - u_hat0
    out[2 + 6 * n:2 + 7 * n] = -l * z_v - l * l * x + f_hat + u
    out[2 + 7 * n:2 + 8 * n] = -z_f - v_hat - u
    return out


def make_closed_loop_rhs(graph: GraphMatrices, gains: Gains, u0_sig: SignalSpec,
                         f0_sig: SignalSpec, f_sigs: tuple, sgn_eps: float = 0.0):
    def rhs(t, y):
        return closed_loop_rhs(t, y, graph, gains, u0_sig, f0_sig, f_sigs, sgn_eps)

    return rhs


def extract_errors(state: SecondOrderState, graph: GraphMatrices, gains: Gains,
                   u0_val: float, v0_val: float, f0_val: float, f_vals: np.ndarray):
    """True errors: returns (e_u, e_0vf, e_vf, e) with the stacked blocks
    e_0vf = [v_hat0 - v0; f_hat0 - f0], e_vf = [v_hat - v; f_hat - f],
    e = [x - x0; v - v0]."""
    v_hat0, f_hat0, v_hat, f_hat = estimates(state, graph, gains)
    e_u = state.u_hat0 - u0_val
    e_0vf = np.concatenate([v_hat0 - v0_val, f_hat0 - f0_val])
    e_vf = np.concatenate([v_hat - state.v, f_hat - f_vals])
    e = np.concatenate([state.x - state.x0, state.v - state.v0])
    return e_u, e_0vf, e_vf, e


def error_oracle_rhs(e_0vf: np.ndarray, e_vf: np.ndarray, e: np.ndarray,
                     e_u: np.ndarray, graph: GraphMatrices, gains: Gains,
                     df0: float, df: np.ndarray):
    """Block-linear error dynamics of the second-order loop:

    d/dt e_0vf = A1 e_0vf + [e_u; -df0 * 1]      A1 = [[-H, I], [-H, 0]]
    d/dt e_vf  = A2 e_vf  + [0; -df]             A2 = [[-lI, I], [-lI, 0]]
    d/dt e     = A3 e     + [0; -e_v + e_0v + e_0f - e_f + e_u]
                                                 A3 = [[0, I], [-kH, -I]]

    ``e_u`` is an exogenous feed (the input-observer error has its own
    dynamics, shared with the first-order loop).
    """
    n = graph.n
    a1 = error_block_matrix("leader_est", graph.coupling)
    a2 = error_block_matrix("local_est", graph.coupling, l=gains.l)
    a3 = error_block_matrix("tracking", graph.coupling, k=gains.k)
    return _oracle_apply(a1, a2, a3, e_0vf, e_vf, e, e_u, n, df0, df)


def _oracle_apply(a1, a2, a3, e_0vf, e_vf, e, e_u, n, df0, df):
    l1 = np.concatenate([e_u, np.full(n, -df0)])
    l2 = np.concatenate([np.zeros(n), -df])
    e_0v, e_0f = e_0vf[:n], e_0vf[n:]
    e_v, e_f = e_vf[:n], e_vf[n:]
    l3 = np.concatenate([np.zeros(n), -e_v + e_0v + e_0f - e_f + e_u])
    de_0vf = a1 @ e_0vf + l1
    de_vf = a2 @ e_vf + l2
    de = a3 @ e + l3
    return de_0vf, de_vf, de


# Augmented twin integration.  Layout:
# [closed (2+8N) | w (N) | e_0vf (2N) | e_vf (2N) | e (2N)].
# The oracle's linear blocks are fed the closed loop's input-estimate error
# (extracted at the same stage).  The separate input twin integrates the
# signum error dynamics with the closed loop's adaptive gains, carried as
# w = e_u + u0(t) so both trajectories face the same switching geometry
# (see the first-order module for why the raw error form decorrelates).

def augmented_dim(n: int) -> int:
    return SecondOrderState.dim(n) + 7 * n


def make_augmented_rhs(graph: GraphMatrices, gains: Gains, u0_sig: SignalSpec,
                       f0_sig: SignalSpec, f_sigs: tuple, sgn_eps: float = 0.0):
    n = graph.n
    base = SecondOrderState.dim(n)
    h = graph.coupling
    a1 = error_block_matrix("leader_est", h)
    a2 = error_block_matrix("local_est", h, l=gains.l)
    a3 = error_block_matrix("tracking", h, k=gains.k)

    def rhs(t, y):
        out = np.empty(augmented_dim(n))
        out[:base] = closed_loop_rhs(t, y[:base], graph, gains, u0_sig, f0_sig, f_sigs, sgn_eps)
        u0_val = u0_sig.value(t)
        e_u_oracle = y[base:base + n] - u0_val
        e_0vf = y[base + n:base + 3 * n]
        e_vf = y[base + 3 * n:base + 5 * n]
        e = y[base + 5 * n:base + 7 * n]
        # closed-loop feeds: adaptive gains and input-estimate error
        d_closed = y[2 + 3 * n:2 + 4 * n]
        e_u_closed = y[2 + 2 * n:2 + 3 * n] - u0_val
        s = h @ e_u_oracle
        out[base:base + n] = -s - d_closed * signum(s, sgn_eps)  # dw = de_u + du0
        df = np.array([sig.derivative(t) for sig in f_sigs])
        de_0vf, de_vf, de = _oracle_apply(a1, a2, a3, e_0vf, e_vf, e, e_u_closed,
                                          n, f0_sig.derivative(t), df)
        out[base + n:base + 3 * n] = de_0vf
        out[base + 3 * n:base + 5 * n] = de_vf
        out[base + 5 * n:base + 7 * n] = de
        return out

    return rhs


def augmented_initial(closed_init: np.ndarray, graph: GraphMatrices, gains: Gains,
                      u0_sig: SignalSpec, f0_sig: SignalSpec, f_sigs: tuple,
                      t0: float = 0.0) -> np.ndarray:
    n = graph.n
    state = SecondOrderState.unpack(np.asarray(closed_init, dtype=float), n)
    f_vals = np.array([sig.value(t0) for sig in f_sigs])
    e_u, e_0vf, e_vf, e = extract_errors(state, graph, gains, u0_sig.value(t0),
                                         state.v0, f0_sig.value(t0), f_vals)
    w = e_u + u0_sig.value(t0)
    return np.concatenate([np.asarray(closed_init, dtype=float), w, e_0vf, e_vf, e])


def trace_columns(n: int) -> tuple:
    """Fixed derived-column layout of a second-order run (t excluded)."""
    cols = ["x0", "v0"]
    cols += [f"x_{i}" for i in range(1, n + 1)]
    cols += [f"v_{i}" for i in range(1, n + 1)]
    cols += [f"uhat0_{i}" for i in range(1, n + 1)]
    cols += [f"d_{i}" for i in range(1, n + 1)]
    cols += [f"fhat0_{i}" for i in range(1, n + 1)]
    cols += [f"fhat_{i}" for i in range(1, n + 1)]
    cols += [f"vhat0_{i}" for i in range(1, n + 1)]
    cols += [f"vhat_{i}" for i in range(1, n + 1)]
    cols += [f"u_{i}" for i in range(1, n + 1)]
    cols += ["err_pos_norm", "err_vel_norm", "err_u_norm", "err_f0_norm", "err_f_norm"]
    return tuple(cols)


def make_recorder(graph: GraphMatrices, gains: Gains, u0_sig: SignalSpec,
                  f0_sig: SignalSpec, f_sigs: tuple):
    n = graph.n
    base = SecondOrderState.dim(n)

    def record(t, y):
        state = SecondOrderState.unpack(y[:base], n)
        u0_val = u0_sig.value(t)
        f0_val = f0_sig.value(t)
        f_vals = np.array([sig.value(t) for sig in f_sigs])
        v_hat0, f_hat0, v_hat, f_hat = estimates(state, graph, gains)
        u = controller(state, gains, graph)
        e_pos = state.x - state.x0
        e_vel = state.v - state.v0
        e_u = state.u_hat0 - u0_val
        e_0f = f_hat0 - f0_val
        e_f = f_hat - f_vals
        return np.concatenate([
            [state.x0, state.v0], state.x, state.v, state.u_hat0, state.d,
            f_hat0, f_hat, v_hat0, v_hat, u,
            [np.linalg.norm(e_pos), np.linalg.norm(e_vel), np.linalg.norm(e_u),
             np.linalg.norm(e_0f), np.linalg.norm(e_f)],
        ])

    return record


ORACLE_DIFF_COLUMNS = ("diff_e_u", "diff_e_0vf", "diff_e_vf", "diff_e")


def make_oracle_recorder(graph: GraphMatrices, gains: Gains, u0_sig: SignalSpec,
                         f0_sig: SignalSpec, f_sigs: tuple):
    n = graph.n
    base = SecondOrderState.dim(n)
    closed_recorder = make_recorder(graph, gains, u0_sig, f0_sig, f_sigs)

    def record(t, y):
        state = SecondOrderState.unpack(y[:base], n)
        f_vals = np.array([sig.value(t) for sig in f_sigs])
        u0_val = u0_sig.value(t)
        e_u, e_0vf, e_vf, e = extract_errors(state, graph, gains, u0_val,
                                             state.v0, f0_sig.value(t), f_vals)
        diffs = [
            np.abs(e_u - (y[base:base + n] - u0_val)).max(),
            np.abs(e_0vf - y[base + n:base + 3 * n]).max(),
            np.abs(e_vf - y[base + 3 * n:base + 5 * n]).max(),
            np.abs(e - y[base + 5 * n:base + 7 * n]).max(),
        ]
        return np.concatenate([closed_recorder(t, y), diffs])

    return record
