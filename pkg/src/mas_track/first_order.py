"""First-order leader-follower tracking loop.

Each agent is a single integrator driven by its input plus an unknown
disturbance.  A follower runs three estimators alongside the consensus
controller: an adaptive signum observer for the leader's input (its switching
gain grows with the consensus residual, so no rate bound needs to be known), a
distributed observer for the leader's disturbance, and a local observer for
its own disturbance.  Leader data (position, input) enters a follower's
equations only through its leader-link weight; the implementation computes
those couplings on linked followers only, so an unlinked follower never touches
leader values.

Flat state layout (N followers): ``[x0 | x (N) | u_hat0 (N) | d (N) | z_f0 (N) | z_f (N)]``
dimension ``1 + 5N``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import GraphMatrices
from .signals import SignalSpec


@dataclass(frozen=True)
class Gains:
    """Control gain k, disturbance/velocity observer gain l, and the
    per-follower adaptation rates tau of the input observer."""

    k: float
    l: float
    tau: tuple

    def __post_init__(self):
        if not (np.isfinite(self.k) and self.k > 0):
            raise ValueError(f"k: must be finite and > 0, got {self.k!r}")
        if not (np.isfinite(self.l) and self.l > 0):
            raise ValueError(f"l: must be finite and > 0, got {self.l!r}")
        tau = tuple(float(t) for t in self.tau)
        if not tau or any(not (np.isfinite(t) and t > 0) for t in tau):
            raise ValueError(f"tau: all adaptation rates must be finite and > 0, got {self.tau!r}")
        object.__setattr__(self, "tau", tau)

    @property
    def tau_vec(self) -> np.ndarray:
        return np.asarray(self.tau)


def signum(s: np.ndarray, eps: float = 0.0) -> np.ndarray:
    """Exact signum with sgn(0) = 0, or the boundary layer s/(|s|+eps)."""
    if eps:
        return s / (np.abs(s) + eps)
    return np.sign(s)


def leader_injection(graph: GraphMatrices, value: float, scale: np.ndarray = None) -> np.ndarray:
    """Vector whose i-th entry is b_i * value (times ``scale_i`` when given),
    computed only on leader-linked followers.  Followers without a leader link
    never read ``value``, which keeps the distributed information constraint
    auditable (a NaN placed in leader data cannot leak into their entries)."""
    out = np.zeros(graph.n)
    idx = graph.leader_idx
    if idx.size:
        if scale is None:
            out[idx] = graph.b[idx] * value
        else:
            out[idx] = graph.b[idx] * scale[idx] * value
    return out


@dataclass(frozen=True)
class FirstOrderState:
    """Unpacked view of the flat first-order state vector."""

    x0: float
    x: np.ndarray
    u_hat0: np.ndarray
    d: np.ndarray
    z_f0: np.ndarray
    z_f: np.ndarray

    @property
    def n(self) -> int:
        return self.x.shape[0]

    def pack(self) -> np.ndarray:
        return np.concatenate(([self.x0], self.x, self.u_hat0, self.d, self.z_f0, self.z_f))

    @staticmethod
    def dim(n: int) -> int:
        return 1 + 5 * n

    @classmethod
    def unpack(cls, flat: np.ndarray, n: int) -> "FirstOrderState":
        flat = np.asarray(flat)
        if flat.shape != (cls.dim(n),):
            raise ValueError(f"expected a flat vector of length {cls.dim(n)}, got {flat.shape}")
        return cls(
            x0=float(flat[0]),
            x=flat[1:1 + n],
            u_hat0=flat[1 + n:1 + 2 * n],
            d=flat[1 + 2 * n:1 + 3 * n],
            z_f0=flat[1 + 3 * n:1 + 4 * n],
            z_f=flat[1 + 4 * n:1 + 5 * n],
        )


def leader_dist_estimate(state: FirstOrderState, graph: GraphMatrices) -> np.ndarray:
    """f_hat0 = z_f0 + b * x0 (algebraic, leader data on linked followers only)."""
    return state.z_f0 + leader_injection(graph, state.x0)


def local_dist_estimate(state: FirstOrderState, gains: Gains) -> np.ndarray:
    """f_hat = z_f + l * x (algebraic)."""
    return state.z_f + gains.l * state.x


def controller(state: FirstOrderState, gains: Gains, graph: GraphMatrices) -> np.ndarray:
    """Consensus tracking controller with estimate feedforward:

    u_i = -k [sum_j a_ij (x_i - x_j) + b_i (x_i - x0)] + u_hat0_i + f_hat0_i - f_hat_i
    """
    coupling = graph.coupling @ state.x - leader_injection(graph, state.x0)
    f_hat0 = leader_dist_estimate(state, graph)
    f_hat = local_dist_estimate(state, gains)
    return -gains.k * coupling + state.u_hat0 + f_hat0 - f_hat


def input_observer_rhs(state: FirstOrderState, gains: Gains, graph: GraphMatrices,
                       u0: float, sgn_eps: float = 0.0):
    """Adaptive signum observer for the leader input.

    s_i = sum_j a_ij (u_hat0_i - u_hat0_j) + b_i (u_hat0_i - u0)
    d/dt u_hat0_i = -s_i - d_i * sgn(s_i),   d/dt d_i = tau_i |s_i|
    """
    s = graph.coupling @ state.u_hat0 - leader_injection(graph, u0)
    du_hat0 = -s - state.d * signum(s, sgn_eps)
    dd = gains.tau_vec * np.abs(s)
    return du_hat0, dd


def leader_dist_observer_rhs(state: FirstOrderState, graph: GraphMatrices,
                             u0: float, x0: float) -> np.ndarray:
    """Distributed observer for the leader's disturbance:

    d/dt z_f0_i = -b_i z_f0_i - b_i^2 x0 - sum_j a_ij (f_hat0_i - f_hat0_j) - b_i u0
    with f_hat0_i = z_f0_i + b_i x0.
    """
    b = graph.b
    f_hat0 = state.z_f0 + leader_injection(graph, x0)
    return (-b * state.z_f0
            - leader_injection(graph, x0, scale=b)
            - graph.laplacian @ f_hat0
            - leader_injection(graph, u0))


def local_dist_observer_rhs(state: FirstOrderState, gains: Gains, u: np.ndarray) -> np.ndarray:
    """Local disturbance observer: d/dt z_f_i = -l z_f_i - l^2 x_i - l u_i,
    with f_hat_i = z_f_i + l x_i, so the estimate error obeys
    d/dt e_f = -l e_f - df/dt."""
    l = gains.l
    return -l * state.z_f - l * l * state.x - l * u


def closed_loop_rhs(t: float, flat: np.ndarray, graph: GraphMatrices, gains: Gains,
                    u0_sig: SignalSpec, f0_sig: SignalSpec, f_sigs: tuple,
                    sgn_eps: float = 0.0) -> np.ndarray:
    """Full closed-loop derivative: leader kinematics, follower kinematics under
    the controller, and all observer internals.  Evaluation order: algebraic
    estimates, controller, observer derivatives.

    The formulas are inlined (estimates and leader couplings computed once);
    the per-operation functions above are the reference, and the two are held
    together by a compositional-equality test.
    """
    n = graph.n
    x0 = flat[0]
    x = flat[1:1 + n]
    u_hat0 = flat[1 + n:1 + 2 * n]
    d = flat[1 + 2 * n:1 + 3 * n]
    z_f0 = flat[1 + 3 * n:1 + 4 * n]
    z_f = flat[1 + 4 * n:1 + 5 * n]
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

    f_hat0 = z_f0 + inj_x0
    f_hat = z_f + l * x
    u = -gains.k * (h @ x - inj_x0) + u_hat0 + f_hat0 - f_hat
    s = h @ u_hat0 - inj_u0

    out = np.empty(1 + 5 * n)
    out[0] = u0_val + f0_val
    out[1:1 + n] = u + f_vals
    out[1 + n:1 + 2 * n] = -s - d * signum(s, sgn_eps)
    out[1 + 2 * n:1 + 3 * n] = gains.tau_vec * np.abs(s)
    out[1 + 3 * n:1 + 4 * n] = -b * z_f0 - inj_bx0 - lap @ f_hat0 - inj_u0
    out[1 + 4 * n:1 + 5 * n] = -l * z_f - l * l * x - l * u
    return out


def make_closed_loop_rhs(graph: GraphMatrices, gains: Gains, u0_sig: SignalSpec,
                         f0_sig: SignalSpec, f_sigs: tuple, sgn_eps: float = 0.0):
    """Bind scenario data into an ``rhs(t, y)`` suitable for the integrator."""

    def rhs(t, y):
        return closed_loop_rhs(t, y, graph, gains, u0_sig, f0_sig, f_sigs, sgn_eps)

    return rhs


def extract_errors(state: FirstOrderState, graph: GraphMatrices, gains: Gains,
                   u0_val: float, f0_val: float, f_vals: np.ndarray):
    """True estimation and tracking errors (requires the true signal values):
    returns (e_u, e_0f, e_f, e)."""
    e_u = state.u_hat0 - u0_val
    e_0f = leader_dist_estimate(state, graph) - f0_val
    e_f = local_dist_estimate(state, gains) - f_vals
    e = state.x - state.x0
    return e_u, e_0f, e_f, e


def error_oracle_rhs(e_u: np.ndarray, e_0f: np.ndarray, e_f: np.ndarray, e: np.ndarray,
                     d: np.ndarray, graph: GraphMatrices, gains: Gains,
                     du0: float, df0: float, df: np.ndarray, sgn_eps: float = 0.0):
    """Error dynamics of the closed loop, written directly in matrix form:

    de_u  = -H e_u - D sgn(H e_u) - du0 * 1
    de_0f = -H e_0f - df0 * 1
    de_f  = -l e_f - df
    de    = -k H e + e_0f + e_u - e_f

    ``d`` supplies the current adaptive gains (diagonal of D).
    """
    h = graph.coupling
    s = h @ e_u
    de_u = -s - d * signum(s, sgn_eps) - du0
    de_0f = -(h @ e_0f) - df0
    de_f = -gains.l * e_f - df
    de = -gains.k * (h @ e) + e_0f + e_u - e_f
    return de_u, de_0f, de_f, de


# Augmented twin integration: the oracle error blocks ride along with the
# closed loop in one state vector, so they see the closed loop's adaptive
# gains at the exact same integration stage (no resampling).  Layout:
# [closed (1+5N) | w (N) | e_0f (N) | e_f (N) | e (N)].
#
# The input-estimate twin is carried as w = e_u + u0(t) and the error is
# extracted with the exact signal value at every stage, which realizes the
# -du0/dt term of the e_u dynamics without integration error.  Integrating
# the error form directly would face a switching geometry offset by the
# O(dt^2) stage curvature of u0; near the surface that flips individual
# signum decisions and kicks the twins apart by O(d dt) even though both
# integrations are correct, drowning the comparison in chattering noise.

def augmented_dim(n: int) -> int:
    return FirstOrderState.dim(n) + 4 * n


def make_augmented_rhs(graph: GraphMatrices, gains: Gains, u0_sig: SignalSpec,
                       f0_sig: SignalSpec, f_sigs: tuple, sgn_eps: float = 0.0):
    n = graph.n
    base = FirstOrderState.dim(n)
    h = graph.coupling

    def rhs(t, y):
        out = np.empty(augmented_dim(n))
        out[:base] = closed_loop_rhs(t, y[:base], graph, gains, u0_sig, f0_sig, f_sigs, sgn_eps)
        u0_val = u0_sig.value(t)
        e_u = y[base:base + n] - u0_val
        e_0f = y[base + n:base + 2 * n]
        e_f = y[base + 2 * n:base + 3 * n]
        e = y[base + 3 * n:base + 4 * n]
        d_closed = y[1 + 2 * n:1 + 3 * n]
        s = h @ e_u
        out[base:base + n] = -s - d_closed * signum(s, sgn_eps)  # dw = de_u + du0
        out[base + n:base + 2 * n] = -(h @ e_0f) - f0_sig.derivative(t)
        out[base + 2 * n:base + 3 * n] = \
            -gains.l * e_f - np.array([sig.derivative(t) for sig in f_sigs])
        out[base + 3 * n:base + 4 * n] = -gains.k * (h @ e) + e_0f + e_u - e_f
        return out

    return rhs


def augmented_initial(closed_init: np.ndarray, graph: GraphMatrices, gains: Gains,
                      u0_sig: SignalSpec, f0_sig: SignalSpec, f_sigs: tuple,
                      t0: float = 0.0) -> np.ndarray:
    """Closed-loop initial state with the oracle error blocks initialized to
    the closed loop's own initial errors (the input-estimate twin carries
    e_u + u0)."""
    n = graph.n
    state = FirstOrderState.unpack(np.asarray(closed_init, dtype=float), n)
    f_vals = np.array([sig.value(t0) for sig in f_sigs])
    e_u, e_0f, e_f, e = extract_errors(state, graph, gains,
                                       u0_sig.value(t0), f0_sig.value(t0), f_vals)
    w = e_u + u0_sig.value(t0)
    return np.concatenate([np.asarray(closed_init, dtype=float), w, e_0f, e_f, e])


def first_order_bounds(graph: GraphMatrices, gains: Gains, rates, initial_errors):
    """Certificate for the first-order loop (closed-form in lambda_min(H));
    see :func:`mas_track.bounds.certify_first_order` for the formulas."""
    from .bounds import certify_first_order

    return certify_first_order(graph, gains, rates, initial_errors)


def trace_columns(n: int) -> tuple:
    """Fixed derived-column layout of a first-order run (t excluded)."""
    cols = ["x0"]
    cols += [f"x_{i}" for i in range(1, n + 1)]
    cols += [f"uhat0_{i}" for i in range(1, n + 1)]
    cols += [f"d_{i}" for i in range(1, n + 1)]
    cols += [f"fhat0_{i}" for i in range(1, n + 1)]
    cols += [f"fhat_{i}" for i in range(1, n + 1)]
    cols += [f"u_{i}" for i in range(1, n + 1)]
    cols += ["err_pos_norm", "err_u_norm", "err_f0_norm", "err_f_norm"]
    return tuple(cols)


def make_recorder(graph: GraphMatrices, gains: Gains, u0_sig: SignalSpec,
                  f0_sig: SignalSpec, f_sigs: tuple):
    """Recorder emitting the trace row (states, estimates, controls, error
    norms) for the leading closed-loop block of a state vector."""
    n = graph.n
    base = FirstOrderState.dim(n)

    def record(t, y):
        state = FirstOrderState.unpack(y[:base], n)
        u0_val = u0_sig.value(t)
        f0_val = f0_sig.value(t)
        f_vals = np.array([sig.value(t) for sig in f_sigs])
        f_hat0 = leader_dist_estimate(state, graph)
        f_hat = local_dist_estimate(state, gains)
        u = controller(state, gains, graph)
        e_u, e_0f, e_f, e = extract_errors(state, graph, gains, u0_val, f0_val, f_vals)
        return np.concatenate([
            [state.x0], state.x, state.u_hat0, state.d, f_hat0, f_hat, u,
            [np.linalg.norm(e), np.linalg.norm(e_u), np.linalg.norm(e_0f), np.linalg.norm(e_f)],
        ])

    return record


ORACLE_DIFF_COLUMNS = ("diff_e_u", "diff_e_0f", "diff_e_f", "diff_e")


def make_oracle_recorder(graph: GraphMatrices, gains: Gains, u0_sig: SignalSpec,
                         f0_sig: SignalSpec, f_sigs: tuple):
    """Recorder for an augmented run: the closed-loop trace row followed by the
    per-block max-abs deviation between the closed loop's extracted errors and
    the oracle-integrated ones."""
    n = graph.n
    base = FirstOrderState.dim(n)
    closed_recorder = make_recorder(graph, gains, u0_sig, f0_sig, f_sigs)

    def record(t, y):
        state = FirstOrderState.unpack(y[:base], n)
        f_vals = np.array([sig.value(t) for sig in f_sigs])
        u0_val = u0_sig.value(t)
        e_u, e_0f, e_f, e = extract_errors(state, graph, gains,
                                           u0_val, f0_sig.value(t), f_vals)
        diffs = [
            np.abs(e_u - (y[base:base + n] - u0_val)).max(),
            np.abs(e_0f - y[base + n:base + 2 * n]).max(),
            np.abs(e_f - y[base + 2 * n:base + 3 * n]).max(),
            np.abs(e - y[base + 3 * n:base + 4 * n]).max(),
        ]
        return np.concatenate([closed_recorder(t, y), diffs])

    return record
