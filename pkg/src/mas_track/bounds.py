"""Tracking-error certificates and their verification against traces.

A certificate packages the closed-form transient bound (holds for all t) and
asymptotic bound (holds once transients settle) for a scenario, computed from
the graph spectrum, the gains, and the signal rate envelopes.  First-order
bounds are closed-form in lambda_min(H); second-order bounds go through the
positive definite solutions of three Lyapunov equations, one per stacked
error block.  ``verify_bounds`` turns the certificate into per-claim pass/fail
verdicts on a simulated trace.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .first_order import Gains
from .graph import GraphMatrices
from .integrator import SimTrace
from .linalg import LyapunovSolution, NotHurwitzError, error_block_matrix, solve_lyapunov
from .signals import RateBounds

REACHABILITY_EIGENVALUE_FLOOR = 1e-10

# Verification slack for the estimate sub-bounds (pointwise checks on sampled
# trajectories); the tracking bounds themselves carry no slack.
LEADER_DIST_SLACK = 1e-9
LOCAL_DIST_SLACK = 1e-6


class CertificationError(ValueError):
    """A certificate cannot be produced for this configuration."""


@dataclass(frozen=True)
class InitialErrors:
    """Norms of the estimation/tracking errors at t = 0, computed from the
    scenario's initial conditions and true signal values (never user-supplied
    directly, which removes an inconsistency channel)."""

    e: float
    e_u: float
    e_0f: float
    e_f: float
    e_0v: float = 0.0
    e_v: float = 0.0

    @property
    def e_0vf(self) -> float:
        return math.hypot(self.e_0v, self.e_0f)

    @property
    def e_vf(self) -> float:
        return math.hypot(self.e_v, self.e_f)


@dataclass(frozen=True)
class BoundCertificate:
    """Transient bound ``delta`` (all t) and asymptotic bound ``epsilon``
    (t -> infinity) for the stacked tracking error, with the per-observer
    sub-bounds or Lyapunov spectral constants they were built from."""

    order: str
    lambda_min_h: float
    transient_bound: float
    asymptotic_bound: float
    sub_bounds: dict = field(default_factory=dict)
    inputs_echo: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "order": self.order,
            "lambda_min_h": self.lambda_min_h,
            "transient_bound": self.transient_bound,
            "asymptotic_bound": self.asymptotic_bound,
            "sub_bounds": dict(self.sub_bounds),
            "inputs_echo": dict(self.inputs_echo),
        }


def _check_reachable(graph: GraphMatrices):
    if graph.lambda_min_h <= REACHABILITY_EIGENVALUE_FLOOR:
        raise CertificationError(
            f"leader not globally reachable (lambda_min(H) = {graph.lambda_min_h:.3g})"
        )


def _echo(gains: Gains, rates: RateBounds, init: InitialErrors) -> dict:
    return {
        "q0": rates.q0, "q1": rates.q1, "w": rates.w,
        "k": gains.k, "l": gains.l,
        "e0_norm": init.e, "e_u0_norm": init.e_u,
        "e_0f0_norm": init.e_0f, "e_f0_norm": init.e_f,
        "e_0v0_norm": init.e_0v, "e_v0_norm": init.e_v,
    }


def certify_first_order(graph: GraphMatrices, gains: Gains, rates: RateBounds,
                        init: InitialErrors) -> BoundCertificate:
    """Closed-form first-order certificate.

    Leader-disturbance estimate:  ||e_0f(t)|| <= ||e_0f(0)|| + q0/lam,
                                  limit <= q0/lam         (lam = lambda_min(H))
    Local-disturbance estimate:   ||e_f(t)||  <= ||e_f(0)|| + q1/l, limit <= q1/l
    Tracking:  ||e(t)|| <= ||e(0)|| + (||e_0f(0)|| + ||e_u(0)|| + ||e_f(0)||
                                       + q0/lam + q1/l) / (k lam)
               limit    <= (q0/lam + q1/l) / (k lam)
    """
    _check_reachable(graph)
    lam = graph.lambda_min_h
    leader_asym = rates.q0 / lam
    local_asym = rates.q1 / gains.l
    asymptotic = (leader_asym + local_asym) / (gains.k * lam)
    transient = init.e + (init.e_0f + init.e_u + init.e_f + leader_asym + local_asym) / (gains.k * lam)
    sub = {
        "leader_dist_transient": init.e_0f + leader_asym,
        "leader_dist_asymptotic": leader_asym,
        "local_dist_transient": init.e_f + local_asym,
        "local_dist_asymptotic": local_asym,
    }
    return BoundCertificate(
        order="first",
        lambda_min_h=lam,
        transient_bound=transient,
        asymptotic_bound=asymptotic,
        sub_bounds=sub,
        inputs_echo=_echo(gains, rates, init),
    )


_BLOCKS = ("leader_est", "local_est", "tracking")


def _lyapunov_constants(graph: GraphMatrices, gains: Gains) -> dict:
    solutions = {}
    for kind in _BLOCKS:
        q = error_block_matrix(kind, graph.coupling, l=gains.l, k=gains.k)
        try:
            solutions[kind] = solve_lyapunov(q)
        except NotHurwitzError as exc:
            raise CertificationError(f"{kind} error block is not Hurwitz: {exc}") from exc
    return solutions


def certify_second_order(graph: GraphMatrices, gains: Gains, rates: RateBounds,
                         init: InitialErrors) -> BoundCertificate:
    """Second-order certificate via the Lyapunov solutions P of the three
    stacked error blocks.  With c(P) = lam_max(P) ||P|| / lam_min(P):

    epsilon = c(P_tr) * (2 sqrt(2) c(P_loc) q1 + 2 sqrt(2) c(P_ldr) q0)

    delta   = sqrt(lam_max/lam_min)(P_tr) ||e(0)||
              + c(P_tr) * ( 2 sqrt(lam_max/lam_min)(P_loc) ||e_vf(0)||
                          + 2 sqrt(2) c(P_loc) q1
                          + 2 sqrt(lam_max/lam_min)(P_ldr) ||e_0vf(0)||
                          + 2 c(P_ldr) sqrt(2 (||e_u(0)||^2 + q0^2))
                          + sqrt(2) ||e_u(0)|| )
    """
    _check_reachable(graph)
    sols = _lyapunov_constants(graph, gains)
    p_ldr, p_loc, p_tr = sols["leader_est"], sols["local_est"], sols["tracking"]

    def cond_sqrt(sol: LyapunovSolution) -> float:
        return math.sqrt(sol.lambda_max_p / sol.lambda_min_p)

    def c(sol: LyapunovSolution) -> float:
        return sol.lambda_max_p * sol.spectral_norm_p / sol.lambda_min_p

    root2 = math.sqrt(2.0)
    asymptotic = c(p_tr) * (2 * root2 * c(p_loc) * rates.q1 + 2 * root2 * c(p_ldr) * rates.q0)
    transient = (
        cond_sqrt(p_tr) * init.e
        + c(p_tr) * (
            2 * cond_sqrt(p_loc) * init.e_vf
            + 2 * root2 * c(p_loc) * rates.q1
            + 2 * cond_sqrt(p_ldr) * init.e_0vf
            + 2 * c(p_ldr) * math.sqrt(2 * (init.e_u ** 2 + rates.q0 ** 2))
            + root2 * init.e_u
        )
    )
    sub = {}
    for name, sol in (("leader_est", p_ldr), ("local_est", p_loc), ("tracking", p_tr)):
        sub[f"{name}_p_lambda_min"] = sol.lambda_min_p
        sub[f"{name}_p_lambda_max"] = sol.lambda_max_p
        sub[f"{name}_p_norm"] = sol.spectral_norm_p
        sub[f"{name}_p_residual"] = sol.residual
    return BoundCertificate(
        order="second",
        lambda_min_h=graph.lambda_min_h,
        transient_bound=transient,
        asymptotic_bound=asymptotic,
        sub_bounds=sub,
        inputs_echo=_echo(gains, rates, init),
    )


@dataclass(frozen=True)
class BoundClaim:
    """One verified claim: observed quantity vs certified bound (plus slack)."""

    name: str
    bound: float
    slack: float
    observed: float
    passed: bool

    @property
    def margin(self) -> float:
        return self.bound + self.slack - self.observed


@dataclass(frozen=True)
class VerdictReport:
    claims: tuple
    settle_time: float

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.claims)

    def to_dict(self) -> dict:
        return {
            "settle_time": self.settle_time,
            "all_passed": self.all_passed,
            "claims": [
                {"name": c.name, "bound": c.bound, "slack": c.slack,
                 "observed": c.observed, "passed": c.passed, "margin": c.margin}
                for c in self.claims
            ],
        }


def _tracking_norm(trace: SimTrace, order: str) -> np.ndarray:
    pos = trace.column("err_pos_norm")
    if order == "first":
        return pos
    return np.hypot(pos, trace.column("err_vel_norm"))


def verify_bounds(trace: SimTrace, cert: BoundCertificate, settle_time: float = None) -> VerdictReport:
    """Check every certificate claim against a trace.

    Transient claims are pointwise over all recorded times; asymptotic claims
    take the max over recorded times >= ``settle_time`` (default: half the
    horizon, the finite proxy for t -> infinity).
    """
    order = trace.metadata.get("order")
    if order is not None and order != cert.order:
        raise ValueError(f"certificate order {cert.order!r} does not match trace order {order!r}")
    horizon = float(trace.times[-1])
    if settle_time is None:
        settle_time = horizon / 2.0
    if not settle_time < horizon:
        raise ValueError(f"settle_time {settle_time} must lie inside the trace horizon {horizon}")
    tail = trace.times >= settle_time

    track = _tracking_norm(trace, cert.order)
    checks = [
        ("tracking_transient", cert.transient_bound, 0.0, float(track.max())),
        ("tracking_asymptotic", cert.asymptotic_bound, 0.0, float(track[tail].max())),
    ]
    if cert.order == "first":
        e0f = trace.column("err_f0_norm")
        ef = trace.column("err_f_norm")
        checks += [
            ("leader_dist_transient", cert.sub_bounds["leader_dist_transient"],
             LEADER_DIST_SLACK, float(e0f.max())),
            ("leader_dist_asymptotic", cert.sub_bounds["leader_dist_asymptotic"],
             LEADER_DIST_SLACK, float(e0f[tail].max())),
            ("local_dist_transient", cert.sub_bounds["local_dist_transient"],
             LOCAL_DIST_SLACK, float(ef.max())),
            ("local_dist_asymptotic", cert.sub_bounds["local_dist_asymptotic"],
             LOCAL_DIST_SLACK, float(ef[tail].max())),
        ]
    claims = tuple(
        BoundClaim(name=name, bound=bound, slack=slack, observed=obs,
                   passed=bool(obs <= bound + slack))
        for name, bound, slack, obs in checks
    )
    return VerdictReport(claims=claims, settle_time=float(settle_time))
