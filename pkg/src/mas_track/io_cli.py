"""Scenario files, trace export, and the command-line surface.

A scenario JSON fully determines a run: topology, gains, signals, initial
conditions, and integration settings.  Validation is eager and every failure
names the JSON path of the offending field.  Traces are exported as CSV with
17-significant-digit decimals, which round-trips float64 exactly.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import bounds as bounds_mod
from . import first_order, second_order
from .first_order import Gains
from .graph import GraphMatrices, Topology, TopologyError, build_matrices
from .integrator import IntegrationConfig, SimTrace, integrate
from .signals import SignalError, SignalSpec, rate_bounds, signal_from_json, signal_to_json

FIXTURES_ENV = "MAS_TRACK_FIXTURES"

ORDERS = ("first", "second")


class ScenarioError(ValueError):
    """A scenario file is malformed; the message names the offending field."""


# ---------------------------------------------------------------------------
# Scenario model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InitState:
    """Initial conditions; observer internals and adaptive gains default to
    zero when omitted.  Velocity fields are only meaningful for second order."""

    x0: float
    x: tuple
    v0: float = 0.0
    v: tuple = ()
    d: tuple = ()
    u_hat0: tuple = ()
    z_f0: tuple = ()
    z_f: tuple = ()
    z_v0: tuple = ()
    z_v: tuple = ()


@dataclass(frozen=True)
class Scenario:
    order: str
    topology: Topology
    gains: Gains
    u0: SignalSpec
    f0: SignalSpec
    f: tuple
    init: InitState
    integration: IntegrationConfig
    description: str = ""

    @property
    def n(self) -> int:
        return self.topology.n_followers


def _field(obj: dict, key: str, path: str):
    if key not in obj:
        where = f"{path}.{key}" if path else key
        raise ScenarioError(f"{where}: missing required field")
    return obj[key]


def _number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(f"{path}: expected a number, got {value!r}")
    if not np.isfinite(value):
        raise ScenarioError(f"{path}: must be finite, got {value!r}")
    return float(value)


def _vector(value, n: int, path: str) -> tuple:
    if not isinstance(value, list):
        raise ScenarioError(f"{path}: expected a list of {n} numbers")
    if len(value) != n:
        raise ScenarioError(f"{path}: expected length {n}, got {len(value)}")
    return tuple(_number(v, f"{path}[{i}]") for i, v in enumerate(value))


def _parse_topology(obj, path: str) -> Topology:
    if not isinstance(obj, dict):
        raise ScenarioError(f"{path}: expected an object")
    n = _field(obj, "n_followers", path)
    if isinstance(n, bool) or not isinstance(n, int):
        raise ScenarioError(f"{path}.n_followers: expected an integer, got {n!r}")
    edges_raw = obj.get("edges", [])
    if not isinstance(edges_raw, list):
        raise ScenarioError(f"{path}.edges: expected a list")
    edges = []
    for idx, e in enumerate(edges_raw):
        if not (isinstance(e, list) and len(e) == 3):
            raise ScenarioError(f"{path}.edges[{idx}]: expected [i, j, weight]")
        i, j, w = e
        if isinstance(i, bool) or isinstance(j, bool) or not (isinstance(i, int) and isinstance(j, int)):
            raise ScenarioError(f"{path}.edges[{idx}]: follower ids must be integers")
        edges.append((i, j, _number(w, f"{path}.edges[{idx}][2]")))
    links_raw = obj.get("leader_links", {})
    if not isinstance(links_raw, dict):
        raise ScenarioError(f"{path}.leader_links: expected an object mapping id -> weight")
    links = {}
    for key, w in links_raw.items():
        try:
            agent = int(key)
        except (TypeError, ValueError):
            raise ScenarioError(f"{path}.leader_links[{key!r}]: key must be a follower id") from None
        links[agent] = _number(w, f"{path}.leader_links[{key}]")
    try:
        return Topology(n_followers=n, follower_edges=tuple(edges), leader_links=links)
    except TopologyError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc


def parse_scenario(obj: dict, source: str = "scenario") -> Scenario:
    if not isinstance(obj, dict):
        raise ScenarioError(f"{source}: expected a JSON object")
    order = _field(obj, "order", "")
    if order not in ORDERS:
        raise ScenarioError(f"order: expected one of {ORDERS}, got {order!r}")
    topology = _parse_topology(_field(obj, "topology", ""), "topology")
    n = topology.n_followers

    gains_raw = _field(obj, "gains", "")
    if not isinstance(gains_raw, dict):
        raise ScenarioError("gains: expected an object")
    k = _number(_field(gains_raw, "k", "gains"), "gains.k")
    l = _number(_field(gains_raw, "l", "gains"), "gains.l")
    tau = _vector(_field(gains_raw, "tau", "gains"), n, "gains.tau")
    try:
        gains = Gains(k=k, l=l, tau=tau)
    except ValueError as exc:
        raise ScenarioError(f"gains: {exc}") from exc

    signals_raw = _field(obj, "signals", "")
    if not isinstance(signals_raw, dict):
        raise ScenarioError("signals: expected an object")
    try:
        u0 = signal_from_json(_field(signals_raw, "u0", "signals"), "signals.u0")
        f0 = signal_from_json(_field(signals_raw, "f0", "signals"), "signals.f0")
    except SignalError as exc:
        raise ScenarioError(str(exc)) from exc
    f_raw = _field(signals_raw, "f", "signals")
    if not isinstance(f_raw, list):
        raise ScenarioError("signals.f: expected a list of disturbance signals")
    if len(f_raw) != n:
        raise ScenarioError(f"signals.f: expected {n} disturbance signals, got {len(f_raw)}")
    try:
        f = tuple(signal_from_json(s, f"signals.f[{i}]") for i, s in enumerate(f_raw))
    except SignalError as exc:
        raise ScenarioError(str(exc)) from exc

    init_raw = _field(obj, "init", "")
    if not isinstance(init_raw, dict):
        raise ScenarioError("init: expected an object")
    x0 = _number(_field(init_raw, "x0", "init"), "init.x0")
    x = _vector(_field(init_raw, "x", "init"), n, "init.x")
    second = order == "second"
    if second:
        v0 = _number(_field(init_raw, "v0", "init"), "init.v0")
        v = _vector(_field(init_raw, "v", "init"), n, "init.v")
    else:
        for key in ("v0", "v"):
            if key in init_raw:
                raise ScenarioError(f"init.{key}: not allowed for a first-order scenario")
        v0, v = 0.0, ()
    observer_keys = ("d", "u_hat0", "z_f0", "z_f") + (("z_v0", "z_v") if second else ())
    extras = {}
    for key in observer_keys:
        if key in init_raw:
            extras[key] = _vector(init_raw[key], n, f"init.{key}")
        else:
            extras[key] = ()
    for key in ("z_v0", "z_v"):
        if not second and key in init_raw:
            raise ScenarioError(f"init.{key}: not allowed for a first-order scenario")
    known = {"x0", "x", "v0", "v", "d", "u_hat0", "z_f0", "z_f", "z_v0", "z_v"}
    for key in init_raw:
        if key not in known:
            raise ScenarioError(f"init.{key}: unknown field")
    init = InitState(x0=x0, x=x, v0=v0, v=v, **extras)

    integ_raw = _field(obj, "integration", "")
    if not isinstance(integ_raw, dict):
        raise ScenarioError("integration: expected an object")
    t_end = _number(_field(integ_raw, "t_end", "integration"), "integration.t_end")
    dt = _number(_field(integ_raw, "dt", "integration"), "integration.dt")
    method = integ_raw.get("method", "rk4")
    eps = _number(integ_raw.get("sgn_smoothing_epsilon", 0.0), "integration.sgn_smoothing_epsilon")
    stride = integ_raw.get("record_stride", 1)
    if isinstance(stride, bool) or not isinstance(stride, int):
        raise ScenarioError(f"integration.record_stride: expected an integer, got {stride!r}")
    try:
        integration = IntegrationConfig(t_end=t_end, dt=dt, method=method,
                                        sgn_smoothing_epsilon=eps, record_stride=stride)
    except ValueError as exc:
        raise ScenarioError(f"integration: {exc}") from exc

    description = obj.get("description", "")
    if not isinstance(description, str):
        raise ScenarioError("description: expected a string")

    return Scenario(order=order, topology=topology, gains=gains, u0=u0, f0=f0, f=f,
                    init=init, integration=integration, description=description)


def scenario_to_dict(sc: Scenario) -> dict:
    out = {
        "order": sc.order,
        "topology": {
            "n_followers": sc.topology.n_followers,
            "edges": [[i, j, w] for i, j, w in sc.topology.follower_edges],
            "leader_links": {str(i): w for i, w in sorted(sc.topology.leader_links.items())},
        },
        "gains": {"k": sc.gains.k, "l": sc.gains.l, "tau": list(sc.gains.tau)},
        "signals": {
            "u0": signal_to_json(sc.u0),
            "f0": signal_to_json(sc.f0),
            "f": [signal_to_json(s) for s in sc.f],
        },
        "init": {"x0": sc.init.x0, "x": list(sc.init.x)},
        "integration": {
            "t_end": sc.integration.t_end,
            "dt": sc.integration.dt,
            "method": sc.integration.method,
            "sgn_smoothing_epsilon": sc.integration.sgn_smoothing_epsilon,
            "record_stride": sc.integration.record_stride,
        },
    }
    if sc.order == "second":
        out["init"]["v0"] = sc.init.v0
        out["init"]["v"] = list(sc.init.v)
    for key in ("d", "u_hat0", "z_f0", "z_f", "z_v0", "z_v"):
        value = getattr(sc.init, key)
        if value:
            out["init"][key] = list(value)
    if sc.description:
        out["description"] = sc.description
    return out


def load_scenario(path) -> Scenario:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except FileNotFoundError:
        raise ScenarioError(f"scenario file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: invalid JSON: {exc}") from exc
    return parse_scenario(obj, source=str(path))


def scenario_digest(sc: Scenario) -> str:
    canonical = json.dumps(scenario_to_dict(sc), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# Runs
# ---------------------------------------------------------------------------

def _zeros_or(values: tuple, n: int) -> np.ndarray:
    return np.asarray(values, dtype=float) if values else np.zeros(n)


def initial_state(sc: Scenario) -> np.ndarray:
    """Flat initial state vector in the documented layout."""
    n = sc.n
    init = sc.init
    if sc.order == "first":
        state = first_order.FirstOrderState(
            x0=init.x0,
            x=np.asarray(init.x, dtype=float),
            u_hat0=_zeros_or(init.u_hat0, n),
            d=_zeros_or(init.d, n),
            z_f0=_zeros_or(init.z_f0, n),
            z_f=_zeros_or(init.z_f, n),
        )
    else:
        state = second_order.SecondOrderState(
            x0=init.x0,
            v0=init.v0,
            x=np.asarray(init.x, dtype=float),
            v=np.asarray(init.v, dtype=float),
            u_hat0=_zeros_or(init.u_hat0, n),
            d=_zeros_or(init.d, n),
            z_v0=_zeros_or(init.z_v0, n),
            z_f0=_zeros_or(init.z_f0, n),
            z_v=_zeros_or(init.z_v, n),
            z_f=_zeros_or(init.z_f, n),
        )
    return state.pack()


def initial_errors(sc: Scenario, graph: GraphMatrices) -> bounds_mod.InitialErrors:
    """Initial error norms from the scenario's own initial conditions and the
    true signal values at t = 0."""
    flat = initial_state(sc)
    f_vals = np.array([sig.value(0.0) for sig in sc.f])
    if sc.order == "first":
        state = first_order.FirstOrderState.unpack(flat, sc.n)
        e_u, e_0f, e_f, e = first_order.extract_errors(
            state, graph, sc.gains, sc.u0.value(0.0), sc.f0.value(0.0), f_vals)
        return bounds_mod.InitialErrors(
            e=float(np.linalg.norm(e)), e_u=float(np.linalg.norm(e_u)),
            e_0f=float(np.linalg.norm(e_0f)), e_f=float(np.linalg.norm(e_f)))
    state = second_order.SecondOrderState.unpack(flat, sc.n)
    v_hat0, f_hat0, v_hat, f_hat = second_order.estimates(state, graph, sc.gains)
    e = np.concatenate([state.x - state.x0, state.v - state.v0])
    return bounds_mod.InitialErrors(
        e=float(np.linalg.norm(e)),
        e_u=float(np.linalg.norm(state.u_hat0 - sc.u0.value(0.0))),
        e_0f=float(np.linalg.norm(f_hat0 - sc.f0.value(0.0))),
        e_f=float(np.linalg.norm(f_hat - f_vals)),
        e_0v=float(np.linalg.norm(v_hat0 - state.v0)),
        e_v=float(np.linalg.norm(v_hat - state.v)),
    )


def scenario_rate_bounds(sc: Scenario):
    return rate_bounds(sc.u0, sc.f0, sc.f, (0.0, sc.integration.t_end))


def certify_scenario(sc: Scenario):
    """(graph, certificate) for a scenario."""
    graph = build_matrices(sc.topology)
    rates = scenario_rate_bounds(sc)
    init = initial_errors(sc, graph)
    if sc.order == "first":
        cert = bounds_mod.certify_first_order(graph, sc.gains, rates, init)
    else:
        cert = bounds_mod.certify_second_order(graph, sc.gains, rates, init)
    return graph, cert


def _mod_for(sc: Scenario):
    return first_order if sc.order == "first" else second_order


def run_scenario(sc: Scenario) -> SimTrace:
    """Integrate the closed loop and record the full derived trace."""
    graph = build_matrices(sc.topology)
    mod = _mod_for(sc)
    eps = sc.integration.sgn_smoothing_epsilon
    rhs = mod.make_closed_loop_rhs(graph, sc.gains, sc.u0, sc.f0, sc.f, eps)
    recorder = mod.make_recorder(graph, sc.gains, sc.u0, sc.f0, sc.f)
    return integrate(
        rhs, initial_state(sc), sc.integration, recorder,
        derived_columns=mod.trace_columns(sc.n),
        metadata={"order": sc.order, "n_followers": sc.n,
                  "scenario_digest": scenario_digest(sc)},
    )


def oracle_run(sc: Scenario) -> SimTrace:
    """Twin integration: closed loop augmented with the independently
    integrated error-dynamics blocks; the derived row carries the usual trace
    columns plus per-block max-abs deviations."""
    graph = build_matrices(sc.topology)
    mod = _mod_for(sc)
    eps = sc.integration.sgn_smoothing_epsilon
    rhs = mod.make_augmented_rhs(graph, sc.gains, sc.u0, sc.f0, sc.f, eps)
    recorder = mod.make_oracle_recorder(graph, sc.gains, sc.u0, sc.f0, sc.f)
    x_init = mod.augmented_initial(initial_state(sc), graph, sc.gains, sc.u0, sc.f0, sc.f)
    return integrate(
        rhs, x_init, sc.integration, recorder,
        derived_columns=mod.trace_columns(sc.n) + mod.ORACLE_DIFF_COLUMNS,
        metadata={"order": sc.order, "n_followers": sc.n,
                  "scenario_digest": scenario_digest(sc), "oracle": True},
    )


# ---------------------------------------------------------------------------
# Trace CSV
# ---------------------------------------------------------------------------

def export_trace(trace: SimTrace, path) -> None:
    """Write the trace as CSV: header row, then one row per recorded step with
    t followed by the derived columns, 17 significant digits per number."""
    header = ",".join(("t",) + tuple(trace.derived_columns))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for t, row in zip(trace.times, trace.derived):
            fh.write(f"{t:.17g}," + ",".join(f"{v:.17g}" for v in row) + "\n")


def read_trace(path):
    """Parse an exported CSV back into (times, columns, data) with exact
    float64 values."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        columns = header.split(",")
        rows = [[float(v) for v in line.strip().split(",")] for line in fh if line.strip()]
    data = np.array(rows)
    if data.size == 0 or columns[0] != "t":
        raise ValueError(f"{path}: not a trace CSV")
    return data[:, 0], tuple(columns[1:]), data[:, 1:]


# ---------------------------------------------------------------------------
# Fixtures and CLI
# ---------------------------------------------------------------------------

def fixtures_dir():
    override = os.environ.get(FIXTURES_ENV)
    if override:
        return Path(override)
    return resources.files("mas_track") / "fixtures"


def resolve_config(path: str):
    if os.path.exists(path):
        return path
    candidate = fixtures_dir() / path if not os.path.isabs(path) else None
    if candidate is not None:
        try:
            if candidate.is_file():
                return candidate
        except OSError:
            pass
    raise ScenarioError(f"scenario file not found: {path}")


def _apply_overrides(sc: Scenario, args) -> Scenario:
    cfg = sc.integration
    if getattr(args, "dt", None) is not None:
        cfg = replace(cfg, dt=args.dt)
    if getattr(args, "t_end", None) is not None:
        cfg = replace(cfg, t_end=args.t_end)
    if cfg is not sc.integration:
        sc = replace(sc, integration=cfg)
    return sc


def _cmd_run(args) -> int:
    sc = _apply_overrides(load_scenario(resolve_config(args.config)), args)
    trace = run_scenario(sc)
    export_trace(trace, args.out)
    print(f"wrote {len(trace.times)} rows x {1 + len(trace.derived_columns)} columns to {args.out}")
    return 0


def _cmd_bounds(args) -> int:
    sc = _apply_overrides(load_scenario(resolve_config(args.config)), args)
    _, cert = certify_scenario(sc)
    payload = cert.to_dict()
    payload["scenario_digest"] = scenario_digest(sc)
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"order={cert.order} lambda_min_H={cert.lambda_min_h:.6g} "
          f"transient={cert.transient_bound:.6g} asymptotic={cert.asymptotic_bound:.6g}")
    return 0


def _cmd_oracle(args) -> int:
    sc = _apply_overrides(load_scenario(resolve_config(args.config)), args)
    trace = oracle_run(sc)
    export_trace(trace, args.out)
    mod = _mod_for(sc)
    for name in mod.ORACLE_DIFF_COLUMNS:
        print(f"max {name}: {trace.column(name).max():.3e}")
    return 0


def _cmd_verify(args) -> int:
    from . import acceptance

    results = acceptance.run_suite(args.suite, fast=args.fast, out=print)
    failed = [r for r in results if r.passed is False]
    return 1 if failed else 0


def cli(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mas-track",
        description="Observer-based leader-follower tracking: simulate, certify, verify.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="scenario JSON (path or bundled fixture name)")
    common.add_argument("--dt", type=float, default=None, help="override integration step")
    common.add_argument("--t-end", dest="t_end", type=float, default=None, help="override horizon")

    p_run = sub.add_parser("run", parents=[common], help="simulate and export a trace CSV")
    p_run.add_argument("--out", required=True, help="output CSV path")
    p_run.set_defaults(handler=_cmd_run)

    p_bounds = sub.add_parser("bounds", parents=[common], help="compute a bound certificate JSON")
    p_bounds.add_argument("--out", required=True, help="output JSON path")
    p_bounds.set_defaults(handler=_cmd_bounds)

    p_oracle = sub.add_parser("oracle", parents=[common],
                              help="twin integration against the error-dynamics blocks")
    p_oracle.add_argument("--out", required=True, help="output CSV path")
    p_oracle.set_defaults(handler=_cmd_oracle)

    p_verify = sub.add_parser("verify", help="run the acceptance criteria")
    p_verify.add_argument("--suite", choices=("first", "second", "all"), default="all")
    p_verify.add_argument("--fast", action="store_true",
                          help="reduced random-instance counts; skips the repeated-run "
                               "and step-halving claims")
    p_verify.set_defaults(handler=_cmd_verify)

    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except (ScenarioError, TopologyError, SignalError, bounds_mod.CertificationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli())


if __name__ == "__main__":
    main()
