"""Deterministic fixed-step integration of the closed-loop and oracle ODEs.

Fixed-step (rather than adaptive) stepping is deliberate: the adaptive error
controllers of general-purpose solvers misbehave on the signum discontinuity
of the input observer, and a fixed grid makes twin integrations comparable to
integrator order.  The right-hand side is evaluated at intermediate stages
with the convention sgn(0) = 0, a midpoint selection from the switching set.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MAX_STEPS = 100_000_000

METHODS = ("rk4", "euler")


class IntegrationError(RuntimeError):
    """Integration aborted (non-finite state)."""


@dataclass(frozen=True)
class IntegrationConfig:
    """Fixed-step integration settings.

    ``sgn_smoothing_epsilon`` is consumed by the dynamics builders, not by the
    stepper: 0 keeps the exact signum, a positive value replaces it with the
    boundary layer s/(|s|+eps) for sensitivity studies.
    """

    t_end: float
    dt: float
    method: str = "rk4"
    sgn_smoothing_epsilon: float = 0.0
    record_stride: int = 1

    def __post_init__(self):
        if not (self.t_end > 0 and np.isfinite(self.t_end)):
            raise ValueError(f"t_end: must be finite and > 0, got {self.t_end!r}")
        if not (self.dt > 0 and np.isfinite(self.dt)):
            raise ValueError(f"dt: must be finite and > 0, got {self.dt!r}")
        if self.dt > self.t_end:
            raise ValueError(f"dt: must not exceed t_end ({self.dt} > {self.t_end})")
        if self.t_end / self.dt > MAX_STEPS:
            raise ValueError(f"t_end/dt exceeds the step guard {MAX_STEPS:g}")
        if self.method not in METHODS:
            raise ValueError(f"method: expected one of {METHODS}, got {self.method!r}")
        if self.sgn_smoothing_epsilon < 0:
            raise ValueError("sgn_smoothing_epsilon: must be >= 0")
        if not (isinstance(self.record_stride, int) and self.record_stride >= 1):
            raise ValueError(f"record_stride: must be a positive integer, got {self.record_stride!r}")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))


@dataclass
class SimTrace:
    """Time-indexed record of an integration run.

    ``states`` holds the raw state vector at each recorded step; ``derived``
    holds whatever the recorder extracted (controls, estimates, error norms),
    one row per recorded step, with the column layout fixed by
    ``derived_columns``.
    """

    times: np.ndarray
    states: np.ndarray
    derived: np.ndarray
    derived_columns: tuple = ()
    metadata: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        """One derived column by name."""
        try:
            idx = self.derived_columns.index(name)
        except ValueError:
            raise KeyError(f"trace has no derived column {name!r}") from None
        return self.derived[:, idx]

    def columns(self, prefix: str) -> np.ndarray:
        """All derived columns whose name starts with ``prefix`` (in order)."""
        idx = [i for i, c in enumerate(self.derived_columns) if c.startswith(prefix)]
        if not idx:
            raise KeyError(f"trace has no derived columns with prefix {prefix!r}")
        return self.derived[:, idx]


def integrate(rhs, x_init, config: IntegrationConfig, recorder=None,
              derived_columns=(), metadata=None) -> SimTrace:
    """Integrate ``dy/dt = rhs(t, y)`` from t = 0 with fixed steps.

    Records the state (and the recorder's derived row, when given) at step 0
    and every ``record_stride`` steps thereafter.  Deterministic: identical
    inputs produce bit-identical traces.  Aborts with
    :class:`IntegrationError` when a non-finite state component appears.
    """
    y = np.array(x_init, dtype=float)
    if y.ndim != 1:
        raise ValueError("x_init must be a flat vector")
    dt = config.dt
    n_steps = config.n_steps
    stride = config.record_stride
    n_rec = n_steps // stride + 1

    times = np.empty(n_rec)
    states = np.empty((n_rec, y.size))
    first_row = recorder(0.0, y) if recorder is not None else np.empty(0)
    derived = np.empty((n_rec, np.asarray(first_row).size))

    times[0] = 0.0
    states[0] = y
    derived[0] = first_row

    half = 0.5 * dt
    sixth = dt / 6.0
    rec = 1
    for i in range(n_steps):
        t = i * dt
        if config.method == "rk4":
            k1 = rhs(t, y)
            k2 = rhs(t + half, y + half * k1)
            k3 = rhs(t + half, y + half * k2)
            k4 = rhs(t + dt, y + dt * k3)
            y = y + sixth * (k1 + 2.0 * (k2 + k3) + k4)
        else:
            y = y + dt * rhs(t, y)
        if not np.all(np.isfinite(y)):
            bad = int(np.flatnonzero(~np.isfinite(y))[0])
            raise IntegrationError(
                f"non-finite state at step {i + 1} (t = {(i + 1) * dt:.6g}), component {bad}"
            )
        if (i + 1) % stride == 0:
            t_next = (i + 1) * dt
            times[rec] = t_next
            states[rec] = y
            if recorder is not None:
                derived[rec] = recorder(t_next, y)
            rec += 1

    meta = dict(metadata or {})
    meta.setdefault("config", {
        "t_end": config.t_end,
        "dt": config.dt,
        "method": config.method,
        "sgn_smoothing_epsilon": config.sgn_smoothing_epsilon,
        "record_stride": config.record_stride,
    })
    return SimTrace(
        times=times,
        states=states,
        derived=derived,
        derived_columns=tuple(derived_columns),
        metadata=meta,
    )
