"""Exogenous time signals with exact analytic derivatives.

The leader input and all disturbances are sums of closed-form primitives
(constant, ramp, cosine, polynomial), so their values and first derivatives
are exact and the derivative envelopes needed by the tracking bounds can be
computed rather than assumed.  Arbitrary callbacks are deliberately not
representable: every signal that can be simulated can also be certified.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class SignalError(ValueError):
    """A signal description is malformed."""


def _check_finite(name: str, *values: float):
    for v in values:
        if not (isinstance(v, (int, float)) and math.isfinite(v)):
            raise SignalError(f"{name}: parameters must be finite numbers, got {v!r}")


@dataclass(frozen=True)
class Constant:
    c: float

    def __post_init__(self):
        _check_finite("const", self.c)

    def value(self, t: float) -> float:
        return self.c

    def derivative(self, t: float) -> float:
        return 0.0

    def derivative_envelope(self):
        return 0.0


@dataclass(frozen=True)
class Ramp:
    slope: float

    def __post_init__(self):
        _check_finite("ramp", self.slope)

    def value(self, t: float) -> float:
        return self.slope * t

    def derivative(self, t: float) -> float:
        return self.slope

    def derivative_envelope(self):
        return abs(self.slope)


@dataclass(frozen=True)
class Cosine:
    """amplitude * cos(omega * t + phase)"""

    amplitude: float
    omega: float
    phase: float = 0.0

    def __post_init__(self):
        _check_finite("cos", self.amplitude, self.omega, self.phase)

    def value(self, t: float) -> float:
        return self.amplitude * math.cos(self.omega * t + self.phase)

    def derivative(self, t: float) -> float:
        return -self.amplitude * self.omega * math.sin(self.omega * t + self.phase)

    def derivative_envelope(self):
        return abs(self.amplitude * self.omega)


@dataclass(frozen=True)
class Polynomial:
    """coefficients[0] + coefficients[1]*t + coefficients[2]*t**2 + ..."""

    coefficients: tuple

    def __post_init__(self):
        coeffs = tuple(float(c) for c in self.coefficients)
        _check_finite("poly", *coeffs)
        object.__setattr__(self, "coefficients", coeffs)

    def value(self, t: float) -> float:
        acc = 0.0
        for c in reversed(self.coefficients):
            acc = acc * t + c
        return acc

    def derivative(self, t: float) -> float:
        acc = 0.0
        for k in range(len(self.coefficients) - 1, 0, -1):
            acc = acc * t + k * self.coefficients[k]
        return acc

    def derivative_envelope(self):
        # no closed form over an arbitrary horizon; callers fall back to sampling
        return None


_PRIMITIVES = (Constant, Ramp, Cosine, Polynomial)


@dataclass(frozen=True)
class SignalSpec:
    """A scalar time function given as a sum of primitive terms."""

    terms: tuple

    def __post_init__(self):
        terms = tuple(self.terms)
        for term in terms:
            if not isinstance(term, _PRIMITIVES):
                raise SignalError(f"unknown signal term {term!r}")
        object.__setattr__(self, "terms", terms)

    def value(self, t: float) -> float:
        if len(self.terms) == 1:
            return self.terms[0].value(t)
        return sum(term.value(t) for term in self.terms)

    def derivative(self, t: float) -> float:
        if len(self.terms) == 1:
            return self.terms[0].derivative(t)
        return sum(term.derivative(t) for term in self.terms)


def eval_signal(sig: SignalSpec, t: float):
    """Exact (value, first derivative) of a signal at time t."""
    return sig.value(t), sig.derivative(t)


def constant(c: float) -> SignalSpec:
    return SignalSpec((Constant(c),))


def ramp(slope: float) -> SignalSpec:
    return SignalSpec((Ramp(slope),))


def cosine(amplitude: float, omega: float, phase: float = 0.0) -> SignalSpec:
    return SignalSpec((Cosine(amplitude, omega, phase),))


@dataclass(frozen=True)
class RateBounds:
    """Derivative envelopes of the exogenous signals over a horizon.

    ``w`` bounds |du0/dt|; ``q0`` bounds the Euclidean norm of the leader
    disturbance rate replicated across the N followers (a factor sqrt(N)
    larger than |df0/dt|, matching how the bound formulas consume it);
    ``q1`` bounds the norm of the stacked follower disturbance rates.
    """

    w: float
    q0: float
    q1: float


# Sampled envelopes are inflated by 1% so that conservatism, never optimism,
# is the failure mode of a certified bound.
_SAMPLING_MARGIN = 1.01


def _derivative_sup(sig: SignalSpec, t0: float, t1: float, sample_dt: float) -> float:
    if len(sig.terms) == 1:
        envelope = sig.terms[0].derivative_envelope()
        if envelope is not None:
            return envelope
    ts = np.arange(t0, t1 + 0.5 * sample_dt, sample_dt)
    sup = max(abs(sig.derivative(float(t))) for t in ts)
    return sup * _SAMPLING_MARGIN


def rate_bounds(
    u0: SignalSpec,
    f0: SignalSpec,
    f: tuple,
    horizon: tuple,
    sample_dt: float = None,
) -> RateBounds:
    """Compute (w, q0, q1) over ``horizon = (t0, t1)``.

    Single-primitive signals use their closed-form envelope; sums (and
    polynomials) are densely sampled and inflated by 1%.  Per-follower
    envelopes combine root-sum-square, which is exact when the individual
    suprema are attained simultaneously (e.g. ramps) and conservative
    otherwise.
    """
    t0, t1 = float(horizon[0]), float(horizon[1])
    if not (t1 > t0):
        raise SignalError(f"horizon: must be a nonempty interval, got ({t0}, {t1})")
    if sample_dt is None:
        sample_dt = (t1 - t0) / 10_000.0
    if not sample_dt > 0:
        raise SignalError(f"sample_dt: must be positive, got {sample_dt}")
    n = len(f)
    w = _derivative_sup(u0, t0, t1, sample_dt)
    q0 = math.sqrt(n) * _derivative_sup(f0, t0, t1, sample_dt)
    q1 = math.sqrt(sum(_derivative_sup(sig, t0, t1, sample_dt) ** 2 for sig in f))
    return RateBounds(w=w, q0=q0, q1=q1)


# ---------------------------------------------------------------------------
# JSON grammar:  {"sum": [term, ...]} or a single term, with terms
#   {"const": c} | {"ramp": slope} |
#   {"cos": {"amp": a, "omega": w, "phase": p}} | {"poly": [c0, c1, ...]}
# ---------------------------------------------------------------------------

def signal_from_json(obj, path: str = "signal") -> SignalSpec:
    if isinstance(obj, dict) and "sum" in obj:
        raw_terms = obj["sum"]
        if not isinstance(raw_terms, list):
            raise SignalError(f"{path}.sum: expected a list of terms")
        terms = [_term_from_json(t, f"{path}.sum[{i}]") for i, t in enumerate(raw_terms)]
        return SignalSpec(tuple(terms))
    return SignalSpec((_term_from_json(obj, path),))


def _term_from_json(obj, path: str):
    if not isinstance(obj, dict) or len(obj) != 1:
        raise SignalError(f"{path}: expected a single-key term object, got {obj!r}")
    (kind, body), = obj.items()
    try:
        if kind == "const":
            return Constant(float(body))
        if kind == "ramp":
            return Ramp(float(body))
        if kind == "cos":
            return Cosine(
                float(body["amp"]), float(body["omega"]), float(body.get("phase", 0.0))
            )
        if kind == "poly":
            return Polynomial(tuple(float(c) for c in body))
    except SignalError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise SignalError(f"{path}: malformed {kind!r} term: {exc}") from exc
    raise SignalError(f"{path}: unknown term kind {kind!r}")


def signal_to_json(sig: SignalSpec) -> dict:
    terms = []
    for term in sig.terms:
        if isinstance(term, Constant):
            terms.append({"const": term.c})
        elif isinstance(term, Ramp):
            terms.append({"ramp": term.slope})
        elif isinstance(term, Cosine):
            terms.append({"cos": {"amp": term.amplitude, "omega": term.omega, "phase": term.phase}})
        elif isinstance(term, Polynomial):
            terms.append({"poly": list(term.coefficients)})
        else:  # pragma: no cover - SignalSpec validation forbids this
            raise SignalError(f"unknown signal term {term!r}")
    return {"sum": terms}
