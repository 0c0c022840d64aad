"""Flow length/size distribution-mixture models.

A traffic model carries, for each decision axis (flow length in packets,
flow size in bytes), three weightings of the same quantity: the share of
flows, of packets, and of octets attributable to flows up to a given
length/size.  Each weighting is a mixture of uniform, lognormal and
generalized-Pareto components.  The length axis is integer valued and is
discretized by CDF differences; the size axis is continuous bytes.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from scipy import special, stats

__all__ = [
    "ModelError",
    "SchemaError",
    "WeightError",
    "DominanceError",
    "MixtureComponent",
    "Mixture",
    "AxisModel",
    "TrafficModel",
    "parse_model",
    "load_model",
    "resolve_model_path",
]

WEIGHT_TOLERANCE = 1e-9
SUPPORT_FLOOR_TOLERANCE = 1e-9
TAIL_EPSILON = 1e-9
SUPPORT_CAP = 2 ** 40
DEFAULT_MAX_PACKET = 1518
DEFAULT_SIZE_DOMAIN_MIN = 64
QUANTILE_ITERATIONS = 64

MODEL_DIR_ENV = "FLOWTAB_MODEL_DIR"

_COMPONENT_PARAMS = {
    "uniform": ("low", "high"),
    "lognormal": ("mu", "sigma"),
    "generalized-pareto": ("shape", "location", "scale"),
}


class ModelError(ValueError):
    """Base class for traffic-model validation failures."""


class SchemaError(ModelError):
    """Malformed model document: missing/extra fields or invalid parameters."""


class WeightError(ModelError):
    """Mixture weights out of range or not summing to one."""


class DominanceError(ModelError):
    """flows/packets/octets CDF ordering violated on the validation grid."""


@dataclass(frozen=True)
class MixtureComponent:
    """One parametric component of a mixture.

    ``params`` holds kind-specific values: uniform(low, high),
    lognormal(mu, sigma), generalized-pareto(shape, location, scale).
    """

    kind: str
    weight: float
    params: dict[str, float]

    def __post_init__(self) -> None:
        if self.kind not in _COMPONENT_PARAMS:
            raise SchemaError(f"unknown component kind {self.kind!r}")
        expected = _COMPONENT_PARAMS[self.kind]
        got = tuple(sorted(self.params))
        if got != tuple(sorted(expected)):
            raise SchemaError(
                f"{self.kind} component expects params {expected}, got {got}"
            )
        if not (0.0 <= self.weight <= 1.0):
            raise WeightError(f"component weight {self.weight} outside [0, 1]")
        p = self.params
        if self.kind == "uniform" and not (p["high"] > p["low"]):
            raise SchemaError("uniform component requires high > low")
        if self.kind == "lognormal" and not (p["sigma"] > 0):
            raise SchemaError("lognormal component requires sigma > 0")
        if self.kind == "generalized-pareto" and not (p["scale"] > 0):
            raise SchemaError("generalized-pareto component requires scale > 0")

    def frozen_dist(self):
        """scipy frozen distribution for this component (untruncated)."""
        p = self.params
        if self.kind == "uniform":
            return stats.uniform(loc=p["low"], scale=p["high"] - p["low"])
        if self.kind == "lognormal":
            return stats.lognorm(s=p["sigma"], scale=math.exp(p["mu"]))
        return stats.genpareto(c=p["shape"], loc=p["location"], scale=p["scale"])

    def mean_is_finite(self) -> bool:
        return not (self.kind == "generalized-pareto" and self.params["shape"] >= 1.0)

    def partial_expectation(self, a: float) -> float:
        """E[X * 1{X > a}] under the untruncated component law.

        Requires a finite mean; closed forms per family.
        """
        if not self.mean_is_finite():
            raise ValueError("partial expectation undefined for shape >= 1")
        p = self.params
        if self.kind == "uniform":
            lo, hi = p["low"], p["high"]
            a = min(max(a, lo), hi)
            return (hi * hi - a * a) / (2.0 * (hi - lo))
        if self.kind == "lognormal":
            mu, s = p["mu"], p["sigma"]
            full = math.exp(mu + 0.5 * s * s)
            if a <= 0:
                return full
            return full * stats.norm.sf((math.log(a) - mu - s * s) / s)
        xi, loc, sc = p["shape"], p["location"], p["scale"]
        if a <= loc:
            return loc + sc / (1.0 - xi)
        sf = self.frozen_dist().sf(a)
        if sf <= 0.0:
            return 0.0
        # conditional excess beyond a is generalized-Pareto(xi, sc + xi*(a - loc))
        return float(sf) * (a + (sc + xi * (a - loc)) / (1.0 - xi))


class _Prepared:
    """Component with direct vectorized distribution math and its
    lower-truncation constant.

    The cdf/sf/ppf/pdf implementations avoid scipy's frozen-distribution
    dispatch, which dominates runtime in the vectorized quantile bisection;
    they are cross-checked against scipy in the test suite.
    """

    __slots__ = ("component", "weight", "below_floor", "keep", "_p")

    def __init__(self, component: MixtureComponent, floor: float, discrete: bool):
        self.component = component
        self.weight = component.weight
        self._p = dict(component.params)
        c = float(self.cdf(np.asarray([floor]))[0])
        if discrete and c > SUPPORT_FLOOR_TOLERANCE:
            raise SchemaError(
                f"{component.kind} component carries probability {c:.3g} below the "
                f"domain floor {floor}; discrete-axis support must start at "
                f"{floor + 1} or above"
            )
        if c >= 1.0:
            raise SchemaError(
                f"{component.kind} component has no mass above domain_min"
            )
        self.below_floor = c
        self.keep = 1.0 - c

    @property
    def kind(self) -> str:
        return self.component.kind

    def support(self) -> tuple[float, float]:
        p = self._p
        if self.kind == "uniform":
            return p["low"], p["high"]
        if self.kind == "lognormal":
            return 0.0, math.inf
        shape, loc, scale = p["shape"], p["location"], p["scale"]
        if shape < 0:
            return loc, loc - scale / shape
        return loc, math.inf

    def cdf(self, x: np.ndarray) -> np.ndarray:
        p = self._p
        if self.kind == "uniform":
            return np.clip((x - p["low"]) / (p["high"] - p["low"]), 0.0, 1.0)
        if self.kind == "lognormal":
            with np.errstate(divide="ignore", invalid="ignore"):
                z = (np.log(np.maximum(x, 0.0)) - p["mu"]) / p["sigma"]
            return np.where(x > 0.0, special.ndtr(np.nan_to_num(z, nan=-np.inf)), 0.0)
        return 1.0 - self.sf(x)

    def sf(self, x: np.ndarray) -> np.ndarray:
        p = self._p
        if self.kind == "uniform":
            return 1.0 - self.cdf(x)
        if self.kind == "lognormal":
            with np.errstate(divide="ignore", invalid="ignore"):
                z = (np.log(np.maximum(x, 0.0)) - p["mu"]) / p["sigma"]
            return np.where(x > 0.0, special.ndtr(-np.nan_to_num(z, nan=-np.inf)), 1.0)
        shape, loc, scale = p["shape"], p["location"], p["scale"]
        z = np.maximum((x - loc) / scale, 0.0)
        if shape == 0.0:
            return np.exp(-z)
        base = np.maximum(1.0 + shape * z, 0.0)
        with np.errstate(divide="ignore"):
            out = base ** (-1.0 / shape)
        return np.where(base > 0.0, out, 0.0)

    def ppf(self, u: np.ndarray) -> np.ndarray:
        p = self._p
        u = np.clip(u, 0.0, 1.0 - 1e-16)
        if self.kind == "uniform":
            return p["low"] + u * (p["high"] - p["low"])
        if self.kind == "lognormal":
            return np.exp(p["mu"] + p["sigma"] * special.ndtri(np.maximum(u, 1e-300)))
        shape, loc, scale = p["shape"], p["location"], p["scale"]
        if shape == 0.0:
            return loc - scale * np.log1p(-u)
        return loc + scale * np.expm1(-shape * np.log1p(-u)) / shape

    def pdf(self, x: np.ndarray) -> np.ndarray:
        p = self._p
        if self.kind == "uniform":
            inside = (x >= p["low"]) & (x <= p["high"])
            return np.where(inside, 1.0 / (p["high"] - p["low"]), 0.0)
        if self.kind == "lognormal":
            sigma = p["sigma"]
            with np.errstate(divide="ignore", invalid="ignore"):
                z = (np.log(np.maximum(x, 1e-300)) - p["mu"]) / sigma
                out = np.exp(-0.5 * z * z) / (x * sigma * math.sqrt(2.0 * math.pi))
            return np.where(x > 0.0, out, 0.0)
        shape, loc, scale = p["shape"], p["location"], p["scale"]
        z = (x - loc) / scale
        base = 1.0 + shape * z if shape != 0.0 else None
        if shape == 0.0:
            out = np.exp(-np.maximum(z, 0.0)) / scale
            return np.where(z >= 0.0, out, 0.0)
        base = np.maximum(1.0 + shape * z, 0.0)
        with np.errstate(divide="ignore"):
            out = base ** (-1.0 / shape - 1.0) / scale
        return np.where((z >= 0.0) & (base > 0.0), out, 0.0)


@dataclass(frozen=True, eq=False)
class Mixture:
    """Weighted mixture of components over one axis weighting.

    ``discrete`` mixtures (length axis) are integer valued: the continuous
    mixture is discretized via CDF differences, with any component mass in
    (domain_min - 1, domain_min] folded into the atom at ``domain_min``.
    Continuous mixtures (size axis) are lower-truncated at ``domain_min``
    and renormalized component-wise.
    """

    components: tuple[MixtureComponent, ...]
    domain_min: float
    discrete: bool
    _prepared: tuple[_Prepared, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not self.components:
            raise SchemaError("mixture requires at least one component")
        if self.domain_min <= 0:
            raise SchemaError("domain_min must be positive")
        total = math.fsum(c.weight for c in self.components)
        if abs(total - 1.0) > WEIGHT_TOLERANCE:
            raise WeightError(
                f"mixture weights sum to {total!r}, expected 1 within {WEIGHT_TOLERANCE}"
            )
        prepared = tuple(
            _Prepared(c, self.floor, self.discrete) for c in self.components
        )
        object.__setattr__(self, "_prepared", prepared)

    @property
    def floor(self) -> float:
        """Lower edge of the support: domain_min - 1 (discrete) or domain_min."""
        return self.domain_min - 1.0 if self.discrete else float(self.domain_min)

    # -- CDF / survival ----------------------------------------------------

    def _raw_cdf(self, x: np.ndarray) -> np.ndarray:
        out = np.zeros_like(x, dtype=float)
        for pc in self._prepared:
            out += pc.weight * ((pc.cdf(x) - pc.below_floor) / pc.keep)
        return np.clip(out, 0.0, 1.0)

    def _raw_sf(self, x: np.ndarray) -> np.ndarray:
        out = np.zeros_like(x, dtype=float)
        for pc in self._prepared:
            out += pc.weight * (pc.sf(x) / pc.keep)
        return np.clip(out, 0.0, 1.0)

    def _effective(self, x: np.ndarray) -> np.ndarray:
        """Map evaluation points onto the continuous mixture (floor for discrete)."""
        x = np.asarray(x, dtype=float)
        pts = np.floor(x) if self.discrete else x
        return np.maximum(pts, self.floor)

    def cdf(self, x):
        """P(X <= x); 0 below domain_min, non-decreasing, -> 1 at infinity."""
        scalar = np.isscalar(x)
        pts = self._effective(np.atleast_1d(np.asarray(x, dtype=float)))
        out = self._raw_cdf(pts)
        below = np.atleast_1d(np.asarray(x, dtype=float)) < self.domain_min
        out[below] = 0.0
        return float(out[0]) if scalar else out

    def sf(self, x):
        """P(X > x), evaluated via component survival functions for tail accuracy."""
        scalar = np.isscalar(x)
        pts = self._effective(np.atleast_1d(np.asarray(x, dtype=float)))
        out = self._raw_sf(pts)
        below = np.atleast_1d(np.asarray(x, dtype=float)) < self.domain_min
        out[below] = 1.0
        return float(out[0]) if scalar else out

    def pmass(self, k):
        """Probability mass of the integer cell k: cdf(k) - cdf(k - 1)."""
        scalar = np.isscalar(k)
        kk = np.atleast_1d(np.asarray(k, dtype=float))
        if np.any(kk < self.domain_min):
            raise ValueError("pmass requires k >= domain_min")
        out = self.sf(kk - 1.0) - self.sf(kk)
        out = np.maximum(out, 0.0)
        return float(out[0]) if scalar else out

    # -- quantiles -----------------------------------------------------------

    def _component_ppf(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        lo = np.full_like(u, np.inf)
        hi = np.full_like(u, -np.inf)
        for pc in self._prepared:
            v = pc.below_floor + u * pc.keep
            q = pc.ppf(v)
            lo = np.minimum(lo, q)
            hi = np.maximum(hi, q)
        lo = np.maximum(lo, self.floor)
        hi = np.maximum(hi, lo)
        return lo, hi

    def quantile(self, u):
        """Smallest x with cdf(x) >= u, for u in [0, 1).

        Discrete mixtures return integers; continuous mixtures resolve the
        mixture CDF by bisection to relative tolerance below 1e-12.
        By convention quantile(0) == domain_min.
        """
        scalar = np.isscalar(u)
        uu = np.atleast_1d(np.asarray(u, dtype=float))
        if np.any((uu < 0.0) | (uu >= 1.0)):
            raise ValueError("quantile requires u in [0, 1)")
        out = np.full_like(uu, float(self.domain_min))
        live = uu > 0.0
        if np.any(live):
            ul = uu[live]
            lo, hi = self._component_ppf(ul)
            # geometric bisection; supports are positive so log-space is safe
            lo = np.maximum(lo, 1e-12)
            hi = np.maximum(hi, lo * (1.0 + 1e-9))
            for _ in range(QUANTILE_ITERATIONS):
                mid = np.sqrt(lo * hi)
                above = self._raw_cdf(mid) >= ul
                hi = np.where(above, mid, hi)
                lo = np.where(above, lo, mid)
            q = hi
            if self.discrete:
                k = np.ceil(q - 1e-9)
                k = np.maximum(k, self.domain_min)
                step_down = (k - 1 >= self.domain_min) & (self._raw_cdf(k - 1.0) >= ul)
                k = np.where(step_down, k - 1.0, k)
                q = k
            else:
                q = np.maximum(q, self.domain_min)
            out[live] = q
        return float(out[0]) if scalar else out

    # -- moments ---------------------------------------------------------------

    def mean(self) -> float | None:
        """Mixture mean; ``None`` when a component's mean diverges.

        For discrete mixtures this is the mean of the discretized (integer)
        distribution, computed by exact summation over the head of the
        support plus closed-form partial expectations for the tail.
        """
        if any(not c.mean_is_finite() for c in self.components):
            return None
        if not self.discrete:
            acc = 0.0
            for pc in self._prepared:
                acc += pc.weight * pc.component.partial_expectation(self.floor) / pc.keep
            return acc
        head_end = int(self.domain_min) + 2 ** 16
        ks = np.arange(self.domain_min - 1, head_end + 1, dtype=float)
        sf = self.sf(ks)
        head = float(np.dot(ks[1:], sf[:-1] - sf[1:]))
        tail_mass = float(sf[-1])
        tail = 0.0
        for pc in self._prepared:
            tail += pc.weight * pc.component.partial_expectation(float(head_end)) / pc.keep
        # integer cells exceed the underlying continuous value by less than 1
        return head + tail + 0.5 * tail_mass

    def support_upper(self, eps: float = TAIL_EPSILON) -> float:
        """Adaptive upper truncation point: smallest power-of-two x with sf(x) <= eps,
        capped at SUPPORT_CAP (a hit of the cap is visible as sf(cap) > eps)."""
        x = max(float(self.domain_min), 1.0)
        while self.sf(x) > eps and x < SUPPORT_CAP:
            x *= 2.0
        return min(x, SUPPORT_CAP)


@dataclass(frozen=True)
class AxisModel:
    """flows/packets/octets weightings for one decision axis."""

    axis: str
    flows: Mixture
    packets: Mixture
    octets: Mixture

    def __post_init__(self) -> None:
        if self.axis not in ("length", "size"):
            raise SchemaError(f"unknown axis {self.axis!r}")

    def weighting(self, name: str) -> Mixture:
        try:
            return {"flows": self.flows, "packets": self.packets, "octets": self.octets}[name]
        except KeyError:
            raise ValueError(f"unknown weighting {name!r}") from None

    def validation_grid(self, points: int = 257) -> np.ndarray:
        lo = float(self.flows.domain_min)
        grid = np.geomspace(lo, SUPPORT_CAP, points)
        if self.flows.discrete:
            grid = np.unique(np.floor(grid))
        return grid

    def check_dominance(self, tolerance: float = 1e-9) -> None:
        """flows.CDF >= packets.CDF >= octets.CDF pointwise on the grid."""
        grid = self.validation_grid()
        f = self.flows.cdf(grid)
        p = self.packets.cdf(grid)
        o = self.octets.cdf(grid)
        for upper, lower, pair in ((f, p, "flows >= packets"), (p, o, "packets >= octets")):
            bad = upper + tolerance < lower
            if np.any(bad):
                x = grid[np.argmax(bad)]
                raise DominanceError(
                    f"{self.axis} axis: CDF dominance {pair} violated at x={x:g}"
                )


@dataclass(frozen=True)
class TrafficModel:
    """Parsed and validated traffic model."""

    name: str
    length_axis: AxisModel
    size_axis: AxisModel
    max_packet_size: int = DEFAULT_MAX_PACKET
    declared_avg_flow_length: float | None = None
    declared_avg_flow_size: float | None = None
    declared_avg_packet_size: float | None = None

    def axis(self, name: str) -> AxisModel:
        if name == "length":
            return self.length_axis
        if name == "size":
            return self.size_axis
        raise ValueError(f"unknown axis {name!r}")

    @property
    def avg_flow_length(self) -> float:
        if self.declared_avg_flow_length is not None:
            return self.declared_avg_flow_length
        m = self.length_axis.flows.mean()
        if m is None:
            raise ModelError("average flow length diverges for this model")
        return m

    @property
    def avg_flow_size(self) -> float:
        if self.declared_avg_flow_size is not None:
            return self.declared_avg_flow_size
        m = self.size_axis.flows.mean()
        if m is None:
            raise ModelError("average flow size diverges for this model")
        return m

    @property
    def avg_packet_size(self) -> float:
        if self.declared_avg_packet_size is not None:
            return self.declared_avg_packet_size
        return self.avg_flow_size / self.avg_flow_length


# -- parsing ------------------------------------------------------------------


def _require_mapping(obj: Any, where: str) -> dict:
    if not isinstance(obj, dict):
        raise SchemaError(f"{where}: expected an object")
    return obj


def _check_keys(obj: dict, required: Sequence[str], optional: Sequence[str], where: str) -> None:
    keys = set(obj)
    missing = [k for k in required if k not in keys]
    if missing:
        raise SchemaError(f"{where}: missing field(s) {missing}")
    extra = sorted(keys - set(required) - set(optional))
    if extra:
        raise SchemaError(f"{where}: unexpected field(s) {extra}")


def _number(obj: dict, key: str, where: str) -> float:
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise SchemaError(f"{where}.{key}: expected a number")
    return float(v)


def _component_from_json(obj: Any, where: str) -> MixtureComponent:
    obj = _require_mapping(obj, where)
    _check_keys(obj, ("kind", "weight", "params"), (), where)
    kind = obj["kind"]
    if kind not in _COMPONENT_PARAMS:
        raise SchemaError(f"{where}: unknown kind {kind!r}")
    params_obj = _require_mapping(obj["params"], f"{where}.params")
    _check_keys(params_obj, _COMPONENT_PARAMS[kind], (), f"{where}.params")
    params = {k: _number(params_obj, k, f"{where}.params") for k in _COMPONENT_PARAMS[kind]}
    weight = _number(obj, "weight", where)
    return MixtureComponent(kind=kind, weight=weight, params=params)


def _mixture_from_json(obj: Any, *, discrete: bool, default_domain_min: float, where: str) -> Mixture:
    obj = _require_mapping(obj, where)
    _check_keys(obj, ("components",), ("domain_min",), where)
    comps_obj = obj["components"]
    if not isinstance(comps_obj, list) or not comps_obj:
        raise SchemaError(f"{where}.components: expected a non-empty list")
    comps = tuple(
        _component_from_json(c, f"{where}.components[{i}]") for i, c in enumerate(comps_obj)
    )
    domain_min = _number(obj, "domain_min", where) if "domain_min" in obj else default_domain_min
    if discrete and domain_min != int(domain_min):
        raise SchemaError(f"{where}.domain_min: length axis requires an integer")
    return Mixture(components=comps, domain_min=domain_min, discrete=discrete)


def _axis_from_json(obj: Any, axis: str, where: str) -> AxisModel:
    obj = _require_mapping(obj, where)
    _check_keys(obj, ("flows", "packets", "octets"), (), where)
    discrete = axis == "length"
    default_min = 1.0 if discrete else float(DEFAULT_SIZE_DOMAIN_MIN)
    mixes = {
        name: _mixture_from_json(
            obj[name], discrete=discrete, default_domain_min=default_min, where=f"{where}.{name}"
        )
        for name in ("flows", "packets", "octets")
    }
    model = AxisModel(axis=axis, **mixes)
    model.check_dominance()
    return model


def parse_model(document: str) -> TrafficModel:
    """Parse and validate a JSON traffic-model document."""
    try:
        obj = json.loads(document)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc}") from exc
    obj = _require_mapping(obj, "model")
    _check_keys(
        obj,
        ("name", "axes"),
        ("max_packet_size", "avg_flow_length", "avg_flow_size", "avg_packet_size"),
        "model",
    )
    if not isinstance(obj["name"], str):
        raise SchemaError("model.name: expected a string")
    axes = _require_mapping(obj["axes"], "model.axes")
    _check_keys(axes, ("length", "size"), (), "model.axes")
    length_axis = _axis_from_json(axes["length"], "length", "model.axes.length")
    size_axis = _axis_from_json(axes["size"], "size", "model.axes.size")

    max_packet = int(_number(obj, "max_packet_size", "model")) if "max_packet_size" in obj else DEFAULT_MAX_PACKET
    if max_packet <= 0:
        raise SchemaError("model.max_packet_size must be positive")

    declared = {
        key: (_number(obj, key, "model") if key in obj else None)
        for key in ("avg_flow_length", "avg_flow_size", "avg_packet_size")
    }
    afl, afs, aps = declared["avg_flow_length"], declared["avg_flow_size"], declared["avg_packet_size"]
    if afl is not None and afs is not None and aps is not None:
        implied = afs / afl
        if abs(aps - implied) > 0.01 * implied:
            raise SchemaError(
                f"declared avg_packet_size {aps:g} disagrees with "
                f"avg_flow_size/avg_flow_length = {implied:g} by more than 1%"
            )

    model = TrafficModel(
        name=obj["name"],
        length_axis=length_axis,
        size_axis=size_axis,
        max_packet_size=max_packet,
        declared_avg_flow_length=afl,
        declared_avg_flow_size=afs,
        declared_avg_packet_size=aps,
    )
    if model.max_packet_size < model.avg_packet_size:
        raise SchemaError(
            f"max_packet_size {model.max_packet_size} below average packet size "
            f"{model.avg_packet_size:.1f}"
        )
    return model


def resolve_model_path(name: str) -> str:
    """Resolve a model reference: a path as given, else relative to
    $FLOWTAB_MODEL_DIR, else relative to ./models."""
    candidates = [name]
    env_dir = os.environ.get(MODEL_DIR_ENV)
    if env_dir:
        candidates.append(os.path.join(env_dir, name))
    candidates.append(os.path.join("models", name))
    for cand in candidates:
        if os.path.isfile(cand):
            return cand
    raise FileNotFoundError(f"model file not found: {name!r} (searched {candidates})")


def load_model(path: str) -> TrafficModel:
    with open(resolve_model_path(path), "r", encoding="utf-8") as fh:
        return parse_model(fh.read())
