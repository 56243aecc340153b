"""Core PSA data model: parameter/net-benefit samples, EVPI, and estimate records.

A probabilistic sensitivity analysis run is summarised by S simulated
parameter vectors and the matching S x T matrix of monetary net benefit,
one column per treatment option.  Everything downstream (single-parameter
binning, regression smoothing, nested Monte Carlo) consumes the same
:class:`PsaSample`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

__all__ = [
    "EstimationError",
    "PsaSample",
    "WillingnessToPay",
    "ParamSubset",
    "EvppiEstimate",
    "build_nb",
    "evpi",
    "incremental_nb",
    "current_optimum",
    "numeric_tolerance",
]

# Relative slack used for "estimate >= 0" checks: tiny negatives produced by
# floating point are clamped to zero, anything below -NEG_TOL_FACTOR*max|nb|
# is a bug.
NEG_TOL_FACTOR = 1e-9

METHOD_TAGS = ("SO", "SAD", "GAM", "GP", "MC")


class EstimationError(RuntimeError):
    """An estimator failed at run time (as opposed to bad user input)."""


def _as_matrix(x, name: str) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"{name} must be a 2-D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


def _frozen(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float, copy=True)
    out.flags.writeable = False
    return out


def numeric_tolerance(nb: np.ndarray) -> float:
    """Library-wide numerical slack for nonnegativity checks: 1e-9 * max|nb|."""
    scale = float(np.max(np.abs(nb))) if np.size(nb) else 0.0
    return NEG_TOL_FACTOR * scale


@dataclass(frozen=True)
class WillingnessToPay:
    """Monetary value of one unit of health effect (e.g. currency per QALY)."""

    k: float

    def __post_init__(self):
        if not math.isfinite(self.k) or self.k < 0:
            raise ValueError(f"willingness to pay must be finite and >= 0, got {self.k}")


def _wtp_value(k) -> float:
    if isinstance(k, WillingnessToPay):
        return k.k
    return WillingnessToPay(float(k)).k


@dataclass(frozen=True)
class ParamSubset:
    """Ordered, duplicate-free column indices of the parameters of interest.

    The subset is the "phi" part of the split theta = (phi, psi); the
    complement stays uncertain.
    """

    indices: tuple[int, ...]

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if len(idx) == 0:
            raise ValueError("parameter subset must not be empty")
        if len(set(idx)) != len(idx):
            raise ValueError(f"duplicate indices in parameter subset: {idx}")
        if any(i < 0 for i in idx):
            raise ValueError(f"negative index in parameter subset: {idx}")
        object.__setattr__(self, "indices", idx)

    @classmethod
    def of(cls, *indices: int) -> "ParamSubset":
        return cls(tuple(indices))

    @classmethod
    def from_names(cls, names: Sequence[str], param_names: Sequence[str]) -> "ParamSubset":
        """Resolve parameter names against a sample's column names."""
        lookup = {n: i for i, n in enumerate(param_names)}
        missing = [n for n in names if n not in lookup]
        if missing:
            raise ValueError(
                f"unknown parameter name(s) {missing}; available: {list(param_names)}"
            )
        return cls(tuple(lookup[n] for n in names))

    def validate_against(self, n_params: int) -> None:
        bad = [i for i in self.indices if i >= n_params]
        if bad:
            raise ValueError(f"subset indices {bad} out of range for {n_params} parameters")

    def complement(self, n_params: int) -> tuple[int, ...]:
        self.validate_against(n_params)
        chosen = set(self.indices)
        return tuple(i for i in range(n_params) if i not in chosen)


@dataclass(frozen=True)
class PsaSample:
    """Paired parameter draws and net-benefit draws from one PSA run.

    ``params`` is S x P (model-native units), ``nb`` is S x T (currency).
    When the effect and cost matrices are kept, ``nb`` must equal
    ``k * effects - costs`` for the stored willingness to pay, so the net
    benefit can be rebuilt at any other threshold without re-simulation.
    All arrays are frozen after construction; operations never mutate them.
    """

    param_names: tuple[str, ...]
    params: np.ndarray
    nb: np.ndarray
    effects: np.ndarray | None = None
    costs: np.ndarray | None = None
    k: float | None = None
    treatment_names: tuple[str, ...] | None = None

    def __post_init__(self):
        params = _as_matrix(self.params, "params")
        nb = _as_matrix(self.nb, "nb")
        if params.shape[0] != nb.shape[0]:
            raise ValueError(
                f"params has {params.shape[0]} rows but nb has {nb.shape[0]}"
            )
        if params.shape[0] < 2:
            raise ValueError("need at least 2 simulation rows")
        if nb.shape[1] < 2:
            raise ValueError("need at least 2 treatment options")
        if len(self.param_names) != params.shape[1]:
            raise ValueError(
                f"{len(self.param_names)} parameter names for {params.shape[1]} columns"
            )
        object.__setattr__(self, "param_names", tuple(str(n) for n in self.param_names))
        object.__setattr__(self, "params", _frozen(params))
        object.__setattr__(self, "nb", _frozen(nb))

        if (self.effects is None) != (self.costs is None):
            raise ValueError("effects and costs must be supplied together")
        if self.effects is not None:
            effects = _as_matrix(self.effects, "effects")
            costs = _as_matrix(self.costs, "costs")
            if effects.shape != nb.shape or costs.shape != nb.shape:
                raise ValueError("effects/costs shape must match nb")
            if self.k is None:
                raise ValueError("k must be stored when effects and costs are kept")
            k = _wtp_value(self.k)
            rebuilt = k * effects - costs
            scale = max(float(np.max(np.abs(nb))), 1.0)
            if not np.allclose(nb, rebuilt, rtol=1e-9, atol=1e-9 * scale):
                raise ValueError("nb is inconsistent with k*effects - costs")
            object.__setattr__(self, "effects", _frozen(effects))
            object.__setattr__(self, "costs", _frozen(costs))
            object.__setattr__(self, "k", k)
        if self.treatment_names is not None:
            if len(self.treatment_names) != nb.shape[1]:
                raise ValueError("treatment_names length must match nb columns")
            object.__setattr__(
                self, "treatment_names", tuple(str(n) for n in self.treatment_names)
            )

    @property
    def n_sims(self) -> int:
        return self.params.shape[0]

    @property
    def n_params(self) -> int:
        return self.params.shape[1]

    @property
    def n_treatments(self) -> int:
        return self.nb.shape[1]

    def param_column(self, p: int) -> np.ndarray:
        if not 0 <= p < self.n_params:
            raise ValueError(f"parameter index {p} out of range (P={self.n_params})")
        return self.params[:, p]

    def param_index(self, name: str) -> int:
        try:
            return self.param_names.index(name)
        except ValueError:
            raise ValueError(
                f"unknown parameter {name!r}; available: {list(self.param_names)}"
            ) from None

    def take(self, rows: np.ndarray) -> "PsaSample":
        """Row-subset (or resampled) copy, used by the bootstrap."""
        rows = np.asarray(rows, dtype=int)
        return PsaSample(
            param_names=self.param_names,
            params=self.params[rows],
            nb=self.nb[rows],
            effects=None if self.effects is None else self.effects[rows],
            costs=None if self.costs is None else self.costs[rows],
            k=self.k,
            treatment_names=self.treatment_names,
        )

    def at_wtp(self, k) -> "PsaSample":
        """Rebuild the sample at a different willingness to pay.

        Requires stored effects and costs; raises otherwise.
        """
        if self.effects is None:
            raise ValueError(
                "sample carries only nb; rebuilding at another willingness to pay "
                "needs the effect and cost matrices"
            )
        k = _wtp_value(k)
        return PsaSample(
            param_names=self.param_names,
            params=self.params,
            nb=build_nb(self.effects, self.costs, k),
            effects=self.effects,
            costs=self.costs,
            k=k,
            treatment_names=self.treatment_names,
        )


@dataclass(frozen=True)
class EvppiEstimate:
    """An EVPPI (or EVPI) value with its method tag and diagnostics.

    ``value`` is clamped at zero when floating point produces a tiny
    negative; the raw figure is kept under ``diagnostics["raw_value"]``.
    """

    value: float
    method: str
    std_error: float | None = None
    diagnostics: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in METHOD_TAGS:
            raise ValueError(f"method must be one of {METHOD_TAGS}, got {self.method!r}")
        if not math.isfinite(self.value):
            raise ValueError(f"estimate is not finite: {self.value}")
        if self.std_error is not None and not (
            math.isfinite(self.std_error) and self.std_error >= 0
        ):
            raise ValueError(f"std_error must be finite and >= 0, got {self.std_error}")
        object.__setattr__(self, "diagnostics", dict(self.diagnostics))

    @classmethod
    def clamped(
        cls,
        raw_value: float,
        method: str,
        nb_scale: float,
        std_error: float | None = None,
        diagnostics: Mapping[str, object] | None = None,
    ) -> "EvppiEstimate":
        """Build an estimate, clamping float-level negatives to zero.

        ``nb_scale`` is max|nb| of the data the estimate came from; negatives
        beyond the numeric tolerance indicate a broken estimator and raise.
        """
        diag = dict(diagnostics or {})
        value = float(raw_value)
        if value < 0:
            if value < -NEG_TOL_FACTOR * max(nb_scale, 1e-300):
                raise EstimationError(
                    f"{method} estimate {value} is negative beyond numerical tolerance"
                )
            diag["raw_value"] = value
            value = 0.0
        return cls(value=value, method=method, std_error=std_error, diagnostics=diag)

    def to_dict(self) -> dict:
        """JSON-friendly representation (full precision)."""
        return {
            "value": self.value,
            "method": self.method,
            "std_error": self.std_error,
            "diagnostics": _jsonable(self.diagnostics),
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, (bool, int, float, str)) or obj is None:
        return obj
    return str(obj)


def build_nb(effects, costs, k) -> np.ndarray:
    """Monetary net benefit ``k * effects - costs``, elementwise.

    Both matrices must be S x T with finite entries and matching shapes.
    """
    e = _as_matrix(effects, "effects")
    c = _as_matrix(costs, "costs")
    if e.shape != c.shape:
        raise ValueError(f"effects shape {e.shape} != costs shape {c.shape}")
    return _wtp_value(k) * e - c


def evpi(nb) -> float:
    """Expected value of learning every parameter perfectly.

    Computed as the mean over simulations of (row maximum minus the column
    of the treatment that is optimal on average).  Each term is >= 0, so the
    result is >= 0 exactly, not merely within tolerance.
    """
    nb = _as_matrix(nb, "nb")
    if nb.shape[0] < 2:
        raise ValueError("need at least 2 simulation rows")
    t_star = int(np.argmax(nb.mean(axis=0)))
    return float(np.mean(nb.max(axis=1) - nb[:, t_star]))


def incremental_nb(nb, t: int, t_prime: int) -> np.ndarray:
    """Per-simulation net-benefit difference between two treatment columns."""
    nb = _as_matrix(nb, "nb")
    n_t = nb.shape[1]
    for idx in (t, t_prime):
        if not 0 <= idx < n_t:
            raise ValueError(f"treatment index {idx} out of range (T={n_t})")
    if t == t_prime:
        raise ValueError(f"treatment indices must differ, got t=t'={t}")
    return nb[:, t] - nb[:, t_prime]


def current_optimum(nb) -> tuple[int, float]:
    """Treatment with the highest mean net benefit and that mean.

    Ties are broken by the lowest treatment index so reports are
    reproducible.
    """
    nb = _as_matrix(nb, "nb")
    means = nb.mean(axis=0)
    idx = int(np.argmax(means))
    return idx, float(means[idx])
