"""Decay-exponent fits on return series and the predicted-exponent table.

Three decay models, each reduced to a straight line by a coordinate change:

* ``power``:   phi(n) ~ n^(-g)          -> slope of -log phi vs log n
* ``exp-pow``: phi(n) ~ exp(-c n^g)     -> slope of log(-log phi) vs log n
* ``exp-plg``: phi(n) ~ exp(-c log^g n) -> slope of log(-log phi) vs log log n

Predictions come from a fixed coverage table keyed by the group's background
return-probability class and the moment-scale family; pairs outside the table
return an explicit no-prediction record rather than guessing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import FitRefusalError, UsageError
from .groups import Group
from .scales import MomentScale, gamma_alpha
from .convolution import ReturnSeries

_MODELS = ("power", "exp-pow", "exp-plg")


@dataclass(frozen=True)
class GroupProfile:
    """Background decay class of the group's finite-second-moment walks."""

    kind: str
    family: str               # polynomial | stretched | exp-over-pi
    degree: int | None = None     # D for polynomial
    gamma: float | None = None    # exponent for stretched

    def __post_init__(self):
        if self.family == "polynomial" and (self.degree is None or self.degree < 1):
            raise UsageError("polynomial profile needs a positive integer degree")
        if self.family == "stretched" and not (self.gamma and 0 < self.gamma < 1):
            raise UsageError("stretched profile needs gamma in (0, 1)")


def group_profile(group: Group) -> GroupProfile:
    """Background profile per kind: lattice(d) and heisenberg are polynomial
    (degrees d and 4), lamplighter(d) is stretched with gamma = d/(d+2), sol is
    stretched with gamma = 1/3, free groups decay exponentially."""
    if group.kind == "lattice":
        return GroupProfile("lattice", "polynomial", degree=group.d)
    if group.kind == "heisenberg3":
        return GroupProfile("heisenberg3", "polynomial", degree=4)
    if group.kind == "lamplighter":
        return GroupProfile("lamplighter", "stretched",
                            gamma=group.d / (group.d + 2.0))
    if group.kind == "sol":
        return GroupProfile("sol", "stretched", gamma=1.0 / 3.0)
    return GroupProfile("free", "exp-over-pi")


@dataclass(frozen=True)
class FitResult:
    model: str
    exponent: float
    half_width: float
    n_range: tuple
    r_squared: float
    points: int

    def contains(self, value: float) -> bool:
        return abs(self.exponent - value) <= self.half_width


def _transform(model: str, ns: np.ndarray, vals: np.ndarray):
    if model == "power":
        return np.log(ns), -np.log(vals)
    if np.any(vals >= 1.0):
        raise FitRefusalError("exp-model fit needs values below 1")
    if model == "exp-pow":
        return np.log(ns), np.log(-np.log(vals))
    if model == "exp-plg":
        return np.log(np.log(ns)), np.log(-np.log(vals))
    raise UsageError(f"unknown model {model!r}; choose from {_MODELS}")


def fit_decay(series: ReturnSeries, model: str, n_range: tuple,
              min_points: int = 5, max_bracket_width: float = 0.1) -> FitResult:
    """Least-squares decay exponent on the model's straightened coordinates.

    Point values are geometric means sqrt(lower*upper); exact-method records
    whose bracket is wider than ``max_bracket_width`` (relative) trigger a
    refusal, and Monte Carlo records with nonpositive estimates are skipped.
    """
    lo, hi = n_range
    ns, vals = [], []
    dropped = 0
    for rec in series.records:
        if not lo <= rec.n <= hi:
            continue
        if rec.lower <= 0.0:
            dropped += 1
            continue
        if rec.method == "exact":
            rel = (rec.upper - rec.lower) / rec.lower
            if rel > max_bracket_width:
                raise FitRefusalError(
                    f"bracket too wide at n={rec.n}: relative width {rel:.3g} "
                    f"> {max_bracket_width}")
        ns.append(rec.n)
        vals.append(math.sqrt(rec.lower * rec.upper))
    if len(ns) < min_points:
        raise FitRefusalError(
            f"only {len(ns)} usable points in range {n_range} "
            f"({dropped} dropped), need {min_points}")
    x, y = _transform(model, np.asarray(ns, dtype=float), np.asarray(vals))
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    dof = max(len(x) - 2, 1)
    sxx = float(((x - x.mean()) ** 2).sum())
    stderr = math.sqrt(float(resid @ resid) / dof / sxx) if sxx > 0 else math.inf
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else 1.0
    return FitResult(model, float(slope), max(2.0 * stderr, 1e-12),
                     (lo, hi), r2, len(ns))


@dataclass(frozen=True)
class Prediction:
    model: str | None
    exponent: float | None
    interval: tuple | None
    rule: str

    @property
    def covered(self) -> bool:
        return self.model is not None


NO_PREDICTION = Prediction(None, None, None, "no prediction for this pair")


def predicted_exponent(profile: GroupProfile, rho: MomentScale) -> Prediction:
    """Predicted decay invariant for a (group profile, moment scale) pair."""
    fam = profile.family
    if fam == "polynomial":
        if rho.family == "power":
            (alpha,) = rho.params
            return Prediction("power", profile.degree / alpha, None,
                              "polynomial growth: power exponent D/alpha")
        if rho.family == "explog":
            _, alpha = rho.params
            return Prediction("exp-plg", 1.0 / alpha, None,
                              "polynomial growth: exp-plg exponent 1/alpha")
        if rho.family == "log":
            (alpha,) = rho.params
            if alpha > 1:
                return Prediction("exp-pow", None,
                                  (1.0 / (alpha + 1.0), 1.0 / alpha),
                                  "polynomial growth: exp-pow bracketed for "
                                  "log-scale moments")
            return NO_PREDICTION
    if fam == "stretched":
        if rho.family == "power":
            (alpha,) = rho.params
            return Prediction("exp-pow", gamma_alpha(profile.gamma, alpha), None,
                              "stretched-exponential interpolation gamma_alpha")
        if rho.family in ("explog", "log"):
            return Prediction("exp-pow", 1.0, None,
                              "slowly varying moments keep exp-pow at 1")
    if fam == "exp-over-pi" and rho.family == "power":
        return Prediction("exp-pow", 1.0, None,
                          "exponential background decay dominates any "
                          "power moment")
    return NO_PREDICTION
