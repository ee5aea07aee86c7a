"""Scalar penalties, their proximal maps and derivative data.

Every family is described by a :class:`PenaltySpec`.  The proximal map
``prox(spec, sigma)`` solves ``argmin_{x >= 0} 0.5 (x - sigma)^2 + P(x)`` and is
vectorised over ``sigma``; it is the singular-value shrinkage rule of the
matching spectral estimator.
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import AtKinkError, InvalidSpecError, NegativeInputError, NonConvergenceError

KINK_RTOL = 1e-10
BRIDGE_TOL = 1e-12
BRIDGE_MAXITER = 200


class Family(str, enum.Enum):
    NUCLEAR = "nuclear"
    SCAD = "scad"
    MCPLUS = "mcplus"
    LOG = "log"
    FIRM = "firm"
    BRIDGE = "bridge"
    RANK = "rank"


_ALIASES = {
    "lasso": Family.NUCLEAR,
    "soft": Family.NUCLEAR,
    "mcp": Family.MCPLUS,
    "mc+": Family.MCPLUS,
    "l0": Family.RANK,
    "lq": Family.BRIDGE,
}


def parse_family(name) -> Family:
    if isinstance(name, Family):
        return name
    key = str(name).strip().lower()
    if key in _ALIASES:
        return _ALIASES[key]
    try:
        return Family(key)
    except ValueError:
        raise InvalidSpecError(f"unknown penalty family {name!r}") from None


@dataclass(frozen=True)
class PenaltySpec:
    """A penalty family together with its parameters.

    ``a`` is used by SCAD only, ``gamma`` by MC+, Log and Firm, ``q`` by Bridge.
    Bridge with ``q == 0`` behaves exactly like the rank penalty.
    """

    family: Family
    theta: float = 0.0
    a: Optional[float] = None
    gamma: Optional[float] = None
    q: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "family", parse_family(self.family))
        object.__setattr__(self, "theta", float(self.theta))
        validate(self)

    # -- convenience constructors ------------------------------------------
    @classmethod
    def nuclear(cls, theta):
        return cls(Family.NUCLEAR, theta)

    @classmethod
    def scad(cls, theta, a=3.7):
        return cls(Family.SCAD, theta, a=a)

    @classmethod
    def mcplus(cls, theta, gamma=2.0):
        return cls(Family.MCPLUS, theta, gamma=gamma)

    @classmethod
    def log(cls, theta, gamma=0.01):
        return cls(Family.LOG, theta, gamma=gamma)

    @classmethod
    def firm(cls, theta, gamma):
        return cls(Family.FIRM, theta, gamma=gamma)

    @classmethod
    def bridge(cls, theta, q):
        return cls(Family.BRIDGE, theta, q=q)

    @classmethod
    def rank(cls, theta):
        return cls(Family.RANK, theta)

    def with_theta(self, theta) -> "PenaltySpec":
        return PenaltySpec(self.family, theta, a=self.a, gamma=self.gamma, q=self.q)

    @property
    def kind(self) -> Family:
        """Family after folding Bridge(q=0) into Rank."""
        if self.family is Family.BRIDGE and self.q == 0:
            return Family.RANK
        return self.family

    @property
    def label(self) -> str:
        if self.family is Family.SCAD:
            return f"scad_a{self.a:g}"
        if self.family in (Family.MCPLUS, Family.LOG, Family.FIRM):
            return f"{self.family.value}_gamma{self.gamma:g}"
        if self.family is Family.BRIDGE:
            return f"bridge_q{self.q:g}"
        return self.family.value

    # -- flat key/value form used by config files and the CLI ---------------
    def to_dict(self) -> dict:
        out = {"penalty": self.family.value, "theta": self.theta}
        for key in ("a", "gamma", "q"):
            val = getattr(self, key)
            if val is not None:
                out[key] = val
        return out

    @classmethod
    def from_dict(cls, d) -> "PenaltySpec":
        fam = d.get("penalty", d.get("family"))
        if fam is None:
            raise InvalidSpecError("missing 'penalty' key")

        def num(key):
            val = d.get(key)
            return None if val is None or val == "" else float(val)

        family = parse_family(fam)
        kwargs = {k: num(k) for k in ("a", "gamma", "q")}
        # fill in the defaults used throughout the simulations
        if family is Family.SCAD and kwargs["a"] is None:
            kwargs["a"] = 3.7
        if family is Family.MCPLUS and kwargs["gamma"] is None:
            kwargs["gamma"] = 2.0
        if family is Family.LOG and kwargs["gamma"] is None:
            kwargs["gamma"] = 0.01
        return cls(family, num("theta") or 0.0, **kwargs)


def validate(spec: PenaltySpec) -> None:
    theta = spec.theta
    if not math.isfinite(theta) or theta < 0:
        raise InvalidSpecError(f"theta must be finite and >= 0, got {theta}")
    fam = spec.family
    if fam is Family.SCAD:
        if spec.a is None or not spec.a > 2:
            raise InvalidSpecError("SCAD requires a > 2")
    elif fam is Family.MCPLUS:
        if spec.gamma is None or not spec.gamma > 1:
            raise InvalidSpecError("MC+ requires gamma > 1")
    elif fam is Family.FIRM:
        if spec.gamma is None or not spec.gamma > theta:
            raise InvalidSpecError("Firm requires gamma > theta")
    elif fam is Family.LOG:
        if spec.gamma is None or not spec.gamma > 0:
            raise InvalidSpecError("Log requires gamma > 0")
    elif fam is Family.BRIDGE:
        if spec.q is None or not 0 <= spec.q < 1:
            raise InvalidSpecError("Bridge requires 0 <= q < 1")


def _as_nonneg(sigma):
    arr = np.asarray(sigma, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise NegativeInputError("sigma must be nonnegative")
    return arr


def _out(arr, like):
    return float(arr) if np.ndim(like) == 0 else arr


def _log_scale(spec):
    return spec.theta / math.log1p(spec.gamma)


# ---------------------------------------------------------------------------
# penalty values
# ---------------------------------------------------------------------------

def penalty_value(spec: PenaltySpec, sigma):
    """P_theta(sigma), vectorised over sigma."""
    x = _as_nonneg(sigma)
    th = spec.theta
    kind = spec.kind
    if kind is Family.NUCLEAR:
        val = th * x
    elif kind is Family.SCAD:
        a = spec.a
        mid = (-x**2 + 2 * a * th * x - th**2) / (2 * (a - 1))
        val = np.where(x <= th, th * x, np.where(x <= a * th, mid, (a + 1) * th**2 / 2))
    elif kind is Family.MCPLUS:
        g = spec.gamma
        if th == 0:
            val = np.zeros_like(x)
        else:
            val = np.where(x <= g * th, th * (x - x**2 / (2 * th * g)), g * th**2 / 2)
    elif kind is Family.FIRM:
        g = spec.gamma
        val = np.where(x <= g, th * (x - x**2 / (2 * g)), g * th / 2)
    elif kind is Family.LOG:
        val = _log_scale(spec) * np.log1p(spec.gamma * x)
    elif kind is Family.BRIDGE:
        val = th * np.where(x > 0, x ** spec.q, 0.0)
    else:  # rank
        val = th * (x != 0)
    return _out(np.asarray(val, dtype=float), sigma)


def objective(spec: PenaltySpec, x, sigma):
    """0.5 (x - sigma)^2 + P_theta(x); the function the prox minimises."""
    return 0.5 * (np.asarray(x, float) - sigma) ** 2 + penalty_value(spec, x)


# ---------------------------------------------------------------------------
# discontinuity data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DiscontinuityInfo:
    location: float
    jump_height: float


def bridge_constant(q: float) -> float:
    """c_q; the Bridge prox jumps at c_q * theta^(1/(2-q))."""
    b = 2.0 * (1.0 - q)
    if q == 1:
        return 1.0
    return b ** (1.0 / (2 - q)) + q * b ** ((q - 1.0) / (2 - q))


def bridge_jump(theta: float, q: float) -> DiscontinuityInfo:
    location = bridge_constant(q) * theta ** (1.0 / (2 - q))
    height = (2.0 * (1.0 - q) * theta) ** (1.0 / (2 - q))
    return DiscontinuityInfo(location, height)


def discontinuity(spec: PenaltySpec) -> Optional[DiscontinuityInfo]:
    """Jump data of the prox, or None for continuous families."""
    kind = spec.kind
    if spec.theta == 0:
        return None
    if kind is Family.RANK:
        t = math.sqrt(2 * spec.theta)
        return DiscontinuityInfo(t, t)
    if kind is Family.BRIDGE:
        return bridge_jump(spec.theta, spec.q)
    return None


def kink_points(spec: PenaltySpec) -> tuple:
    """Points in (0, inf) where the prox is not differentiable."""
    th = spec.theta
    if th == 0:
        return ()
    kind = spec.kind
    if kind is Family.NUCLEAR:
        pts = (th,)
    elif kind is Family.SCAD:
        pts = (th, 2 * th, spec.a * th)
    elif kind is Family.MCPLUS:
        pts = (th, spec.gamma * th)
    elif kind is Family.FIRM:
        pts = (th, spec.gamma)
    elif kind is Family.LOG:
        pts = (_log_scale(spec) * spec.gamma,)
    else:
        pts = (discontinuity(spec).location,)
    return tuple(sorted(set(pts)))


def near_kink(spec: PenaltySpec, sigma, rtol=KINK_RTOL):
    x = np.asarray(sigma, dtype=float)
    hit = np.zeros(x.shape, dtype=bool)
    for k in kink_points(spec):
        hit |= np.abs(x - k) <= rtol * max(1.0, k)
    return hit


# ---------------------------------------------------------------------------
# proximal maps
# ---------------------------------------------------------------------------

def _bridge_root(sigma, theta, q):
    """Largest root of x - sigma + q theta x^(q-1) = 0 by Newton from x = sigma."""
    x = sigma.copy()
    for _ in range(BRIDGE_MAXITER):
        g = x - sigma + q * theta * x ** (q - 1)
        dg = 1.0 + q * theta * (q - 1) * x ** (q - 2)
        step = g / dg
        x = x - step
        if np.all(np.abs(step) <= BRIDGE_TOL * np.maximum(1.0, np.abs(x))):
            return x
    raise NonConvergenceError(
        f"bridge prox did not converge in {BRIDGE_MAXITER} iterations (theta={theta}, q={q})"
    )


def _log_root(sigma, spec):
    """Largest real root of gamma x^2 + (1 - gamma sigma) x + (c gamma - sigma) = 0.

    Returns nan where there is no real root.
    """
    g = spec.gamma
    c = _log_scale(spec)
    b = 1.0 - g * sigma
    cc = c * g - sigma
    disc = b * b - 4.0 * g * cc
    root = np.full(sigma.shape, np.nan)
    ok = disc >= 0
    sq = np.sqrt(np.where(ok, disc, 0.0))
    # stable branch selection for (-b + sqrt(disc)) / (2 gamma)
    pos = ok & (b > 0)
    neg = ok & ~(b > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        root[pos] = -2.0 * cc[pos] / (b[pos] + sq[pos])
        root[neg] = (-b[neg] + sq[neg]) / (2.0 * g)
    return root


def prox(spec: PenaltySpec, sigma):
    """Global minimiser over x >= 0 of 0.5 (x - sigma)^2 + P_theta(x).

    At the Bridge/Rank threshold the nonzero branch is returned.
    """
    x = _as_nonneg(sigma)
    th = spec.theta
    kind = spec.kind
    if th == 0:
        return _out(x.astype(float, copy=True), sigma)
    if kind is Family.NUCLEAR:
        out = np.maximum(x - th, 0.0)
    elif kind is Family.SCAD:
        a = spec.a
        out = np.where(
            x <= 2 * th,
            np.maximum(x - th, 0.0),
            np.where(x <= a * th, ((a - 1) * x - a * th) / (a - 2), x),
        )
    elif kind is Family.MCPLUS:
        g = spec.gamma
        out = np.where(
            x <= th, 0.0, np.where(x <= g * th, g * (x - th) / (g - 1), x)
        )
    elif kind is Family.FIRM:
        g = spec.gamma
        out = np.where(x <= th, 0.0, np.where(x <= g, g * (x - th) / (g - th), x))
    elif kind is Family.LOG:
        root = _log_root(x, spec)
        valid = np.isfinite(root) & (root > 0)
        safe = np.where(valid, root, 0.0)
        better = objective(spec, safe, x) <= objective(spec, 0.0, x)
        out = np.where(valid & better, safe, 0.0)
    elif kind is Family.RANK:
        out = np.where(x >= math.sqrt(2 * th), x, 0.0)
    else:
        jump = bridge_jump(th, spec.q)
        keep = x >= jump.location
        out = np.zeros_like(x)
        if np.any(keep):
            out[keep] = _bridge_root(x[keep], th, spec.q)
    return _out(np.asarray(out, dtype=float), sigma)


# ---------------------------------------------------------------------------
# derivatives
# ---------------------------------------------------------------------------

def _piecewise_linear(spec):
    """(breakpoints, slopes) for the piecewise-linear prox families."""
    th = spec.theta
    kind = spec.kind
    if kind is Family.NUCLEAR:
        return [th], [0.0, 1.0]
    if kind is Family.SCAD:
        a = spec.a
        return [th, 2 * th, a * th], [0.0, 1.0, (a - 1) / (a - 2), 1.0]
    if kind is Family.MCPLUS:
        g = spec.gamma
        return [th, g * th], [0.0, g / (g - 1), 1.0]
    if kind is Family.FIRM:
        g = spec.gamma
        return [th, g], [0.0, g / (g - th), 1.0]
    if kind is Family.RANK:
        return [math.sqrt(2 * th)], [0.0, 1.0]
    return None


def one_sided_derivative(spec: PenaltySpec, sigma, side: str = "right"):
    """Right (``side='right'``) or left derivative of the prox at sigma.

    Defined everywhere on (0, inf); at kinks the two sides differ.  At a jump
    (Bridge/Rank threshold) this is the slope of the branch on that side, not
    a derivative of the discontinuous map.
    """
    x = _as_nonneg(sigma)
    if spec.theta == 0:
        return _out(np.ones_like(x), sigma)
    pw = _piecewise_linear(spec)
    if pw is not None:
        breaks, slopes = pw
        idx = np.searchsorted(np.asarray(breaks), x, side="right" if side == "right" else "left")
        return _out(np.asarray(slopes)[idx], sigma)
    kink = kink_points(spec)[0]
    active = x >= kink if side == "right" else x > kink
    # evaluate the active branch at sigma (or at the kink itself from the right)
    val = np.asarray(prox(spec, np.where(active, np.maximum(x, kink), 0.0)), dtype=float)
    out = np.zeros_like(x)
    th = spec.theta
    if spec.kind is Family.LOG:
        c = _log_scale(spec)
        g = spec.gamma
        v = val[active]
        out[active] = 1.0 / (1.0 - c * g * g / (1.0 + g * v) ** 2)
    else:
        q = spec.q
        v = val[active]
        out[active] = 1.0 / (1.0 + th * q * (q - 1) * v ** (q - 2))
    return _out(out, sigma)


def prox_derivative(spec: PenaltySpec, sigma):
    """d prox / d sigma away from kinks; raises AtKinkError at a kink."""
    x = _as_nonneg(sigma)
    hit = near_kink(spec, x)
    if np.any(hit):
        raise AtKinkError(f"sigma within {KINK_RTOL:g} of a kink of {spec.label}: {x[hit]}")
    return one_sided_derivative(spec, sigma, "right")


# ---------------------------------------------------------------------------
# concavity / Stein applicability
# ---------------------------------------------------------------------------

def concavity_bound(spec: PenaltySpec) -> float:
    """inf over a, a' > 0 of (P'(a) - P'(a')) / (a - a')."""
    th = spec.theta
    kind = spec.kind
    if th == 0 or kind is Family.NUCLEAR:
        return 0.0
    if kind is Family.SCAD:
        return -1.0 / (spec.a - 1)
    if kind is Family.MCPLUS:
        return -1.0 / spec.gamma
    if kind is Family.FIRM:
        return -th / spec.gamma
    if kind is Family.LOG:
        # P'' = -c gamma^2 / (1 + gamma a)^2 is increasing; its infimum is the a -> 0 limit
        return -_log_scale(spec) * spec.gamma**2
    return -math.inf


def stein_applicable(spec: PenaltySpec, warn: bool = False) -> bool:
    ok = concavity_bound(spec) + 1 > 0
    if warn and not ok and spec.kind is Family.LOG:
        warnings.warn(
            f"log penalty with theta={spec.theta}, gamma={spec.gamma} violates "
            "log(1+gamma) > theta*gamma^2; Stein's lemma does not apply",
            RuntimeWarning,
            stacklevel=2,
        )
    return ok
