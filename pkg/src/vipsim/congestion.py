"""Transport-layer buffering, admission control and virtual queues (drift-plus-penalty)."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class UtilityFunction:
    """A non-decreasing concave utility g with an optional derivative.

    Shape is checked on a grid over ``(domain_floor * upper, upper]`` at
    construction.  Subclasses may override :meth:`argmax_penalized` with a
    closed form; the default is a vectorized golden-section search.
    """

    name = "custom"

    def __init__(self, g, dg=None, upper: float = 1.0, domain_floor: float = 1e-9, check: bool = True):
        self.g = g
        self.dg = dg
        self.domain_floor = domain_floor
        if check:
            self.check_shape(upper)

    def __call__(self, x):
        return self.g(x)

    def check_shape(self, upper: float, points: int = 2001) -> None:
        lo = self.domain_floor * upper
        x = np.unique(np.concatenate([np.geomspace(lo, upper, points), np.linspace(lo, upper, points)]))
        y = np.asarray(self.g(x), dtype=float)
        scale = max(1.0, float(np.max(np.abs(y[np.isfinite(y)]))))
        if np.any(np.diff(y) < -1e-12 * scale):
            raise ValueError(f"utility {self.name} is not non-decreasing on (0, {upper}]")
        slopes = np.diff(y) / np.diff(x)
        if np.any(np.diff(slopes) > 1e-9 * np.maximum(1.0, np.abs(slopes[:-1]))):
            raise ValueError(f"utility {self.name} is not concave on (0, {upper}]")

    def argmax_penalized(self, W: float, Y, upper, tol: float = 1e-9):
        """argmax over gamma in [floor*upper, upper] of W*g(gamma) - Y*gamma, elementwise."""
        Y = np.asarray(Y, dtype=float)
        hi = np.broadcast_to(np.asarray(upper, dtype=float), Y.shape).astype(float)
        lo = self.domain_floor * hi
        a, b = lo.copy(), hi.copy()
        stop = tol * hi

        def obj(x):
            return W * np.asarray(self.g(x), dtype=float) - Y * x

        c = b - GOLDEN * (b - a)
        d = a + GOLDEN * (b - a)
        fc, fd = obj(c), obj(d)
        while np.any(b - a > stop):
            left = fc >= fd  # maximum lies in [a, d]
            b = np.where(left, d, b)
            a = np.where(left, a, c)
            c_new = b - GOLDEN * (b - a)
            d_new = a + GOLDEN * (b - a)
            c, d = np.where(left, c_new, d), np.where(left, c, d_new)
            fc, fd = obj(c), obj(d)
        x = (a + b) / 2
        # endpoints are candidates too (monotone objectives)
        cand = np.stack([lo, x, hi])
        vals = np.stack([obj(lo), obj(x), obj(hi)])
        return np.take_along_axis(cand, np.argmax(vals, axis=0)[None], axis=0)[0]


class AlphaFairUtility(UtilityFunction):
    """alpha-fair utility; alpha = 2 gives g(x) = -1/x."""

    def __init__(self, alpha: float = 2.0, domain_floor: float = 1e-9):
        if alpha <= 0:
            raise ValueError("alpha must be positive")
        self.alpha = alpha
        self.name = f"alpha_fair_{alpha:g}"
        if alpha == 1:
            g, dg = np.log, (lambda x: 1.0 / np.asarray(x))
        else:
            g = lambda x: np.asarray(x, dtype=float) ** (1 - alpha) / (1 - alpha)  # noqa: E731
            dg = lambda x: np.asarray(x, dtype=float) ** (-alpha)  # noqa: E731
        super().__init__(g, dg, upper=1.0, domain_floor=domain_floor)

    def argmax_penalized(self, W, Y, upper, tol: float = 1e-9):
        # stationary point of W*g(x) - Y*x solves x^-alpha = Y/W
        Y = np.asarray(Y, dtype=float)
        hi = np.broadcast_to(np.asarray(upper, dtype=float), Y.shape)
        with np.errstate(divide="ignore"):
            interior = (W / Y) ** (1.0 / self.alpha)
        return np.clip(np.where(Y > 0, interior, hi), self.domain_floor * hi, hi)


def make_utility(name: str = "alpha_fair_2") -> UtilityFunction:
    if name == "alpha_fair_2":
        return AlphaFairUtility(2.0)
    if name.startswith("alpha_fair_"):
        return AlphaFairUtility(float(name.rsplit("_", 1)[1]))
    if name == "log":
        return AlphaFairUtility(1.0)
    raise ValueError(f"unknown utility {name!r}")


@dataclass
class CongestionState:
    Q: np.ndarray  # transport-layer VIP counts
    Y: np.ndarray  # virtual queues
    q_max: np.ndarray
    alpha_max: np.ndarray
    W: float

    def __post_init__(self):
        if self.W <= 0:
            raise ValueError("W must be positive")
        if np.any(self.alpha_max <= 0):
            raise ValueError("alpha_max must be positive")

    @classmethod
    def initial(cls, shape, W: float, alpha_max, q_max) -> "CongestionState":
        alpha_max = np.broadcast_to(np.asarray(alpha_max, dtype=float), shape).copy()
        q_max = np.broadcast_to(np.asarray(q_max, dtype=float), shape).copy()
        return cls(np.zeros(shape), np.zeros(shape), q_max, alpha_max, float(W))


def default_alpha_max(lam: float, probabilities, factor: float = 10.0) -> np.ndarray:
    """ceil(factor * lambda * p_k), at least 1 so the bound stays positive."""
    return np.maximum(1.0, np.ceil(factor * lam * np.asarray(probabilities) - 1e-12))


def admit_vips(Q, Y, V, alpha_max):
    """alpha = min(Q, alpha_max) where Y > V (strictly), else 0."""
    Q, Y, V = (np.asarray(x, dtype=float) for x in (Q, Y, V))
    return np.where(Y > V, np.minimum(Q, alpha_max), 0.0)


def choose_auxiliary(Y, W: float, alpha_max, utility: UtilityFunction | None = None):
    """gamma = argmax over [0, alpha_max] of W*g(gamma) - Y*gamma."""
    if W <= 0:
        raise ValueError("W must be positive")
    utility = utility or AlphaFairUtility(2.0)
    return utility.argmax_penalized(W, Y, alpha_max)


def transport_step(Q, alpha, arrivals, q_max):
    """Q(t+1) = min((Q - alpha)^+ + A, Q_max); also returns the clipped (dropped) amount."""
    filled = np.maximum(np.asarray(Q, dtype=float) - alpha, 0.0) + arrivals
    new = np.minimum(filled, q_max)
    return new, filled - new


def virtual_step(Y, alpha, gamma):
    """Y(t+1) = (Y - alpha)^+ + gamma."""
    return np.maximum(np.asarray(Y, dtype=float) - alpha, 0.0) + gamma


def g_max(utility: UtilityFunction, alpha_max) -> float:
    """sum over (n, k) of g(alpha_max); warns when negative."""
    value = float(np.sum(utility(np.asarray(alpha_max, dtype=float))))
    if value < 0:
        warnings.warn(f"G_max = {value:.6g} is negative for utility {utility.name}", stacklevel=2)
    return value
