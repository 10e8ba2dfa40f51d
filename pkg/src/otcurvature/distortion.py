"""Generalized distortion coefficients and their comparison solutions.

All integration happens in scaled time.  For a coefficient ``kappa`` on
``[0, theta]`` let ``c(tau) = theta^2 kappa(theta tau)`` on ``[0, 1]`` and solve
``w'' = -c w`` with ``w(0) = 0``, ``w'(0) = 1``.  Then
``sin_kappa(s) = theta w(s / theta)`` and ``sigma^(t) = w(t) / w(1)``.  This form
keeps ``theta -> 0`` regular: ``c -> 0`` and ``sigma^(t) -> t``.

Coefficients may be batched: ``theta`` and sampled values can carry leading
axes, which is how one call handles every particle of a flow.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import UnboundedComparisonError

DEFAULT_STEPS = 4096
POSITIVITY_FLOOR = 1e-9  # relative to max |w| on the grid


class KappaFunction:
    """A coefficient ``kappa`` on ``[0, theta]`` stored through its scaled form.

    Use the constructors :meth:`constant`, :meth:`from_function` and
    :meth:`from_samples`.  ``scaled(tau)`` returns ``theta^2 kappa(theta tau)``
    with shape ``batch + tau.shape``.
    """

    def __init__(
        self,
        theta,
        scaled: Callable[[np.ndarray], np.ndarray],
        grid: np.ndarray | None = None,
        orientation: str = "+",
        rescalable: Callable[[float], "KappaFunction"] | None = None,
    ):
        self.theta = np.asarray(theta, dtype=float)
        if np.any(self.theta < 0):
            raise ValueError("theta must be >= 0")
        self._scaled = scaled
        self.grid = grid  # native sample grid in tau, if any
        self.orientation = orientation
        self._rescale = rescalable

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return self.theta.shape

    def scaled(self, tau) -> np.ndarray:
        tau = np.asarray(tau, dtype=float)
        out = np.asarray(self._scaled(tau), dtype=float)
        return np.broadcast_to(out, self.batch_shape + tau.shape)

    def __call__(self, s) -> np.ndarray:
        """kappa(s) for s in [0, theta] (unbatched theta only)."""
        th = float(self.theta)
        if th == 0:
            raise ValueError("kappa on a zero-length domain has no pointwise values")
        return self.scaled(np.asarray(s, dtype=float) / th) / th**2

    # constructors -----------------------------------------------------------
    @classmethod
    def constant(cls, K, theta) -> "KappaFunction":
        theta = np.asarray(theta, dtype=float)
        K = np.asarray(K, dtype=float)
        c = K * theta**2

        def scaled(tau):
            return _expand(c, np.ndim(tau)) * np.ones(np.shape(tau))

        return cls(np.broadcast_to(theta, c.shape), scaled, rescalable=lambda th: cls.constant(K, th))

    @classmethod
    def from_function(cls, f: Callable[[np.ndarray], np.ndarray], theta: float) -> "KappaFunction":
        """``f`` is kappa as a function of arclength ``s in [0, theta]``."""
        theta = float(theta)
        return cls(theta, lambda tau: theta**2 * np.asarray(f(theta * tau), dtype=float),
                   rescalable=lambda th: cls.from_function(f, th))

    @classmethod
    def from_samples(cls, tau: np.ndarray, scaled_values: np.ndarray, theta) -> "KappaFunction":
        """Linear interpolation of ``theta^2 kappa(theta tau)`` given on a ``tau`` grid.

        Values beyond the sampled range are clamped to the end samples.
        """
        tau = np.asarray(tau, dtype=float)
        vals = np.asarray(scaled_values, dtype=float)
        theta = np.broadcast_to(np.asarray(theta, dtype=float), vals.shape[:-1])

        def scaled(q):
            return _interp_rows(tau, vals, q)

        return cls(theta, scaled, grid=tau)

    # derived coefficients -----------------------------------------------------
    def reversed(self) -> "KappaFunction":
        """``kappa^-(s) = kappa(theta - s)``."""
        flip = "-" if self.orientation == "+" else "+"
        return KappaFunction(self.theta, lambda tau: self._scaled(1.0 - np.asarray(tau)), self.grid, flip)

    def combine(self, K, p_prime: float) -> "KappaFunction":
        """The comparison coefficient ``(K - kappa) / p'``."""
        K = np.asarray(K, dtype=float)
        th2 = self.theta**2
        base = self._scaled

        def scaled(tau):
            tau = np.asarray(tau, dtype=float)
            kk = _expand(K * th2, tau.ndim)
            return (kk - base(tau)) / p_prime

        return KappaFunction(self.theta, scaled, self.grid, self.orientation)

    def with_theta(self, theta) -> "KappaFunction":
        if np.allclose(theta, self.theta, rtol=0, atol=0):
            return self
        if self._rescale is None:
            raise ValueError("sampled kappa is tied to its own domain length")
        return self._rescale(theta)


def _expand(a, nd: int) -> np.ndarray:
    """Append ``nd`` singleton axes so a batch array broadcasts against a time array."""
    a = np.asarray(a, dtype=float) if not isinstance(a, np.ndarray) else a
    return a.reshape(a.shape + (1,) * nd)


def _interp_rows(grid: np.ndarray, vals: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Row-wise linear interpolation on a shared increasing grid, clamped."""
    q = np.clip(np.asarray(q, dtype=float), grid[0], grid[-1])
    idx = np.clip(np.searchsorted(grid, q, side="right") - 1, 0, grid.shape[0] - 2)
    frac = (q - grid[idx]) / (grid[idx + 1] - grid[idx])
    return vals[..., idx] * (1.0 - frac) + vals[..., idx + 1] * frac


# ---------------------------------------------------------------------------
# the sin_kappa solve


@dataclass(frozen=True, eq=False)
class SinSolution:
    """Scaled solution ``w`` on a uniform tau grid with its derivative."""

    tau: np.ndarray
    w: np.ndarray  # (..., m+1)
    dw: np.ndarray
    theta: np.ndarray

    @property
    def positive(self) -> np.ndarray:
        floor = POSITIVITY_FLOOR * np.max(np.abs(self.w), axis=-1)
        return np.all(self.w[..., 1:] > floor[..., None], axis=-1)

    def value(self, t) -> np.ndarray:
        """Cubic Hermite interpolation of w at scaled times t."""
        t = np.asarray(t, dtype=float)
        m = self.tau.shape[0] - 1
        h = 1.0 / m
        idx = np.clip(np.floor(t * m).astype(int), 0, m - 1)
        u = t * m - idx
        h00 = (1 + 2 * u) * (1 - u) ** 2
        h10 = u * (1 - u) ** 2
        h01 = u**2 * (3 - 2 * u)
        h11 = u**2 * (u - 1)
        w, dw = self.w, self.dw
        return h00 * w[..., idx] + h10 * h * dw[..., idx] + h01 * w[..., idx + 1] + h11 * h * dw[..., idx + 1]


def solve_sin(kappa: KappaFunction, steps: int | None = None) -> SinSolution:
    """RK4 for ``w'' = -c(tau) w`` on [0, 1]; batched over kappa's leading axes.

    Sampled coefficients integrate on their own grid, others on DEFAULT_STEPS.
    """
    if steps is None:
        steps = kappa.grid.shape[0] - 1 if kappa.grid is not None else DEFAULT_STEPS
    tau = np.linspace(0.0, 1.0, steps + 1)
    h = 1.0 / steps
    c_grid = kappa.scaled(tau)
    c_mid = kappa.scaled(tau[:-1] + 0.5 * h)
    batch = kappa.batch_shape
    w = np.zeros(batch + (steps + 1,))
    dw = np.zeros(batch + (steps + 1,))
    dw[..., 0] = 1.0
    a = np.zeros(batch)
    b = np.ones(batch)
    for i in range(steps):
        c0, cm, c1 = c_grid[..., i], c_mid[..., i], c_grid[..., i + 1]
        k1a, k1b = b, -c0 * a
        k2a, k2b = b + 0.5 * h * k1b, -cm * (a + 0.5 * h * k1a)
        k3a, k3b = b + 0.5 * h * k2b, -cm * (a + 0.5 * h * k2a)
        k4a, k4b = b + h * k3b, -c1 * (a + h * k3a)
        a = a + (h / 6.0) * (k1a + 2 * k2a + 2 * k3a + k4a)
        b = b + (h / 6.0) * (k1b + 2 * k2b + 2 * k3b + k4b)
        w[..., i + 1] = a
        dw[..., i + 1] = b
    return SinSolution(tau, w, dw, kappa.theta)


def sin_kappa(kappa: KappaFunction, s, steps: int | None = None) -> np.ndarray:
    """The generalized sine ``v'' + kappa v = 0``, ``v(0) = 0``, ``v'(0) = 1`` at arclength s."""
    s = np.asarray(s, dtype=float)
    th = kappa.theta
    if np.any(th == 0):
        if np.any(s != 0):
            raise ValueError("s must be 0 on a zero-length domain")
        return np.zeros(np.broadcast_shapes(th.shape, s.shape))
    if np.any(s < 0) or np.any(s > th * (1 + 1e-12)):
        raise ValueError("s outside [0, theta]")
    sol = solve_sin(kappa, steps)
    return th * sol.value(s / th)


@dataclass(frozen=True)
class DistortionValue:
    value: float
    infinite: bool = False

    def __float__(self) -> float:
        return float("inf") if self.infinite else float(self.value)


def sigma_array(kappa: KappaFunction, t, steps: int | None = None) -> np.ndarray:
    """``sigma^(t)`` for every batch member; shape ``batch + t.shape``, inf where infinite."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(t > 1):
        raise ValueError("t must lie in [0, 1]")
    sol = solve_sin(kappa, steps)
    vals = sol.value(t) / _expand(sol.w[..., -1], t.ndim)
    pos = _expand(sol.positive, t.ndim)
    return np.where(pos, vals, np.inf)


def sigma(kappa: KappaFunction, t: float, theta: float | None = None, steps: int | None = None) -> DistortionValue:
    """Scalar distortion coefficient of an unbatched kappa."""
    if theta is not None:
        kappa = kappa.with_theta(theta)
    val = float(sigma_array(kappa, float(t), steps))
    return DistortionValue(np.inf, True) if np.isinf(val) else DistortionValue(val)


def sigma_const_array(K, t, theta) -> np.ndarray:
    """Closed-form ``sigma_{K,1}^(t)(theta)``, vectorized, inf where infinite."""
    K, t, theta = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (K, t, theta)))
    kt2 = K * theta**2
    out = np.array(t, dtype=float, copy=True)
    pos = (kt2 > 0) & (kt2 < np.pi**2)
    neg = kt2 < 0
    r = np.sqrt(np.abs(kt2))
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(pos, np.sin(t * r) / np.sin(np.where(pos, r, 1.0)), out)
        out = np.where(neg, np.sinh(t * r) / np.sinh(np.where(neg, r, 1.0)), out)
    return np.where(kt2 >= np.pi**2, np.inf, out)


def sigma_const(K: float, t: float, theta: float) -> DistortionValue:
    val = float(sigma_const_array(K, t, theta))
    return DistortionValue(np.inf, True) if np.isinf(val) else DistortionValue(val)


# ---------------------------------------------------------------------------
# Green function and comparison solutions


def green(s, t) -> np.ndarray:
    s, t = np.asarray(s, dtype=float), np.asarray(t, dtype=float)
    return np.where(t <= s, (1.0 - s) * t, s * (1.0 - t))


def green_solution(w0: float, w1: float, u: np.ndarray, t) -> np.ndarray:
    """``(1-t) w0 + t w1 + int_0^1 g(s, t) u(s) ds`` with u on a uniform grid (trapezoid)."""
    u = np.asarray(u, dtype=float)
    s = np.linspace(0.0, 1.0, u.shape[-1])
    t = np.asarray(t, dtype=float)
    kern = green(s, t[..., None]) * u
    return (1.0 - t) * w0 + t * w1 + np.trapezoid(kern, s, axis=-1)


def bvp_solution(kappa: KappaFunction, v0, v1, t, steps: int | None = None) -> np.ndarray:
    """Solution of ``v'' + c(t) v = 0`` with ``v(0) = v0``, ``v(1) = v1``.

    Built from forward and reversed distortion coefficients.  Raises
    UnboundedComparisonError when either coefficient is infinite.
    """
    t = np.asarray(t, dtype=float)
    fwd = sigma_array(kappa, t, steps)
    bwd = sigma_array(kappa.reversed(), 1.0 - t, steps)
    if np.any(np.isinf(fwd)) or np.any(np.isinf(bwd)):
        raise UnboundedComparisonError("distortion coefficient is infinite")
    return bwd * _expand(v0, t.ndim) + fwd * _expand(v1, t.ndim)


@dataclass(frozen=True)
class ComparisonResult:
    passed: bool
    margin: float
    vacuous: bool = False


def comparison_holds(u: np.ndarray, kappa: KappaFunction, tol: float = 1e-8) -> ComparisonResult:
    """Does a sampled subsolution u dominate the BVP solution with the same boundary values?"""
    u = np.asarray(u, dtype=float)
    if np.any(u <= 0):
        raise ValueError("u must be positive")
    tau = np.linspace(0.0, 1.0, u.shape[-1])
    try:
        v = bvp_solution(kappa, u[0], u[-1], tau)
    except UnboundedComparisonError:
        return ComparisonResult(True, float("inf"), True)
    margin = float(np.min(u - v))
    return ComparisonResult(margin >= -tol, margin)
