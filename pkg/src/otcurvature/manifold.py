"""Riemannian geometry in a single chart.

Every function accepts arbitrary leading batch axes: a point is an array of
shape ``(..., n)``, a metric ``(..., n, n)``, and so on.

Curvature storage convention
----------------------------
``riemann(x)[..., a, b, c, d]`` is ``R_abcd = <R(d_c, d_d) d_b, d_a>`` for the
standard operator ``R(X, Y) = [nabla_X, nabla_Y] - nabla_[X,Y]``.  With this
layout ``sec(X, Y) = R(X, Y, X, Y) / (|X|^2 |Y|^2 - <X, Y>^2)`` is +1 on the unit
sphere.  The opposite operator sign that some texts use only flips
``R(X, Y)Z`` as an endomorphism; sectional and p-Ricci values are unaffected.
A self-test at import time checks the calibration on the unit sphere using the
finite-difference pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import (
    DegenerateMetricError,
    DegeneratePlaneError,
    DomainEscapeError,
    InvalidFrameError,
    NumericPrecisionError,
)

TWO_PI = 2.0 * np.pi
DEFAULT_SAMPLES = 1001  # 1000 RK4 steps on [0, 1]
CHRISTOFFEL_STEP = 1e-5
RIEMANN_STEP = 1e-4
FRAME_TOL = 1e-8


# ---------------------------------------------------------------------------
# chart domain


@dataclass(frozen=True)
class ChartDomain:
    """Open box bounds, periodic coordinates and an optional ball constraint.

    ``lower``/``upper`` hold one entry per coordinate (``None`` = unbounded).
    ``periodic`` maps coordinate index to period; such coordinates are wrapped
    into ``[0, period)`` and distances use the minimal image.
    """

    dim: int
    lower: tuple[float | None, ...] | None = None
    upper: tuple[float | None, ...] | None = None
    periodic: tuple[tuple[int, float], ...] = ()
    ball_radius: float | None = None

    def wrap(self, x: np.ndarray) -> np.ndarray:
        if not self.periodic:
            return x
        x = np.array(x, dtype=float, copy=True)
        for axis, period in self.periodic:
            x[..., axis] = np.mod(x[..., axis], period)
        return x

    def contains(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        ok = np.all(np.isfinite(x), axis=-1)
        periodic_axes = {a for a, _ in self.periodic}
        for i in range(self.dim):
            if i in periodic_axes:
                continue
            if self.lower is not None and self.lower[i] is not None:
                ok &= x[..., i] > self.lower[i]
            if self.upper is not None and self.upper[i] is not None:
                ok &= x[..., i] < self.upper[i]
        if self.ball_radius is not None:
            ok &= np.sum(x * x, axis=-1) < self.ball_radius**2
        return ok

    def difference(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Coordinate displacement ``y - x`` using the minimal periodic image."""
        d = np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
        if self.periodic:
            d = np.array(d, copy=True)
            for axis, period in self.periodic:
                d[..., axis] = (d[..., axis] + 0.5 * period) % period - 0.5 * period
        return d


# ---------------------------------------------------------------------------
# generic tensor formulas


def check_metric(g: np.ndarray) -> None:
    """Raise DegenerateMetricError unless every g is symmetric positive definite."""
    if not np.all(np.isfinite(g)):
        raise DegenerateMetricError("metric has non-finite entries")
    asym = np.max(np.abs(g - np.swapaxes(g, -1, -2)), initial=0.0)
    scale = max(np.max(np.abs(g), initial=0.0), 1e-300)
    if asym > 1e-10 * scale:
        raise DegenerateMetricError(f"metric not symmetric (defect {asym:.2e})")
    ev = np.linalg.eigvalsh(g)
    if np.any(ev[..., 0] <= 1e-13 * np.maximum(ev[..., -1], 1e-300)):
        raise DegenerateMetricError("metric singular or indefinite")


def christoffel_from_derivative(g: np.ndarray, dg: np.ndarray) -> np.ndarray:
    """Levi-Civita symbols ``Gamma[..., k, i, j]`` from ``dg[..., a, b, c] = d_c g_ab``."""
    ginv = np.linalg.inv(g)
    # lowered: Gamma_lij = (d_i g_lj + d_j g_li - d_l g_ij) / 2
    low = 0.5 * (
        np.einsum("...lji->...lij", dg) + dg - np.einsum("...ijl->...lij", dg)
    )
    return np.einsum("...kl,...lij->...kij", ginv, low)


def riemann_from_christoffel(
    g: np.ndarray, gam: np.ndarray, dgam: np.ndarray
) -> np.ndarray:
    """Lowered curvature from Christoffels and ``dgam[..., k, i, j, m] = d_m Gamma^k_ij``."""
    up = (
        np.einsum("...rnsm->...rsmn", dgam)
        - np.einsum("...rmsn->...rsmn", dgam)
        + np.einsum("...rml,...lns->...rsmn", gam, gam)
        - np.einsum("...rnl,...lms->...rsmn", gam, gam)
    )
    return np.einsum("...ar,...rsmn->...asmn", g, up)


def constant_curvature_tensor(g: np.ndarray, k: float) -> np.ndarray:
    return k * (
        np.einsum("...ac,...bd->...abcd", g, g) - np.einsum("...ad,...bc->...abcd", g, g)
    )


def _fd_step(x: np.ndarray, base: float) -> np.ndarray:
    h = base * np.maximum(1.0, np.linalg.norm(x, axis=-1))
    if not np.all(np.isfinite(h)) or np.any(x + h[..., None] == x):
        raise NumericPrecisionError("finite-difference step underflows at this point")
    return h


def _central_diff(
    fn: Callable[[np.ndarray], np.ndarray], x: np.ndarray, base: float
) -> np.ndarray:
    """Central differences of ``fn``; the derivative index is appended last."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    h = _fd_step(x, base)
    cols = []
    for m in range(n):
        step = np.zeros_like(x)
        step[..., m] = h
        diff = fn(x + step) - fn(x - step)
        cols.append(diff / (2.0 * h.reshape(h.shape + (1,) * (diff.ndim - h.ndim))))
    return np.stack(cols, axis=-1)


# ---------------------------------------------------------------------------
# manifolds


class ChartManifold:
    """A Riemannian metric on one chart.

    The base class only needs a metric evaluator; Christoffel symbols and the
    curvature tensor then come from central finite differences.  Model spaces
    override these with closed forms.
    """

    model = "custom"

    def __init__(
        self,
        dim: int,
        metric: Callable[[np.ndarray], np.ndarray],
        domain: ChartDomain | None = None,
        params: dict | None = None,
    ):
        if dim < 1:
            raise ValueError("dimension must be >= 1")
        self.dim = int(dim)
        self._metric = metric
        self.domain = domain or ChartDomain(dim)
        self.params = dict(params or {})

    def __repr__(self) -> str:
        extra = "".join(f", {k}={v!r}" for k, v in self.params.items())
        return f"{type(self).__name__}(dim={self.dim}{extra})"

    # structure -------------------------------------------------------------
    @property
    def closed_form(self) -> bool:
        return False

    @property
    def constant_curvature(self) -> float | None:
        """Sectional curvature if the space has constant curvature, else None."""
        return None

    def metric(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        g = np.asarray(self._metric(x), dtype=float)
        return np.broadcast_to(g, x.shape + (self.dim,))

    def metric_derivative(self, x: np.ndarray) -> np.ndarray:
        """``dg[..., a, b, c] = d_c g_ab``."""
        return _central_diff(self.metric, x, CHRISTOFFEL_STEP)

    def christoffel(self, x: np.ndarray) -> np.ndarray:
        return christoffel_fd(self, x)

    def riemann(self, x: np.ndarray) -> np.ndarray:
        return riemann_fd(self, x)

    # metric helpers ----------------------------------------------------------
    def inner(self, x: np.ndarray, u: np.ndarray, w: np.ndarray) -> np.ndarray:
        return np.einsum("...i,...ij,...j->...", u, self.metric(x), w)

    def norm(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return np.sqrt(np.maximum(self.inner(x, u, u), 0.0))

    def exp(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Closed-form exponential map; only model spaces provide one."""
        return geodesic(self, x, v, samples=DEFAULT_SAMPLES).end

    def distance(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError(f"{self.model} manifold has no closed-form distance")


class Euclidean(ChartManifold):
    model = "euclidean"

    def __init__(self, dim: int):
        super().__init__(dim, lambda x: np.broadcast_to(np.eye(dim), x.shape + (dim,)))

    @property
    def closed_form(self) -> bool:
        return True

    @property
    def constant_curvature(self) -> float:
        return 0.0

    def metric(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.eye(self.dim), x.shape + (self.dim,)).copy()

    def metric_derivative(self, x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1] + (self.dim,) * 3)

    def christoffel(self, x):
        return self.metric_derivative(x)

    def riemann(self, x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1] + (self.dim,) * 4)

    def exp(self, x, v):
        return np.asarray(x, dtype=float) + np.asarray(v, dtype=float)

    def distance(self, x, y):
        return np.linalg.norm(np.asarray(y, float) - np.asarray(x, float), axis=-1)


class Cylinder(Euclidean):
    """R x S^1 with coordinates (z, phi); phi is periodic with period 2*pi."""

    model = "cylinder"

    def __init__(self, radius: float = 1.0):
        self.radius = float(radius)
        ChartManifold.__init__(
            self,
            2,
            self.metric,
            ChartDomain(2, periodic=((1, TWO_PI),)),
            params={"radius": self.radius},
        )

    def metric(self, x):
        x = np.asarray(x, dtype=float)
        g = np.zeros(x.shape[:-1] + (2, 2))
        g[..., 0, 0] = 1.0
        g[..., 1, 1] = self.radius**2
        return g

    def exp(self, x, v):
        return self.domain.wrap(np.asarray(x, float) + np.asarray(v, float))

    def distance(self, x, y):
        d = self.domain.difference(x, y)
        return np.sqrt(d[..., 0] ** 2 + (self.radius * d[..., 1]) ** 2)


class Sphere(ChartManifold):
    """Round n-sphere of radius r in hyperspherical coordinates.

    Coordinates are ``(theta_1, ..., theta_{n-1}, phi)`` with
    ``theta_i in (0, pi)`` and ``phi`` periodic.  For n = 2 this is the usual
    colatitude/longitude chart with ``g = r^2 diag(1, sin^2 theta)``.
    """

    model = "sphere"

    def __init__(self, dim: int = 2, radius: float = 1.0):
        if dim < 2:
            raise ValueError("sphere chart needs dim >= 2")
        self.radius = float(radius)
        lower = tuple([0.0] * (dim - 1) + [None])
        upper = tuple([np.pi] * (dim - 1) + [None])
        super().__init__(
            dim,
            self.metric,
            ChartDomain(dim, lower=lower, upper=upper, periodic=((dim - 1, TWO_PI),)),
            params={"radius": self.radius},
        )

    @property
    def closed_form(self) -> bool:
        return True

    @property
    def constant_curvature(self) -> float:
        return 1.0 / self.radius**2

    def _diag(self, x: np.ndarray) -> np.ndarray:
        s2 = np.sin(x[..., :-1]) ** 2
        prefix = np.concatenate([np.ones(x.shape[:-1] + (1,)), np.cumprod(s2, axis=-1)], axis=-1)
        return self.radius**2 * prefix

    def metric(self, x):
        x = np.asarray(x, dtype=float)
        h = self._diag(x)
        return h[..., :, None] * np.eye(self.dim)

    def metric_derivative(self, x):
        x = np.asarray(x, dtype=float)
        n = self.dim
        h = self._diag(x)
        dg = np.zeros(x.shape[:-1] + (n, n, n))
        cot = np.cos(x[..., :-1]) / np.sin(x[..., :-1])
        for k in range(n):
            for m in range(min(k, n - 1)):
                dg[..., k, k, m] = 2.0 * h[..., k] * cot[..., m]
        return dg

    def christoffel(self, x):
        x = np.asarray(x, dtype=float)
        return christoffel_from_derivative(self.metric(x), self.metric_derivative(x))

    def riemann(self, x):
        return constant_curvature_tensor(self.metric(x), self.constant_curvature)

    # embedding in R^{n+1} --------------------------------------------------
    def embed(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        n = self.dim
        s = np.sin(x)
        prefix = np.concatenate([np.ones(x.shape[:-1] + (1,)), np.cumprod(s[..., :-1], axis=-1)], axis=-1)
        y = np.empty(x.shape[:-1] + (n + 1,))
        y[..., :n] = prefix * np.cos(x)
        y[..., n] = prefix[..., n - 1] * s[..., n - 1]
        return self.radius * y

    def embed_jacobian(self, x: np.ndarray) -> np.ndarray:
        """``dY[..., i, m] = d y_i / d x_m``."""
        x = np.asarray(x, dtype=float)
        n = self.dim
        s, c = np.sin(x), np.cos(x)
        jac = np.zeros(x.shape[:-1] + (n + 1, n))
        for i in range(n + 1):
            k = min(i, n - 1)  # coordinate whose cos/sin closes the product
            last = np.sin if i == n else np.cos
            dlast = np.cos if i == n else (lambda a: -np.sin(a))
            for m in range(k + 1):
                term = np.ones(x.shape[:-1])
                for j in range(k):
                    term = term * (c[..., j] if j == m else s[..., j])
                term = term * (dlast(x[..., k]) if m == k else last(x[..., k]))
                jac[..., i, m] = term
        return self.radius * jac

    def from_embedding(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        n = self.dim
        x = np.empty(y.shape[:-1] + (n,))
        for k in range(n - 1):
            tail = np.linalg.norm(y[..., k:], axis=-1)
            x[..., k] = np.arccos(np.clip(y[..., k] / tail, -1.0, 1.0))
        x[..., n - 1] = np.mod(np.arctan2(y[..., n], y[..., n - 1]), TWO_PI)
        return x

    def exp(self, x, v):
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        p = self.embed(x) / self.radius
        w = np.einsum("...im,...m->...i", self.embed_jacobian(x), v) / self.radius
        a = np.linalg.norm(w, axis=-1)
        safe = np.where(a > 0, a, 1.0)
        sinc = np.where(a > 0, np.sin(a) / safe, 1.0)
        q = np.cos(a)[..., None] * p + sinc[..., None] * w
        return self.from_embedding(self.radius * q)

    def distance(self, x, y):
        p = self.embed(x)
        q = self.embed(y)
        cross = np.linalg.norm(p - q, axis=-1)
        plus = np.linalg.norm(p + q, axis=-1)
        return 2.0 * self.radius * np.arctan2(cross, plus)


class Hyperbolic(ChartManifold):
    """Poincare ball model of curvature ``-1/radius^2``."""

    model = "hyperbolic"

    def __init__(self, dim: int = 2, radius: float = 1.0):
        self.radius = float(radius)
        super().__init__(dim, self.metric, ChartDomain(dim, ball_radius=1.0), params={"radius": self.radius})

    @property
    def closed_form(self) -> bool:
        return True

    @property
    def constant_curvature(self) -> float:
        return -1.0 / self.radius**2

    def metric(self, x):
        x = np.asarray(x, dtype=float)
        s = 1.0 - np.sum(x * x, axis=-1)
        return (4.0 * self.radius**2 / s**2)[..., None, None] * np.eye(self.dim)

    def metric_derivative(self, x):
        x = np.asarray(x, dtype=float)
        s = 1.0 - np.sum(x * x, axis=-1)
        lam = 4.0 * self.radius**2 / s**2
        grad = (2.0 * lam / s)[..., None] * 2.0 * x  # d_c lambda
        return np.eye(self.dim)[..., :, :, None] * grad[..., None, None, :]

    def christoffel(self, x):
        x = np.asarray(x, dtype=float)
        n = self.dim
        f = 2.0 * x / (1.0 - np.sum(x * x, axis=-1))[..., None]
        eye = np.eye(n)
        return (
            np.einsum("ki,...j->...kij", eye, f)
            + np.einsum("kj,...i->...kij", eye, f)
            - np.einsum("ij,...k->...kij", eye, f)
        )

    def riemann(self, x):
        return constant_curvature_tensor(self.metric(x), self.constant_curvature)

    def _lift(self, x, v):
        s = 1.0 - np.sum(x * x, axis=-1)
        xv = np.sum(x * v, axis=-1)
        X = np.concatenate([((1.0 + np.sum(x * x, axis=-1)) / s)[..., None], 2.0 * x / s[..., None]], axis=-1)
        dX = np.concatenate(
            [(4.0 * xv / s**2)[..., None], 2.0 * v / s[..., None] + 4.0 * x * (xv / s**2)[..., None]],
            axis=-1,
        )
        return X, dX

    def exp(self, x, v):
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        X, dX = self._lift(x, v)
        L = np.sqrt(np.maximum(np.sum(dX[..., 1:] ** 2, axis=-1) - dX[..., 0] ** 2, 0.0))
        safe = np.where(L > 0, L, 1.0)
        sinhc = np.where(L > 0, np.sinh(L) / safe, 1.0)
        Y = np.cosh(L)[..., None] * X + sinhc[..., None] * dX
        return Y[..., 1:] / (1.0 + Y[..., :1])

    def distance(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        num = 2.0 * np.sum((x - y) ** 2, axis=-1)
        den = (1.0 - np.sum(x * x, axis=-1)) * (1.0 - np.sum(y * y, axis=-1))
        return self.radius * np.arccosh(1.0 + num / den)


# ---------------------------------------------------------------------------
# curvature access


def christoffel_fd(M: ChartManifold, x: np.ndarray) -> np.ndarray:
    """Finite-difference Christoffel symbols (the path used for custom metrics)."""
    x = np.asarray(x, dtype=float)
    g = M.metric(x)
    check_metric(g)
    dg = _central_diff(M.metric, x, CHRISTOFFEL_STEP)
    return christoffel_from_derivative(g, dg)


def riemann_fd(M: ChartManifold, x: np.ndarray) -> np.ndarray:
    """Nested central differences of :func:`christoffel_fd`."""
    x = np.asarray(x, dtype=float)
    gam = christoffel_fd(M, x)
    dgam = _central_diff(lambda y: christoffel_fd(M, y), x, RIEMANN_STEP)
    return riemann_from_christoffel(M.metric(x), gam, dgam)


def christoffel_at(M: ChartManifold, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if M.closed_form:
        check_metric(M.metric(x))
    return M.christoffel(x)


def riemann_at(M: ChartManifold, x: np.ndarray) -> np.ndarray:
    return M.riemann(np.asarray(x, dtype=float))


def sectional(M: ChartManifold, x, v, w) -> np.ndarray:
    x, v, w = (np.asarray(a, dtype=float) for a in (x, v, w))
    g = M.metric(x)
    vv = np.einsum("...i,...ij,...j->...", v, g, v)
    ww = np.einsum("...i,...ij,...j->...", w, g, w)
    vw = np.einsum("...i,...ij,...j->...", v, g, w)
    denom = vv * ww - vw**2
    if np.any(denom <= 1e-14 * vv * ww) or np.any(vv * ww == 0):
        raise DegeneratePlaneError("v and w do not span a plane")
    num = np.einsum("...abcd,...a,...b,...c,...d->...", M.riemann(x), v, w, v, w)
    return num / denom


def _check_orthonormal(g: np.ndarray, P: np.ndarray, tol: float = FRAME_TOL) -> None:
    gram = np.einsum("...ai,...ab,...bj->...ij", P, g, P)
    err = np.max(np.abs(gram - np.eye(P.shape[-1])), initial=0.0)
    if err > tol:
        raise InvalidFrameError(f"frame not orthonormal (Gram defect {err:.2e})")


def ricci_p(M: ChartManifold, x, P, w) -> np.ndarray:
    """p-Ricci curvature of the plane spanned by the columns of ``P`` in direction ``w``.

    ``P`` has shape ``(..., n, p)`` and must be g-orthonormal.
    """
    x, P, w = (np.asarray(a, dtype=float) for a in (x, P, w))
    if P.ndim == x.ndim:  # single vector given as (..., n)
        P = P[..., None]
    p = P.shape[-1]
    if not 1 <= p <= M.dim:
        raise InvalidFrameError(f"p={p} outside 1..{M.dim}")
    _check_orthonormal(M.metric(x), P)
    T = _contract_vv(M.riemann(x), w)
    return np.einsum("...ai,...ac,...ci->...", P, T, P)


def ricci(M: ChartManifold, x, w) -> np.ndarray:
    """Classical Ricci curvature Ric(w, w) = g^{ac} R_abcd w^b w^d."""
    x, w = np.asarray(x, dtype=float), np.asarray(w, dtype=float)
    ginv = np.linalg.inv(M.metric(x))
    return np.einsum("...ac,...abcd,...b,...d->...", ginv, M.riemann(x), w, w)


def jacobi_operator(M: ChartManifold, x, v, F) -> np.ndarray:
    """Matrix ``<R(F_i, v) v, F_j>`` of the Jacobi operator in the frame columns of ``F``."""
    return np.swapaxes(F, -1, -2) @ _contract_vv(M.riemann(x), v) @ F


def _contract_vv(R: np.ndarray, v: np.ndarray) -> np.ndarray:
    """``T_ac = R_abcd v^b v^d`` using matmul (much faster than einsum for small n)."""
    Rd = (R @ v[..., None, None, :, None])[..., 0]
    return (np.swapaxes(Rd, -1, -2) @ v[..., None, :, None])[..., 0]


def christoffel_contract(gam: np.ndarray, v: np.ndarray) -> np.ndarray:
    """``(Gamma v)^k_j = Gamma^k_ij v^i``."""
    return (gam @ v[..., None, :, None])[..., 0]


def orthonormal_basis(M: ChartManifold, x, vectors: np.ndarray | None = None) -> np.ndarray:
    """Gram-Schmidt (w.r.t. g) of the columns of ``vectors`` (default: coordinate basis)."""
    x = np.asarray(x, dtype=float)
    g = M.metric(x)
    if vectors is None:
        vectors = np.broadcast_to(np.eye(M.dim), g.shape)
    V = np.array(vectors, dtype=float)
    L = np.linalg.cholesky(g)  # g = L L^T, so L^T V is Euclidean
    Q, R = np.linalg.qr(np.swapaxes(L, -1, -2) @ V)
    sign = np.sign(np.diagonal(R, axis1=-2, axis2=-1))
    sign = np.where(sign == 0, 1.0, sign)
    Q = Q * sign[..., None, :]
    return np.linalg.solve(np.swapaxes(L, -1, -2), Q)


# ---------------------------------------------------------------------------
# integration


@dataclass(frozen=True, eq=False)
class GeodesicPath:
    """Samples of ``t -> exp_x((t - t0) v)`` on a uniform grid of [0, 1]."""

    times: np.ndarray
    positions: np.ndarray  # (..., S, n)
    velocities: np.ndarray  # (..., S, n)
    speed: np.ndarray  # (...)
    anchor: int = 0

    @property
    def samples(self) -> int:
        return self.times.shape[0]

    @property
    def t0(self) -> float:
        return float(self.times[self.anchor])

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return self.positions.shape[:-2]

    @property
    def start(self) -> np.ndarray:
        return self.positions[..., 0, :]

    @property
    def end(self) -> np.ndarray:
        return self.positions[..., -1, :]

    @property
    def anchor_point(self) -> np.ndarray:
        return self.positions[..., self.anchor, :]

    @property
    def anchor_velocity(self) -> np.ndarray:
        return self.velocities[..., self.anchor, :]


def time_grid(samples: int) -> np.ndarray:
    if samples < 2:
        raise ValueError("need at least two samples")
    return np.linspace(0.0, 1.0, int(samples))


def grid_index(times: np.ndarray, t: float, tol: float = 1e-9) -> int:
    """Index of ``t`` on a uniform grid; raise if ``t`` is not a grid time."""
    S = times.shape[0]
    k = int(round(float(t) * (S - 1)))
    if not 0 <= k < S or abs(times[k] - t) > tol:
        raise ValueError(f"t={t} is not on the {S}-sample grid")
    return k


def coupled_rk4(
    M: ChartManifold,
    x0: np.ndarray,
    v0: np.ndarray,
    times: np.ndarray,
    anchor: int,
    extra0: Sequence[np.ndarray] = (),
    extra_rhs: Callable | None = None,
) -> tuple[np.ndarray, np.ndarray, list[np.ndarray]]:
    """Fixed-step RK4 of the geodesic equation plus optional transported fields.

    ``extra_rhs(x, v, Gamma_v, extras)`` returns derivatives of the extra
    fields.  Integration runs forward and backward from ``times[anchor]``.
    Outputs carry the time axis right after the batch axes.
    """
    x0 = M.domain.wrap(np.asarray(x0, dtype=float))
    v0 = np.asarray(v0, dtype=float)
    x0, v0 = np.broadcast_arrays(x0, v0)
    nb = x0.ndim - 1
    S = times.shape[0]
    state0 = [x0, v0, *[np.asarray(e, dtype=float) for e in extra0]]
    out = [np.empty((S,) + a.shape) for a in state0]
    for buf, a in zip(out, state0):
        buf[anchor] = a

    def rhs(y):
        x, v = y[0], y[1]
        gam = M.christoffel(x)
        gv = christoffel_contract(gam, v)
        acc = -(gv @ v[..., None])[..., 0]
        extra = extra_rhs(x, v, gv, y[2:]) if extra_rhs is not None else []
        return [v, acc, *extra]

    if not np.all(M.domain.contains(x0)):
        raise DomainEscapeError(times[anchor])
    for direction in (1, -1):
        y = state0
        stop = S - 1 if direction > 0 else 0
        for i in range(anchor, stop, direction):
            j = i + direction
            h = times[j] - times[i]
            k1 = rhs(y)
            k2 = rhs([a + 0.5 * h * b for a, b in zip(y, k1)])
            k3 = rhs([a + 0.5 * h * b for a, b in zip(y, k2)])
            k4 = rhs([a + h * b for a, b in zip(y, k3)])
            y = [a + (h / 6.0) * (b + 2.0 * c + 2.0 * d + e) for a, b, c, d, e in zip(y, k1, k2, k3, k4)]
            y[0] = M.domain.wrap(y[0])
            if not np.all(M.domain.contains(y[0])):
                raise DomainEscapeError(times[j])
            for buf, a in zip(out, y):
                buf[j] = a
    moved = [np.moveaxis(buf, 0, nb) for buf in out]
    return moved[0], moved[1], moved[2:]


def geodesic(
    M: ChartManifold, x, v, samples: int = DEFAULT_SAMPLES, t0: float = 0.0
) -> GeodesicPath:
    """Integrate the geodesic with ``gamma(t0) = x``, ``gamma'(t0) = v`` over [0, 1]."""
    times = time_grid(samples)
    anchor = grid_index(times, t0)
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    check_metric(M.metric(x))
    pos, vel, _ = coupled_rk4(M, x, v, times, anchor)
    speed = M.norm(pos[..., anchor, :], vel[..., anchor, :])
    return GeodesicPath(times, pos, vel, speed, anchor)


def parallel_frame(M: ChartManifold, path: GeodesicPath, basis0: np.ndarray | None = None) -> np.ndarray:
    """Parallel transport of an orthonormal frame given at the path's anchor.

    Returns frames of shape ``(..., S, n, n)`` whose columns are the
    transported vectors in chart coordinates.
    """
    x0 = path.anchor_point
    if basis0 is None:
        basis0 = orthonormal_basis(M, x0)
    basis0 = np.broadcast_to(np.asarray(basis0, dtype=float), x0.shape + (M.dim,))
    _check_orthonormal(M.metric(x0), basis0, 1e-10)

    def frame_rhs(x, v, gv, extras):
        return [-gv @ extras[0]]

    _, _, (F,) = coupled_rk4(M, x0, path.anchor_velocity, path.times, path.anchor, [basis0], frame_rhs)
    return F


# ---------------------------------------------------------------------------
# custom metrics from coefficient tables


_FACTOR_FUNCS = {
    "pow": lambda a, freq, power: a**power,
    "sin": lambda a, freq, power: np.sin(freq * a) ** power,
    "cos": lambda a, freq, power: np.cos(freq * a) ** power,
}


@dataclass(frozen=True)
class MetricTerm:
    """``coef * prod_k f_k(freq_k * x[var_k]) ** power_k``."""

    coef: float
    factors: tuple[tuple[str, int, float, float], ...] = ()

    def __call__(self, x: np.ndarray) -> np.ndarray:
        val = np.full(x.shape[:-1], float(self.coef))
        for kind, var, freq, power in self.factors:
            val = val * _FACTOR_FUNCS[kind](x[..., int(var)], freq, power)
        return val


@dataclass(frozen=True)
class CoefficientMetric:
    """Metric assembled from per-entry term tables; only (i, j) with i <= j are given."""

    dim: int
    entries: tuple[tuple[int, int, tuple[MetricTerm, ...]], ...] = field(default=())

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        g = np.zeros(x.shape[:-1] + (self.dim, self.dim))
        for i, j, terms in self.entries:
            val = sum((t(x) for t in terms), np.zeros(x.shape[:-1]))
            g[..., i, j] = val
            g[..., j, i] = val
        return g


def custom(dim: int, metric: Callable[[np.ndarray], np.ndarray], domain: ChartDomain | None = None) -> ChartManifold:
    return ChartManifold(dim, metric, domain)


# ---------------------------------------------------------------------------


def _self_test() -> None:
    # FD pipeline on the unit sphere metric must give sec = +1.
    probe = ChartManifold(2, Sphere(2).metric)
    x = np.array([1.1, 0.4])
    val = sectional(probe, x, np.array([1.0, 0.0]), np.array([0.0, 1.0]))
    if abs(val - 1.0) > 1e-5:
        raise AssertionError(f"curvature sign calibration failed: sec(sphere) = {val}")


_self_test()
