"""Matrix Jacobi fields along geodesics and the transport operators built from them.

Everything is expressed in components with respect to a parallel orthonormal
frame along the geodesic, so the ambient Gram matrix is the identity and the
covariant derivative is the plain time derivative of components.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import manifold as mf
from .errors import DegenerateFrameError, InvalidFrameError

RANK_TOL = 1e-10
COND_WARN = 1e10


@dataclass(frozen=True, eq=False)
class JacobiFrame:
    """``B(t)`` (columns are Jacobi fields) and ``Bdot = D_t B`` in parallel-frame components."""

    path: mf.GeodesicPath
    p: int
    B: np.ndarray  # (..., S, n, p)
    Bdot: np.ndarray  # (..., S, n, p)
    frames: np.ndarray  # (..., S, n, n) parallel frame, chart coordinates
    curvature: np.ndarray  # (..., S, n, n)  <R(E_i, v) v, E_j>
    selfadjoint: np.ndarray  # (...) bool

    @property
    def times(self) -> np.ndarray:
        return self.path.times

    def to_chart(self, comps: np.ndarray) -> np.ndarray:
        """Map frame components ``(..., S, n, k)`` to chart vectors."""
        return self.frames @ comps


@dataclass(frozen=True, eq=False)
class AdaptedFrame:
    E: np.ndarray  # (..., S, n, p) orthonormal, spans B(t)
    N: np.ndarray  # (..., S, n, n-p) orthonormal complement


@dataclass(frozen=True, eq=False)
class TransportOperators:
    U: np.ndarray  # (..., S, n, p) in the [E N] basis
    UT: np.ndarray  # (..., S, p, p)
    Uperp: np.ndarray  # (..., S, n-p, p)
    trace_UT: np.ndarray  # (..., S)
    perp_sq: np.ndarray  # (..., S)
    condition: np.ndarray  # (..., S)

    @property
    def ill_conditioned(self) -> np.ndarray:
        return np.any(self.condition > COND_WARN, axis=-1)


@dataclass(frozen=True, eq=False)
class KappaProfile:
    """``scaled[..., i] = theta^2 kappa(theta t_i) = |U_perp(t_i)|^2``."""

    theta: np.ndarray
    times: np.ndarray
    scaled: np.ndarray

    @property
    def values(self) -> np.ndarray:
        """kappa at arclength ``theta t_i``; zero when theta = 0."""
        th2 = self.theta[..., None] ** 2
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(th2 > 0, self.scaled / np.where(th2 > 0, th2, 1.0), 0.0)

    @property
    def arclength(self) -> np.ndarray:
        return self.theta[..., None] * self.times


def _singular_values(B: np.ndarray) -> np.ndarray:
    """Singular values of tall ``(..., n, p)`` matrices, descending, via the p x p Gram."""
    if B.shape[-1] == 1:
        return np.linalg.norm(B, axis=-2)
    ev = np.linalg.eigvalsh(np.swapaxes(B, -1, -2) @ B)
    return np.sqrt(np.maximum(ev[..., ::-1], 0.0))


def _pinv(B: np.ndarray) -> np.ndarray:
    """Left inverse ``(B^T B)^{-1} B^T`` via reduced QR."""
    Q, R = np.linalg.qr(B)
    return np.linalg.solve(R, np.swapaxes(Q, -1, -2))


def propagate(
    M: mf.ChartManifold,
    path: mf.GeodesicPath,
    B0: np.ndarray,
    B0dot: np.ndarray,
    basis0: np.ndarray | None = None,
) -> JacobiFrame:
    """Solve ``B'' = -R(t) B`` with chart-coordinate data given at the path's anchor.

    ``B0``/``B0dot`` have shape ``(..., n, p)``.  ``basis0`` is the orthonormal
    ambient frame at the anchor (default: Gram-Schmidt of the coordinate basis).
    """
    x0 = path.anchor_point
    v0 = path.anchor_velocity
    n = M.dim
    B0 = np.asarray(B0, dtype=float)
    B0dot = np.asarray(B0dot, dtype=float)
    B0 = np.broadcast_to(B0, x0.shape + B0.shape[-1:])
    B0dot = np.broadcast_to(B0dot, B0.shape)
    p = B0.shape[-1]
    if basis0 is None:
        basis0 = mf.orthonormal_basis(M, x0)
    basis0 = np.broadcast_to(np.asarray(basis0, dtype=float), x0.shape + (n,))
    g0 = M.metric(x0)
    mf._check_orthonormal(g0, basis0, 1e-10)
    # chart vector b  ->  components c = F^T g b
    to_frame = np.swapaxes(basis0, -1, -2) @ g0
    c0 = to_frame @ B0
    cd0 = to_frame @ B0dot
    sv = _singular_values(c0)
    if np.any(sv[..., -1] <= RANK_TOL * sv[..., 0]) or np.any(sv[..., 0] == 0):
        raise DegenerateFrameError(path.t0, "initial Jacobi data is rank deficient")

    def rhs(x, v, gv, extras):
        F, c, cd = extras
        R = mf.jacobi_operator(M, x, v, F)
        return [-gv @ F, cd, -R @ c]

    pos, vel, (F, B, Bdot) = mf.coupled_rk4(
        M, x0, v0, path.times, path.anchor, [basis0, c0, cd0], rhs
    )
    curv = mf.jacobi_operator(M, pos, vel, F)
    sv = _singular_values(B)
    # relative to the largest singular value along the whole trajectory, so p = 1 collapses are caught
    scale = sv[..., 0].max(axis=-1, keepdims=True)
    bad = sv[..., -1] <= RANK_TOL * scale
    if np.any(bad):
        idx = np.nonzero(np.any(bad.reshape(-1, bad.shape[-1]), axis=0))[0]
        raise DegenerateFrameError(path.times[idx[0]])
    W = np.swapaxes(c0, -1, -2) @ cd0
    scale = np.maximum(np.abs(W).max(axis=(-1, -2)), 1.0)
    selfadj = np.abs(W - np.swapaxes(W, -1, -2)).max(axis=(-1, -2)) <= 1e-10 * scale
    return JacobiFrame(path, p, B, Bdot, F, curv, selfadj)


def jacobi_residual(frame: JacobiFrame) -> np.ndarray:
    """``|B'' + R B|`` per column at interior samples (fourth-order differences of Bdot).

    Returns shape ``(..., S - 4, p)`` for samples 2 .. S-3.
    """
    h = frame.times[1] - frame.times[0]
    Bd = frame.Bdot
    ddB = (-Bd[..., 4:, :, :] + 8 * Bd[..., 3:-1, :, :] - 8 * Bd[..., 1:-3, :, :] + Bd[..., :-4, :, :]) / (12 * h)
    res = ddB + frame.curvature[..., 2:-2, :, :] @ frame.B[..., 2:-2, :, :]
    return np.linalg.norm(res, axis=-2)


def _complement(E: np.ndarray) -> np.ndarray:
    n, p = E.shape[-2:]
    Q, _ = np.linalg.qr(E, mode="complete")
    return Q[..., :, p:n]


def _orthonormalize(B: np.ndarray) -> np.ndarray:
    Q, R = np.linalg.qr(B)
    sign = np.sign(np.diagonal(R, axis1=-2, axis2=-1))
    sign = np.where(sign == 0, 1.0, sign)
    return Q * sign[..., None, :]


def adapted_frame(frame: JacobiFrame) -> AdaptedFrame:
    """Orthonormal frame of span B(t) whose derivative is purely normal.

    For p = 1 this is ``B / |B|``.  Otherwise ``E' = (I - E E^T) Bdot B^+ E`` is
    integrated by RK4 from the anchor, with B and Bdot at half steps taken from
    the cubic Hermite interpolant of the samples.
    """
    B, Bd = frame.B, frame.Bdot
    p = frame.p
    if p == 1:
        E = B / np.linalg.norm(B, axis=-2, keepdims=True)
        return AdaptedFrame(E, _complement(E))
    times = frame.times
    S = times.shape[0]
    a = frame.path.anchor
    n = B.shape[-2]
    eye = np.eye(n)

    def rhs(E, Bs, Bds):
        U = Bds @ _pinv(Bs)
        P = eye - E @ np.swapaxes(E, -1, -2)
        return P @ U @ E

    E = np.empty_like(B)
    E[..., a, :, :] = _orthonormalize(B[..., a, :, :])
    for direction in (1, -1):
        y = E[..., a, :, :]
        stop = S - 1 if direction > 0 else 0
        for i in range(a, stop, direction):
            j = i + direction
            h = times[j] - times[i]
            B_i, B_j = B[..., i, :, :], B[..., j, :, :]
            D_i, D_j = Bd[..., i, :, :], Bd[..., j, :, :]
            B_m = 0.5 * (B_i + B_j) + h * (D_i - D_j) / 8.0
            D_m = 1.5 * (B_j - B_i) / h - 0.25 * (D_i + D_j)
            k1 = rhs(y, B_i, D_i)
            k2 = rhs(y + 0.5 * h * k1, B_m, D_m)
            k3 = rhs(y + 0.5 * h * k2, B_m, D_m)
            k4 = rhs(y + h * k3, B_j, D_j)
            y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            E[..., j, :, :] = y
    if p == n:
        N = np.zeros(E.shape[:-1] + (0,))
    else:
        N = _complement(E)
    return AdaptedFrame(E, N)


def operators(frame: JacobiFrame, adapted: AdaptedFrame) -> TransportOperators:
    """``U = Bdot B^+`` restricted to span E, split into tangential and normal blocks."""
    B, Bd = frame.B, frame.Bdot
    E, N = adapted.E, adapted.N
    Ufull = Bd @ _pinv(B)  # (..., S, n, n), meaningful on span B
    UE = Ufull @ E
    Et = np.swapaxes(E, -1, -2)
    UT = Et @ UE
    Uperp = np.swapaxes(N, -1, -2) @ UE
    perp = UE - E @ UT
    sv = _singular_values(B)
    cond = sv[..., 0] / sv[..., -1]
    return TransportOperators(
        U=np.concatenate([UT, Uperp], axis=-2),
        UT=UT,
        Uperp=Uperp,
        trace_UT=np.trace(UT, axis1=-2, axis2=-1),
        perp_sq=np.sum(perp * perp, axis=(-2, -1)),
        condition=cond,
    )


def kappa_profile(frame: JacobiFrame, ops: TransportOperators) -> KappaProfile:
    return KappaProfile(np.asarray(frame.path.speed, dtype=float), frame.times, ops.perp_sq)


def logdet(frame: JacobiFrame, t: float | None = None) -> np.ndarray:
    """``y = log det B`` relative to an orthonormalized input basis (so y(anchor) = 0)."""
    G = np.swapaxes(frame.B, -1, -2) @ frame.B
    sign, ld = np.linalg.slogdet(G)
    if np.any(sign <= 0):
        raise DegenerateFrameError(float(frame.times[np.argmin(sign.reshape(-1, sign.shape[-1]).min(0))]))
    y = 0.5 * (ld - ld[..., frame.path.anchor : frame.path.anchor + 1])
    if t is None:
        return y
    return y[..., mf.grid_index(frame.times, t)]


def jacobian(frame: JacobiFrame) -> np.ndarray:
    """``J(t) = det B(t)`` with ``J(anchor) = 1``."""
    return np.exp(logdet(frame))


def ric_along(frame: JacobiFrame, adapted: AdaptedFrame) -> np.ndarray:
    """``ric_p(span E(t), gamma'(t))`` in frame components."""
    E = adapted.E
    return np.einsum("...ai,...ab,...bi->...", E, frame.curvature, E)


def riccati_residual(frame: JacobiFrame, adapted: AdaptedFrame, ops: TransportOperators) -> np.ndarray:
    """``tr(U^T)' + tr((U^T)^2) + ric_p - |U_perp|^2`` at interior samples 1 .. S-2."""
    h = frame.times[1] - frame.times[0]
    tr = ops.trace_UT
    dtr = (tr[..., 2:] - tr[..., :-2]) / (2 * h)
    sq = np.trace(ops.UT @ ops.UT, axis1=-2, axis2=-1)
    ric = ric_along(frame, adapted)
    body = sq + ric - ops.perp_sq
    return dtr + body[..., 1:-1]


def selfadjoint_defect(ops: TransportOperators) -> np.ndarray:
    """Frobenius norm of ``U^T - (U^T)^T`` at every sample."""
    A = ops.UT - np.swapaxes(ops.UT, -1, -2)
    return np.sqrt(np.sum(A * A, axis=(-2, -1)))


def span_defect(frame: JacobiFrame, adapted: AdaptedFrame) -> np.ndarray:
    """Largest sine of the principal angles between span E and span B."""
    Q = _orthonormalize(frame.B)
    E = adapted.E
    R = Q - E @ (np.swapaxes(E, -1, -2) @ Q)
    return np.linalg.norm(R, ord=2, axis=(-2, -1))


def tangential_drift(frame: JacobiFrame, adapted: AdaptedFrame) -> np.ndarray:
    """``|E^T E'|`` at interior samples; zero for a parallel adapted frame."""
    h = frame.times[1] - frame.times[0]
    E = adapted.E
    dE = (E[..., 2:, :, :] - E[..., :-2, :, :]) / (2 * h)
    T = np.swapaxes(E[..., 1:-1, :, :], -1, -2) @ dE
    return np.linalg.norm(T, axis=(-2, -1))


def require_orthonormal(E: np.ndarray, tol: float = 1e-8) -> None:
    gram = np.swapaxes(E, -1, -2) @ E
    err = np.abs(gram - np.eye(E.shape[-1])).max(initial=0.0)
    if err > tol:
        raise InvalidFrameError(f"adapted frame Gram defect {err:.2e}")
