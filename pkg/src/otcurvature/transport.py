"""Wasserstein geodesics between measures on submanifolds, driven by explicit potentials.

A scenario describes the support at the anchor time ``t0`` as a parametrized
p-dimensional patch together with a potential ``phi``.  Each particle follows
``t -> exp_x((t - t0) grad phi(x))`` and carries a Jacobi frame whose
determinant transports its density (Monge-Ampere, exact at interior times).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import jacobi as jb
from . import manifold as mf
from .errors import (
    DegenerateFrameError,
    ImmersionError,
    InvalidFrameError,
    NotOptimalError,
    ScenarioError,
    UnsupportedInstanceError,
)

MAX_ASSIGNMENT = 512
COINCIDE_TOL = 1e-9


# ---------------------------------------------------------------------------
# measures and parametrizations


@dataclass(frozen=True, eq=False)
class ParticleMeasure:
    positions: np.ndarray  # (N, n)
    weights: np.ndarray  # (N,)
    frames: np.ndarray  # (N, n, p) chart coordinates, g-orthonormal
    density: np.ndarray  # (N,) mass per H^p
    p: int

    @property
    def size(self) -> int:
        return self.weights.shape[0]

    def validate(self, M: mf.ChartManifold) -> None:
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {self.weights.sum():.15f}")
        if np.any(~(self.density > 0)):
            raise ValueError("density must be positive")
        mf._check_orthonormal(M.metric(self.positions), self.frames, 1e-10)


class Parametrization(Protocol):
    dim: int

    def __call__(self, u: np.ndarray) -> np.ndarray: ...

    def jacobian(self, u: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class AffinePatch:
    """``x(u) = origin + axes @ u`` for ``u in [0, 1]^p``; ``axes`` has shape (n, p)."""

    origin: tuple[float, ...]
    axes: tuple[tuple[float, ...], ...]  # rows are coordinates, columns directions

    @property
    def dim(self) -> int:
        return np.asarray(self.axes).shape[1]

    def __call__(self, u):
        return np.asarray(self.origin, float) + np.asarray(u, float) @ np.asarray(self.axes, float).T

    def jacobian(self, u):
        u = np.asarray(u, float)
        A = np.asarray(self.axes, float)
        return np.broadcast_to(A, u.shape[:-1] + A.shape)


@dataclass(frozen=True)
class CircleArc:
    """Arc ``center + r (cos a e_i + sin a e_j)`` with ``a = start + u (stop - start)``."""

    center: tuple[float, ...]
    radius: float
    plane: tuple[int, int] = (0, 1)
    start: float = 0.0
    stop: float = 2.0 * np.pi
    dim: int = 1

    def _angle(self, u):
        return self.start + np.asarray(u, float)[..., 0] * (self.stop - self.start)

    def __call__(self, u):
        a = self._angle(u)
        x = np.broadcast_to(np.asarray(self.center, float), a.shape + (len(self.center),)).copy()
        i, j = self.plane
        x[..., i] += self.radius * np.cos(a)
        x[..., j] += self.radius * np.sin(a)
        return x

    def jacobian(self, u):
        a = self._angle(u)
        J = np.zeros(a.shape + (len(self.center), 1))
        i, j = self.plane
        span = self.stop - self.start
        J[..., i, 0] = -self.radius * np.sin(a) * span
        J[..., j, 0] = self.radius * np.cos(a) * span
        return J


def midpoint_nodes(N: int, p: int) -> np.ndarray:
    m = int(round(N ** (1.0 / p)))
    if m**p != N:
        raise ValueError(f"N={N} is not a perfect {p}-th power")
    axis = (np.arange(m) + 0.5) / m
    grids = np.meshgrid(*([axis] * p), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=-1)


def discretize(
    M: mf.ChartManifold,
    parametrization: Parametrization,
    N: int,
    density: Callable[[np.ndarray], np.ndarray] | None = None,
) -> ParticleMeasure:
    """Midpoint quadrature of the patch; optional unnormalized density f(u) in parameter space."""
    p = parametrization.dim
    u = midpoint_nodes(N, p)
    x = parametrization(u)
    Jc = parametrization.jacobian(u)
    g = M.metric(x)
    G = np.swapaxes(Jc, -1, -2) @ g @ Jc
    det = np.linalg.det(G)
    scale = max(np.max(np.abs(G)), 1e-300)
    if np.any(det <= 1e-12 * scale**p):
        raise ImmersionError("parametrization is not an immersion at some node")
    area = np.sqrt(det)
    f = np.ones(N) if density is None else np.asarray(density(u), float)
    if np.any(f <= 0):
        raise ValueError("density must be positive")
    weights = f / f.sum()
    rho = f / (f.mean() * area)
    frames = mf.orthonormal_basis(M, x, Jc)
    return ParticleMeasure(x, weights, frames, rho, p)


# ---------------------------------------------------------------------------
# potentials


@dataclass(frozen=True)
class QuadraticPotential:
    """``phi(x) = c + b . (x - x_c) + (x - x_c)^T A (x - x_c) / 2`` in chart coordinates."""

    center: tuple[float, ...]
    gradient: tuple[float, ...]
    hessian: tuple[tuple[float, ...], ...]
    constant: float = 0.0

    def _d(self, x):
        return np.asarray(x, float) - np.asarray(self.center, float)

    def value(self, x):
        d = self._d(x)
        A = np.asarray(self.hessian, float)
        return self.constant + d @ np.asarray(self.gradient, float) + 0.5 * np.einsum("...i,ij,...j->...", d, A, d)

    def differential(self, x):
        return np.asarray(self.gradient, float) + self._d(x) @ np.asarray(self.hessian, float).T

    def second(self, x):
        A = np.asarray(self.hessian, float)
        return np.broadcast_to(A, np.shape(x)[:-1] + A.shape)


def riemannian_gradient(M: mf.ChartManifold, pot: QuadraticPotential, x) -> np.ndarray:
    return np.linalg.solve(M.metric(x), pot.differential(x)[..., None])[..., 0]


def hessian_operator(M: mf.ChartManifold, pot: QuadraticPotential, x) -> np.ndarray:
    """``(g^{-1} nabla^2 phi)``: the (1,1) covariant Hessian, so ``nabla_X grad phi = H X``."""
    x = np.asarray(x, float)
    gam = M.christoffel(x)
    cov = pot.second(x) - np.einsum("...kij,...k->...ij", gam, pot.differential(x))
    return np.linalg.solve(M.metric(x), cov)


# ---------------------------------------------------------------------------
# scenarios and flows


@dataclass(frozen=True, eq=False)
class PotentialScenario:
    """One transport branch: support at the anchor time plus the driving potential."""

    manifold: mf.ChartManifold
    parametrization: Parametrization
    potential: QuadraticPotential
    particles: int
    samples: int = 2001
    anchor: float = 0.5
    density: Callable[[np.ndarray], np.ndarray] | None = None
    mass: float = 1.0
    name: str = ""


@dataclass(frozen=True, eq=False)
class BranchData:
    measure: ParticleMeasure
    frame: jb.JacobiFrame
    adapted: jb.AdaptedFrame
    operators: jb.TransportOperators


@dataclass(frozen=True, eq=False)
class InterpolationResult:
    manifold: mf.ChartManifold
    times: np.ndarray
    anchor: int
    p: int
    weights: np.ndarray  # (N,)
    branch: np.ndarray  # (N,) branch index
    positions: np.ndarray  # (N, S, n)
    velocities: np.ndarray  # (N, S, n)
    tangent: np.ndarray  # (N, S, n, p) adapted frame, chart coordinates
    jacobian: np.ndarray  # (N, S), 1 at the anchor
    lagrangian_density: np.ndarray  # (N, S) per-branch rho_t0 / J
    density: np.ndarray  # (N, S) density of the full measure at each particle
    kappa: jb.KappaProfile  # batched over particles
    contraction: float  # Monge-Mather ratio over sampled interior times
    branches: tuple[BranchData, ...] = field(default=())

    @property
    def theta(self) -> np.ndarray:
        return self.kappa.theta

    @property
    def samples(self) -> int:
        return self.times.shape[0]

    def index(self, t: float) -> int:
        return mf.grid_index(self.times, t)

    def measure(self, t: float) -> ParticleMeasure:
        return density_along(self, t)


def _as_list(scenarios) -> list[PotentialScenario]:
    if isinstance(scenarios, PotentialScenario):
        return [scenarios]
    out = list(scenarios)
    if not out:
        raise ScenarioError("no scenario branches given")
    return out


def _pair_distance(M: mf.ChartManifold, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    try:
        return M.distance(a, b)
    except NotImplementedError:
        d = M.domain.difference(a, b)
        mid = a + 0.5 * d
        return np.sqrt(np.maximum(np.einsum("...i,...ij,...j->...", d, M.metric(mid), d), 0.0))


def _flow_branch(sc: PotentialScenario) -> tuple[BranchData, mf.GeodesicPath]:
    M = sc.manifold
    mu = discretize(M, sc.parametrization, sc.particles, sc.density)
    x = mu.positions
    v = riemannian_gradient(M, sc.potential, x)
    H = hessian_operator(M, sc.potential, x)
    path = mf.geodesic(M, x, v, samples=sc.samples, t0=sc.anchor)
    try:
        frame = jb.propagate(M, path, mu.frames, H @ mu.frames)
    except DegenerateFrameError as exc:
        raise ScenarioError(f"Jacobi frame degenerates at t={exc.time:.6g}; not a genuine OT interpolation") from exc
    adapted = jb.adapted_frame(frame)
    ops = jb.operators(frame, adapted)
    return BranchData(mu, frame, adapted, ops), path


def monge_mather_ratio(M: mf.ChartManifold, positions: np.ndarray, anchor: int, indices: Sequence[int]) -> float:
    """min over particle pairs and sampled times of d(g_x(t), g_y(t)) / d(g_x(t0), g_y(t0))."""
    N = positions.shape[0]
    if N < 2:
        return 1.0
    i, j = np.triu_indices(N, 1)
    base = _pair_distance(M, positions[i, anchor], positions[j, anchor])
    ratio = np.inf
    for k in indices:
        d = _pair_distance(M, positions[i, k], positions[j, k])
        ratio = min(ratio, float(np.min(d / base)))
    return ratio


def flow(scenarios: PotentialScenario | Sequence[PotentialScenario]) -> InterpolationResult:
    """Propagate one scenario, or a finite union of branches sharing a grid and anchor.

    Branch weights are scaled by ``mass / sum(mass)``.  Where particles of
    different branches coincide at a grid time their densities add, which is
    what the endpoint measures of a branched plan look like.
    """
    scs = _as_list(scenarios)
    M = scs[0].manifold
    first = scs[0]
    for sc in scs[1:]:
        if sc.manifold is not M or sc.samples != first.samples or sc.anchor != first.anchor:
            raise ScenarioError("branches must share manifold, grid and anchor")
        if sc.parametrization.dim != first.parametrization.dim:
            raise ScenarioError("branches must have the same dimension p")
    masses = np.array([sc.mass for sc in scs], float)
    if np.any(masses <= 0):
        raise ScenarioError("branch masses must be positive")
    masses = masses / masses.sum()

    data, paths = zip(*(_flow_branch(sc) for sc in scs))
    times = paths[0].times
    anchor = paths[0].anchor
    S = times.shape[0]
    sample_idx = sorted(set(np.linspace(1, S - 2, min(S - 2, 21)).round().astype(int).tolist()))
    ratio = np.inf
    for d in data:
        ratio = min(ratio, monge_mather_ratio(M, d.frame.path.positions, anchor, sample_idx))
    if not ratio > 1e-9:
        raise ScenarioError(f"transport geodesics cross (Monge-Mather ratio {ratio:.3e})")

    weights, branch, rho_lag, jac = [], [], [], []
    for b, (d, m) in enumerate(zip(data, masses)):
        J = jb.jacobian(d.frame)
        if not np.all(np.isfinite(J)) or np.any(J <= 0):
            raise DegenerateFrameError(float(times[np.argmin(J.min(axis=0))]))
        weights.append(m * d.measure.weights)
        branch.append(np.full(d.measure.size, b))
        rho_lag.append(m * d.measure.density[:, None] / J)
        jac.append(J)
    weights = np.concatenate(weights)
    branch = np.concatenate(branch)
    rho_lag = np.concatenate(rho_lag)
    pos = np.concatenate([d.frame.path.positions for d in data])
    vel = np.concatenate([d.frame.path.velocities for d in data])
    tangent = np.concatenate([d.frame.to_chart(d.adapted.E) for d in data])
    theta = np.concatenate([np.asarray(d.frame.path.speed) for d in data])
    scaled = np.concatenate([d.operators.perp_sq for d in data])
    density = _merge_densities(M, pos, rho_lag, branch) if len(scs) > 1 else rho_lag
    return InterpolationResult(
        manifold=M,
        times=times,
        anchor=anchor,
        p=first.parametrization.dim,
        weights=weights,
        branch=branch,
        positions=pos,
        velocities=vel,
        tangent=tangent,
        jacobian=np.concatenate(jac),
        lagrangian_density=rho_lag,
        density=density,
        kappa=jb.KappaProfile(theta, times, scaled),
        contraction=ratio,
        branches=tuple(data),
    )


def _merge_densities(M, pos, rho, branch, tol: float = COINCIDE_TOL) -> np.ndarray:
    out = rho.copy()
    labels = np.unique(branch)
    for k in range(pos.shape[1]):
        for ia, a in enumerate(labels):
            for b in labels[ia + 1 :]:
                A = np.nonzero(branch == a)[0]
                B = np.nonzero(branch == b)[0]
                diff = M.domain.difference(pos[A, k][:, None, :], pos[B, k][None, :, :])
                close = np.linalg.norm(diff, axis=-1) < tol
                if close.any():
                    out[A, k] += close @ rho[B, k]
                    out[B, k] += close.T @ rho[A, k]
    return out


def density_along(result: InterpolationResult, t: float) -> ParticleMeasure:
    """The interpolating measure at grid time t (one particle per transported particle)."""
    k = result.index(t)
    rho = result.density[:, k]
    if np.any(~(rho > 0)) or not np.all(np.isfinite(rho)):
        raise DegenerateFrameError(float(t), "Jacobian vanished; density undefined")
    return ParticleMeasure(result.positions[:, k], result.weights, result.tangent[:, k], rho, result.p)


# ---------------------------------------------------------------------------
# assignment oracle


@dataclass(frozen=True, eq=False)
class TransportPlanDiscrete:
    source: np.ndarray
    target: np.ndarray
    cost: float

    @property
    def permutation(self) -> np.ndarray:
        perm = np.empty_like(self.target)
        perm[self.source] = self.target
        return perm


def exact_assignment(M: mf.ChartManifold, mu_a: ParticleMeasure, mu_b: ParticleMeasure) -> TransportPlanDiscrete:
    """Optimal bijection for cost d^2 between equal-size, equal-weight clouds."""
    if mu_a.size != mu_b.size:
        raise UnsupportedInstanceError("particle counts differ")
    N = mu_a.size
    if N > MAX_ASSIGNMENT:
        raise UnsupportedInstanceError(f"N={N} exceeds the oracle limit {MAX_ASSIGNMENT}")
    for mu in (mu_a, mu_b):
        if np.max(np.abs(mu.weights * N - 1.0)) > 1e-9:
            raise UnsupportedInstanceError("oracle needs uniform weights")
    C = _pair_distance(M, mu_a.positions[:, None, :], mu_b.positions[None, :, :]) ** 2
    rows, cols = linear_sum_assignment(C)
    return TransportPlanDiscrete(rows, cols, float(C[rows, cols].sum() / N))


def wasserstein2(M: mf.ChartManifold, mu_a: ParticleMeasure, mu_b: ParticleMeasure) -> float:
    return float(np.sqrt(exact_assignment(M, mu_a, mu_b).cost))


@dataclass(frozen=True)
class OptimalityCertificate:
    passed: bool
    gap: float
    scenario_cost: float
    oracle_cost: float


def coupling_cost(result: InterpolationResult, r: float = 0.0, u: float = 1.0) -> float:
    i, k = result.index(r), result.index(u)
    d = _pair_distance(result.manifold, result.positions[:, i], result.positions[:, k])
    return float(np.sum(result.weights * d**2))


def validate_optimality(result: InterpolationResult, tol: float = 1e-6, raise_on_failure: bool = True) -> OptimalityCertificate:
    """Compare the potential-driven coupling of the endpoints against the exact oracle."""
    scen = coupling_cost(result)
    oracle = exact_assignment(result.manifold, result.measure(0.0), result.measure(1.0)).cost
    if oracle > 0:
        gap = (scen - oracle) / oracle
    else:
        gap = 0.0 if scen <= 1e-15 else np.inf
    cert = OptimalityCertificate(gap <= tol, float(gap), scen, oracle)
    if raise_on_failure and not cert.passed:
        raise NotOptimalError(gap)
    return cert


def geodesy_defect(result: InterpolationResult, r: float, s: float, u: float) -> float:
    """Relative defect of ``W(r,u) = W(r,s) + W(s,u)`` with oracle distances."""
    M = result.manifold
    mr, ms, mu = result.measure(r), result.measure(s), result.measure(u)
    whole = wasserstein2(M, mr, mu)
    parts = wasserstein2(M, mr, ms) + wasserstein2(M, ms, mu)
    return abs(parts - whole) / max(whole, 1e-300)


def check_measure(M: mf.ChartManifold, mu: ParticleMeasure) -> None:
    try:
        mu.validate(M)
    except (ValueError, InvalidFrameError) as exc:
        raise ScenarioError(str(exc)) from exc
