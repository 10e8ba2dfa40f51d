"""Scenario files: a versioned TOML schema, strict parsing and scenario construction.

Layout::

    version = 1
    id = "segments"

    [manifold]            # model = euclidean | sphere | hyperbolic | cylinder | custom
    model = "euclidean"
    dim = 2

    [discretization]
    particles = 256       # per branch; a perfect p-th power
    grid = 2001
    anchor = 0.5

    [[branch]]
    mass = 1.0
    [branch.parametrization]
    kind = "affine"       # or "circle"
    origin = [0.0, 0.0]
    axes = [[1.0], [0.0]] # n rows, p columns
    [branch.potential]
    center = [0.0, 0.0]
    gradient = [0.0, 0.0]
    hessian = [[0.0, -1.0], [-1.0, 0.0]]

    [[check]]
    kind = "lower-renyi"  # upper-sec | lower-renyi | lower-entropy | brunn-minkowski | sectional-form
    K = 0.0

Unknown keys are errors.  See README.md for every field.
"""

from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli
import tomli_w

from . import manifold as mf
from . import transport as tr
from .errors import ConfigError

SCHEMA_VERSION = 1
MODELS = ("euclidean", "sphere", "hyperbolic", "cylinder", "custom")
CHECK_KINDS = ("upper-sec", "lower-renyi", "lower-entropy", "brunn-minkowski", "sectional-form")


def _floats(v, key) -> tuple[float, ...]:
    try:
        return tuple(float(a) for a in v)
    except (TypeError, ValueError):
        raise ConfigError("expected a list of numbers", key) from None


def _matrix(v, key) -> tuple[tuple[float, ...], ...]:
    try:
        return tuple(_floats(row, key) for row in v)
    except ConfigError:
        raise
    except TypeError:
        raise ConfigError("expected a list of lists of numbers", key) from None


def _take(table: dict, allowed: set[str], required: set[str], path: str) -> None:
    if not isinstance(table, dict):
        raise ConfigError("expected a table", path)
    for k in table:
        if k not in allowed:
            raise ConfigError("unknown key", f"{path}.{k}" if path else k)
    for k in required:
        if k not in table:
            raise ConfigError("missing required key", f"{path}.{k}" if path else k)


def _num(table, key, path, default=None, kind=float):
    if key not in table:
        if default is None:
            return None
        return default
    v = table[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"expected a number", f"{path}.{key}")
    if kind is int:
        if isinstance(v, float) and not v.is_integer():
            raise ConfigError("expected an integer", f"{path}.{key}")
        return int(v)
    return float(v)


def _bool(table, key, path, default=False) -> bool:
    v = table.get(key, default)
    if not isinstance(v, bool):
        raise ConfigError("expected true/false", f"{path}.{key}")
    return v


def _drop_none(d: dict) -> dict:
    return {k: v for k, v in d.items() if v is not None and v != ()}


# ---------------------------------------------------------------------------
# specs


@dataclass(frozen=True)
class MetricTermSpec:
    coef: float
    factors: tuple[tuple[str, int, float, float], ...] = ()


@dataclass(frozen=True)
class MetricEntrySpec:
    i: int
    j: int
    terms: tuple[MetricTermSpec, ...]


@dataclass(frozen=True)
class ManifoldSpec:
    model: str
    dim: int | None = None
    radius: float | None = None
    metric: tuple[MetricEntrySpec, ...] = ()
    periodic: tuple[tuple[int, float], ...] = ()
    lower: tuple[float, ...] = ()
    upper: tuple[float, ...] = ()

    @classmethod
    def from_dict(cls, d: dict) -> "ManifoldSpec":
        path = "manifold"
        _take(d, {"model", "dim", "radius", "metric", "periodic", "lower", "upper"}, {"model"}, path)
        model = d["model"]
        if model not in MODELS:
            raise ConfigError(f"model must be one of {', '.join(MODELS)}", f"{path}.model")
        entries = []
        for k, e in enumerate(d.get("metric", [])):
            ep = f"{path}.metric[{k}]"
            _take(e, {"i", "j", "terms"}, {"i", "j", "terms"}, ep)
            terms = []
            for m, t in enumerate(e["terms"]):
                tp = f"{ep}.terms[{m}]"
                _take(t, {"coef", "factors"}, {"coef"}, tp)
                facs = []
                for f in t.get("factors", []):
                    if not (isinstance(f, list) and len(f) == 4 and f[0] in ("pow", "sin", "cos")):
                        raise ConfigError("factor must be [kind, var, freq, power] with kind pow|sin|cos", tp)
                    facs.append((str(f[0]), int(f[1]), float(f[2]), float(f[3])))
                terms.append(MetricTermSpec(float(t["coef"]), tuple(facs)))
            entries.append(MetricEntrySpec(int(e["i"]), int(e["j"]), tuple(terms)))
        periodic = tuple((int(a), float(b)) for a, b in d.get("periodic", []))
        spec = cls(model, _num(d, "dim", path, kind=int), _num(d, "radius", path), tuple(entries), periodic,
                   _floats(d.get("lower", ()), f"{path}.lower"), _floats(d.get("upper", ()), f"{path}.upper"))
        if model == "custom" and (spec.dim is None or not spec.metric):
            raise ConfigError("custom metrics need dim and metric entries", path)
        return spec

    def to_dict(self) -> dict:
        metric = [
            {"i": e.i, "j": e.j, "terms": [_drop_none({"coef": t.coef, "factors": [list(f) for f in t.factors] or None})
                                          for t in e.terms]}
            for e in self.metric
        ]
        return _drop_none({
            "model": self.model, "dim": self.dim, "radius": self.radius, "metric": metric or None,
            "periodic": [list(p) for p in self.periodic] or None,
            "lower": list(self.lower) or None, "upper": list(self.upper) or None,
        })

    def build(self) -> mf.ChartManifold:
        r = 1.0 if self.radius is None else self.radius
        if self.model == "euclidean":
            return mf.Euclidean(self.dim or 2)
        if self.model == "sphere":
            return mf.Sphere(self.dim or 2, r)
        if self.model == "hyperbolic":
            return mf.Hyperbolic(self.dim or 2, r)
        if self.model == "cylinder":
            if self.dim not in (None, 2):
                raise ConfigError("cylinder has dim 2", "manifold.dim")
            return mf.Cylinder(r)
        n = self.dim
        metric = mf.CoefficientMetric(n, tuple(
            (e.i, e.j, tuple(mf.MetricTerm(t.coef, t.factors) for t in e.terms)) for e in self.metric))
        lower = tuple(self.lower) if self.lower else None
        upper = tuple(self.upper) if self.upper else None
        return mf.custom(n, metric, mf.ChartDomain(n, lower, upper, self.periodic))


@dataclass(frozen=True)
class ParametrizationSpec:
    kind: str
    origin: tuple[float, ...] = ()
    axes: tuple[tuple[float, ...], ...] = ()
    center: tuple[float, ...] = ()
    radius: float | None = None
    plane: tuple[int, int] = (0, 1)
    start: float = 0.0
    stop: float = 2.0 * np.pi

    @classmethod
    def from_dict(cls, d: dict, path: str) -> "ParametrizationSpec":
        _take(d, {"kind", "origin", "axes", "center", "radius", "plane", "start", "stop"}, {"kind"}, path)
        kind = d["kind"]
        if kind == "affine":
            _take(d, {"kind", "origin", "axes"}, {"origin", "axes"}, path)
            return cls(kind, origin=_floats(d["origin"], f"{path}.origin"), axes=_matrix(d["axes"], f"{path}.axes"))
        if kind == "circle":
            _take(d, {"kind", "center", "radius", "plane", "start", "stop"}, {"center", "radius"}, path)
            plane = tuple(int(a) for a in d.get("plane", (0, 1)))
            return cls(kind, center=_floats(d["center"], f"{path}.center"), radius=_num(d, "radius", path),
                       plane=plane, start=_num(d, "start", path, 0.0), stop=_num(d, "stop", path, 2.0 * np.pi))
        raise ConfigError("kind must be affine or circle", f"{path}.kind")

    def to_dict(self) -> dict:
        if self.kind == "affine":
            return {"kind": self.kind, "origin": list(self.origin), "axes": [list(r) for r in self.axes]}
        return {"kind": self.kind, "center": list(self.center), "radius": self.radius, "plane": list(self.plane),
                "start": self.start, "stop": self.stop}

    def build(self):
        if self.kind == "affine":
            return tr.AffinePatch(self.origin, self.axes)
        return tr.CircleArc(self.center, self.radius, self.plane, self.start, self.stop)


@dataclass(frozen=True)
class PotentialSpec:
    center: tuple[float, ...]
    gradient: tuple[float, ...]
    hessian: tuple[tuple[float, ...], ...]
    constant: float = 0.0

    @classmethod
    def from_dict(cls, d: dict, path: str) -> "PotentialSpec":
        _take(d, {"kind", "center", "gradient", "hessian", "constant"}, {"center", "gradient", "hessian"}, path)
        if d.get("kind", "quadratic") != "quadratic":
            raise ConfigError("only quadratic potentials are supported", f"{path}.kind")
        return cls(_floats(d["center"], f"{path}.center"), _floats(d["gradient"], f"{path}.gradient"),
                   _matrix(d["hessian"], f"{path}.hessian"), _num(d, "constant", path, 0.0))

    def to_dict(self) -> dict:
        return {"kind": "quadratic", "center": list(self.center), "gradient": list(self.gradient),
                "hessian": [list(r) for r in self.hessian], "constant": self.constant}

    def build(self) -> tr.QuadraticPotential:
        return tr.QuadraticPotential(self.center, self.gradient, self.hessian, self.constant)


@dataclass(frozen=True)
class BranchSpec:
    parametrization: ParametrizationSpec
    potential: PotentialSpec
    mass: float = 1.0

    @classmethod
    def from_dict(cls, d: dict, path: str) -> "BranchSpec":
        _take(d, {"parametrization", "potential", "mass"}, {"parametrization", "potential"}, path)
        return cls(ParametrizationSpec.from_dict(d["parametrization"], f"{path}.parametrization"),
                   PotentialSpec.from_dict(d["potential"], f"{path}.potential"), _num(d, "mass", path, 1.0))

    def to_dict(self) -> dict:
        return {"mass": self.mass, "parametrization": self.parametrization.to_dict(),
                "potential": self.potential.to_dict()}


@dataclass(frozen=True)
class CheckSpec:
    kind: str
    K: float = 0.0
    p_prime: float | None = None
    times: int = 11
    tol: float | None = None
    expect_fail: bool = False
    force_kappa_zero: bool = False
    t0: float | None = None
    t1: float | None = None
    form: str | None = None

    @classmethod
    def from_dict(cls, d: dict, path: str) -> "CheckSpec":
        _take(d, {"kind", "K", "p_prime", "times", "tol", "expect_fail", "force_kappa_zero", "t0", "t1", "form"},
              {"kind"}, path)
        kind = d["kind"]
        if kind not in CHECK_KINDS:
            raise ConfigError(f"kind must be one of {', '.join(CHECK_KINDS)}", f"{path}.kind")
        spec = cls(kind, _num(d, "K", path, 0.0), _num(d, "p_prime", path), _num(d, "times", path, 11, int),
                   _num(d, "tol", path), _bool(d, "expect_fail", path), _bool(d, "force_kappa_zero", path),
                   _num(d, "t0", path), _num(d, "t1", path), d.get("form"))
        if kind == "upper-sec" and (spec.t0 is None or spec.t1 is None):
            raise ConfigError("upper-sec needs t0 and t1", path)
        if kind == "sectional-form" and spec.form not in ("renyi", "entropy"):
            raise ConfigError("sectional-form needs form = renyi | entropy", f"{path}.form")
        if spec.form is not None and kind != "sectional-form":
            raise ConfigError("form only applies to sectional-form", f"{path}.form")
        return spec

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        return {k: v for k, v in d.items() if v is not None}


@dataclass(frozen=True)
class ScenarioConfig:
    id: str
    manifold: ManifoldSpec
    branches: tuple[BranchSpec, ...]
    checks: tuple[CheckSpec, ...]
    particles: int = 256
    grid: int = 2001
    anchor: float = 0.5
    certify: bool = True
    certify_tol: float = 1e-6
    csv: str | None = None
    description: str = ""
    version: int = SCHEMA_VERSION

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        top = {"version", "id", "description", "manifold", "discretization", "branch", "check", "certify", "output"}
        _take(d, top, set(), "")
        for name, keys in (("discretization", {"particles", "grid", "anchor"}), ("certify", {"enabled", "tol"}),
                           ("output", {"csv"})):
            _take(d.get(name, {}), keys, set(), name)
        _take(d, top, {"version", "id", "manifold", "branch"}, "")
        if d["version"] != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema version {d['version']!r} (expected {SCHEMA_VERSION})", "version")
        disc = d.get("discretization", {})
        cert = d.get("certify", {})
        out = d.get("output", {})
        branches = d["branch"]
        if not isinstance(branches, list) or not branches:
            raise ConfigError("need at least one [[branch]]", "branch")
        checks = d.get("check", [])
        if not isinstance(checks, list):
            raise ConfigError("use [[check]] tables", "check")
        if not isinstance(d["id"], str) or not re.fullmatch(r"[A-Za-z0-9_.\-]+", d["id"]):
            raise ConfigError("id must be a non-empty name of letters, digits, '-', '_' or '.'", "id")
        return cls(
            id=d["id"],
            manifold=ManifoldSpec.from_dict(d["manifold"]),
            branches=tuple(BranchSpec.from_dict(b, f"branch[{k}]") for k, b in enumerate(branches)),
            checks=tuple(CheckSpec.from_dict(c, f"check[{k}]") for k, c in enumerate(checks)),
            particles=_num(disc, "particles", "discretization", 256, int),
            grid=_num(disc, "grid", "discretization", 2001, int),
            anchor=_num(disc, "anchor", "discretization", 0.5),
            certify=_bool(cert, "enabled", "certify", True),
            certify_tol=_num(cert, "tol", "certify", 1e-6),
            csv=out.get("csv"),
            description=str(d.get("description", "")),
        )

    def to_dict(self) -> dict:
        d = {
            "version": self.version,
            "id": self.id,
            "description": self.description or None,
            "manifold": self.manifold.to_dict(),
            "discretization": {"particles": self.particles, "grid": self.grid, "anchor": self.anchor},
            "certify": {"enabled": self.certify, "tol": self.certify_tol},
            "output": {"csv": self.csv} if self.csv else None,
            "branch": [b.to_dict() for b in self.branches],
            "check": [c.to_dict() for c in self.checks] or None,
        }
        return _drop_none(d)

    def dumps(self) -> str:
        return tomli_w.dumps(self.to_dict())

    def scenarios(self) -> list[tr.PotentialScenario]:
        M = self.manifold.build()
        return [
            tr.PotentialScenario(M, b.parametrization.build(), b.potential.build(), self.particles, self.grid,
                                 self.anchor, mass=b.mass, name=f"{self.id}[{k}]")
            for k, b in enumerate(self.branches)
        ]


def _line_of(text: str, key: str | None) -> int | None:
    if not key:
        return None
    leaf = key.split(".")[-1].split("[")[0]
    pat = re.compile(rf"^\s*{re.escape(leaf)}\s*=")
    for n, line in enumerate(text.splitlines(), 1):
        if pat.match(line):
            return n
    return None


def loads(text: str) -> ScenarioConfig:
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"syntax error: {exc}", line=int(m.group(1)) if m else None) from None
    try:
        return ScenarioConfig.from_dict(data)
    except ConfigError as exc:
        if exc.line is None:
            raise ConfigError(str(exc).split("] ", 1)[-1] if exc.key else str(exc), exc.key,
                              _line_of(text, exc.key)) from None
        raise


def load(path: str | Path) -> ScenarioConfig:
    return loads(Path(path).read_text())


def gallery_dir() -> Path:
    return Path(__file__).with_name("gallery")


def resolve(path: str) -> Path:
    """Accept a file path or ``gallery:<name>`` for a shipped scenario.

    ``gallery/<name>.<ext>`` also falls back to the shipped file when no such
    local file exists.
    """
    if path.startswith("gallery:"):
        return gallery_dir() / f"{path.split(':', 1)[1]}.toml"
    p = Path(path)
    if not p.exists() and p.parent.name == "gallery":
        shipped = gallery_dir() / f"{p.stem}.toml"
        if shipped.exists():
            return shipped
    return p
