"""Command-line runner for scenario files.

    otcurv run gallery:segments path/to/other.toml --out results/
    otcurv sweep gallery:sphere-arc --param particles --values 16,64,256
    otcurv gallery

Exit status: 0 when every ordinary check passes and every ``expect_fail``
check reproduced its violation, 1 otherwise, 2 for unreadable or invalid files.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from . import config as cf
from . import transport as tr
from . import verify as vf
from .errors import ConfigError, OTCurvatureError

log = logging.getLogger("otcurvature")

SWEEP_PARAMS = ("particles", "grid", "p_prime", "K", "times", "tol")


@dataclass
class ScenarioOutcome:
    id: str
    reports: list[vf.InequalityReport] = field(default_factory=list)
    errors: list[str] = field(default_factory=list)
    ok: bool = True


def _check_ok(check: cf.CheckSpec, reports: list[vf.InequalityReport]) -> bool:
    if check.expect_fail:
        return any(not r.passed for r in reports)
    return all(r.passed for r in reports)


def _run_check(result: tr.InterpolationResult, check: cf.CheckSpec, sid: str, tol_override: float | None):
    tol = tol_override if tol_override is not None else check.tol
    kw = {} if tol is None else {"tol": tol}
    if check.kind == "lower-renyi":
        return vf.check_lower_renyi(result, check.K, check.p_prime, check.times, scenario=sid,
                                    force_kappa_zero=check.force_kappa_zero, expect_fail=check.expect_fail, **kw)
    if check.kind == "lower-entropy":
        return vf.check_lower_entropy(result, check.K, check.times, scenario=sid,
                                      force_kappa_zero=check.force_kappa_zero, expect_fail=check.expect_fail, **kw)
    if check.kind == "brunn-minkowski":
        return vf.brunn_minkowski(result, check.K, check.p_prime, check.times, scenario=sid,
                                  expect_fail=check.expect_fail, **kw)
    if check.kind == "sectional-form":
        return vf.check_sectional_forms(result, check.K, check.form, check.p_prime, check.times, scenario=sid,
                                        expect_fail=check.expect_fail, **kw)
    return vf.check_upper(result, check.K, check.t0, check.t1, check.times, scenario=sid,
                          expect_fail=check.expect_fail, **kw)


def run_scenario(cfg: cf.ScenarioConfig, tol_override: float | None = None) -> ScenarioOutcome:
    """Flow, certify and check one scenario.  Errors are collected, never raised."""
    out = ScenarioOutcome(cfg.id)
    try:
        result = tr.flow(cfg.scenarios())
    except (OTCurvatureError, ValueError) as exc:
        out.errors.append(f"flow: {exc}")
        out.ok = False
        return out
    if cfg.certify:
        try:
            cert = tr.validate_optimality(result, cfg.certify_tol, raise_on_failure=False)
        except (OTCurvatureError, ValueError) as exc:
            out.errors.append(f"certificate: {exc}")
            out.ok = False
            return out
        if not cert.passed:
            out.errors.append(f"certificate: coupling not optimal, relative gap {cert.gap:.3e}")
            out.ok = False
            return out
    for k, check in enumerate(cfg.checks):
        try:
            reports = _run_check(result, check, cfg.id, tol_override)
        except (OTCurvatureError, ValueError) as exc:
            out.errors.append(f"check[{k}] {check.kind}: {type(exc).__name__}: {exc}")
            out.ok = False
            continue
        out.reports.extend(reports)
        if not _check_ok(check, reports):
            out.ok = False
    return out


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _apply_overrides(cfg: cf.ScenarioConfig, args) -> cf.ScenarioConfig:
    changes = {}
    if getattr(args, "grid", None):
        changes["grid"] = args.grid
    if getattr(args, "particles", None):
        changes["particles"] = args.particles
    return dataclasses.replace(cfg, **changes) if changes else cfg


def _sweep_variant(cfg: cf.ScenarioConfig, param: str, value: str) -> cf.ScenarioConfig:
    sid = f"{cfg.id}[{param}={value}]"
    if param in ("particles", "grid"):
        return dataclasses.replace(cfg, id=sid, **{param: int(value)})
    conv = int if param == "times" else float
    checks = tuple(dataclasses.replace(c, **{param: conv(value)}) for c in cfg.checks)
    return dataclasses.replace(cfg, id=sid, checks=checks)


def _load_all(paths: list[str]) -> list[tuple[Path, cf.ScenarioConfig]]:
    loaded = []
    for p in paths:
        path = cf.resolve(p)
        try:
            loaded.append((path, cf.load(path)))
        except FileNotFoundError:
            raise ConfigError(f"no such file: {path}") from None
        except ConfigError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    return loaded


def _emit(outcomes: list[ScenarioOutcome], args, out_name) -> int:
    reports = [r for o in outcomes for r in o.reports]
    text = vf.to_csv(reports)
    for o in outcomes:
        for e in o.errors:
            print(f"error: {o.id}: {e}", file=sys.stderr)
    if args.csv:
        sys.stdout.write(text)
    if args.summary:
        stream = sys.stderr if args.csv else sys.stdout
        print(vf.summary_table(reports), file=stream)
        for o in outcomes:
            print(f"{o.id}: {'ok' if o.ok else 'FAILED'}", file=stream)
    for path, body in out_name(outcomes):
        write_atomic(path, body)
        log.info("wrote %s", path)
    return 0 if all(o.ok for o in outcomes) else 1


def cmd_run(args) -> int:
    loaded = _load_all(args.configs)
    outcomes = []
    targets = []
    for path, cfg in loaded:
        cfg = _apply_overrides(cfg, args)
        log.info("running %s", cfg.id)
        o = run_scenario(cfg, args.tol_override)
        outcomes.append(o)
        if args.out:
            targets.append((Path(args.out) / f"{cfg.id}.csv", o))
        elif cfg.csv:
            targets.append((Path(cfg.csv), o))
    return _emit(outcomes, args, lambda _: [(p, vf.to_csv(o.reports)) for p, o in targets])


def cmd_sweep(args) -> int:
    (path, cfg), = _load_all([args.config])
    cfg = _apply_overrides(cfg, args)
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    outcomes = []
    for v in values:
        try:
            variant = _sweep_variant(cfg, args.param, v)
        except ValueError:
            raise ConfigError(f"bad sweep value {v!r} for {args.param}") from None
        log.info("running %s", variant.id)
        outcomes.append(run_scenario(variant, args.tol_override))

    def target(outs):
        dest = Path(args.out) if args.out else (Path(cfg.csv).parent if cfg.csv else None)
        if dest is None:
            return []
        return [(dest / f"{cfg.id}-sweep-{args.param}.csv", vf.to_csv([r for o in outs for r in o.reports]))]

    return _emit(outcomes, args, target)


def cmd_gallery(args) -> int:
    for p in sorted(cf.gallery_dir().glob("*.toml")):
        cfg = cf.load(p)
        print(f"gallery:{p.stem:<22} {cfg.description}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="otcurv", description="Check curvature-dimension inequalities on "
                                 "potential-driven transport scenarios.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", help="directory for CSV output (one file per scenario)")
        p.add_argument("--tol-override", type=float, help="replace every check tolerance")
        p.add_argument("--grid", type=int, help="override the number of time samples")
        p.add_argument("--particles", type=int, help="override the particles per branch")
        p.add_argument("--csv", action="store_true", help="print the CSV to stdout")
        p.add_argument("--no-summary", dest="summary", action="store_false", help="skip the summary table")

    run = sub.add_parser("run", help="run one or more scenario files")
    run.add_argument("configs", nargs="+", help="TOML files or gallery:<name>")
    common(run)
    run.set_defaults(func=cmd_run)

    sw = sub.add_parser("sweep", help="rerun one scenario over a list of parameter values")
    sw.add_argument("config")
    sw.add_argument("--param", required=True, choices=SWEEP_PARAMS)
    sw.add_argument("--values", required=True, help="comma-separated values")
    common(sw)
    sw.set_defaults(func=cmd_sweep)

    gal = sub.add_parser("gallery", help="list the shipped scenarios")
    gal.set_defaults(func=cmd_gallery)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
