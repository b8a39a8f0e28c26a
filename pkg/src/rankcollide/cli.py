"""Command-line front end.

Usage:
    rankcollide check spec.json --n 4 [--criterion THM11 ...] [--format table]
    rankcollide validate spec.json
    rankcollide simulate spec.json --seed 7 --T 1 --dt 1e-3 --paths 1000 --out runs/a
    rankcollide sweep template.json [--axis N=4:10] [--out runs/sweep]

Exit codes: 0 all requested criteria hold / success, 2 a criterion fails or
the spec is invalid, 1 input or I/O error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import itertools
import json
import sys
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from . import conditions as C
from .model import (
    FiniteSystemSpec,
    InfiniteSystemSpec,
    InvalidInputError,
    SpecError,
    UnsupportedFamilyError,
    load_spec,
    spec_from_dict,
    spec_to_dict,
    validate_finite_spec,
    validate_infinite_spec,
)
from .simulate import (
    DEFAULT_EPSILONS,
    ResourceError,
    SimConfig,
    SimulationError,
    convergence_check,
    monte_carlo,
    result_to_csv,
    result_to_json,
    simulate_infinite_truncated,
    simulate_trajectory,
    trajectory_to_csv,
)

EXIT_OK, EXIT_INPUT, EXIT_FAIL = 0, 1, 2


class CliError(Exception):
    """Input error reported with exit code 1."""


# ----------------------------------------------------------------------------
# manifest
# ----------------------------------------------------------------------------


def config_hash(doc: Any) -> str:
    canonical = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass
class RunManifest:
    command: str
    config_hash: str
    seed: int | None
    tool_version: str
    started: str
    finished: str

    def write(self, out_dir: Path) -> None:
        (out_dir / "manifest.json").write_text(
            json.dumps(self.__dict__, indent=2) + "\n", encoding="utf-8")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


# ----------------------------------------------------------------------------
# check / validate
# ----------------------------------------------------------------------------


def _strict_flag(args) -> bool | None:
    return {"default": None, "strict": True, "nonstrict": False}[args.strictness]


def _call(fn, *a, strict=None, **kw):
    return fn(*a, **kw) if strict is None else fn(*a, strict=strict, **kw)


def finite_reports(spec: FiniteSystemSpec, n: int | None, criteria: Sequence[str],
                   window_criterion: str = "LEMMA21",
                   strict: bool | None = None) -> list[C.ConditionReport]:
    s = spec.sigma2
    n = spec.N if n is None else n
    criteria = list(criteria) or ["WINDOW_REDUCTION"]
    out: list[C.ConditionReport] = []
    for crit in criteria:
        if crit == "WINDOW_REDUCTION":
            out.append(C.no_ntuple_check(s, n, window_criterion, strict))
        elif crit == "THM11":
            out.append(_call(C.thm11_check, s, n, strict=strict))
        elif crit in ("LEMMA31", "LEMMA31A", "LEMMA31B", "LEMMA31C"):
            reports = C.four_particle_report(s, strict)
            out.extend(r for r in reports
                       if crit == "LEMMA31" or r.criterion in (crit, "EQ_TOTAL4"))
        elif crit == "THM42":
            raise CliError("THM42 applies to infinite-system specs only")
        else:
            fn = {
                "CONCAVITY": C.concavity_check,
                "LEMMA21": C.lemma21_check,
                "COR22": C.cor22_check,
                "EQ_TOTAL4": C.eq_total4_check,
                "COR24": C.cor24_check,
            }.get(crit)
            if fn is None:
                raise CliError(f"unknown criterion {crit!r}")
            out.append(_call(fn, s, strict=strict))
    # four-particle listing may repeat the total report
    unique, seen = [], set()
    for r in out:
        key = json.dumps(r.to_dict(), sort_keys=True)
        if key not in seen:
            seen.add(key)
            unique.append(r)
    return unique


def _format_reports(reports: Sequence[C.ConditionReport], fmt: str) -> str:
    if fmt == "json":
        return C.reports_to_json(reports) + "\n"
    if fmt == "csv":
        return C.reports_to_csv(reports)
    rows = [("criterion", "label", "holds", "margin", "sense")]
    for r in reports:
        rows.append((r.criterion, r.label or "", "yes" if r.holds else "NO",
                     f"{r.margin:.6g}", "<" if r.strict else "<="))
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    return "".join("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() + "\n"
                   for row in rows)


def _load_checked(path: str):
    try:
        spec = load_spec(path)
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}") from None
    return spec


def cmd_check(args) -> int:
    spec = _load_checked(args.spec)
    strict = _strict_flag(args)
    criteria = [c.upper() for c in (args.criterion or [])]
    if isinstance(spec, InfiniteSystemSpec):
        if args.n is None:
            raise CliError("--n is required for infinite systems")
        bad = [c for c in criteria if c != "THM42"]
        if bad:
            raise CliError(f"criteria {bad} do not apply to infinite systems")
        try:
            reports = [_call(C.infinite_ntuple_check, spec, args.n, strict=strict)]
        except C.PreconditionError as exc:
            raise CliError(f"spec fails gate {exc}") from None
    else:
        problems = validate_finite_spec(spec)
        if problems:
            raise CliError("invalid spec: " + "; ".join(problems))
        reports = finite_reports(spec, args.n, criteria, args.window_criterion.upper(), strict)
    text = _format_reports(reports, args.format)
    _emit(text, args.out, f"check.{_ext(args.format)}")
    if args.out:
        _manifest(args, "check", {"spec": spec_to_dict(spec), "n": args.n,
                                  "criteria": criteria, "strictness": args.strictness})
    return EXIT_OK if all(r.holds for r in reports) else EXIT_FAIL


def cmd_validate(args) -> int:
    spec = _load_checked(args.spec)
    if isinstance(spec, InfiniteSystemSpec):
        problems = [f"[{v.gate}] {v}" for v in validate_infinite_spec(spec)]
    else:
        problems = validate_finite_spec(spec)
    if args.format == "json":
        text = json.dumps({"valid": not problems, "violations": problems}, indent=2) + "\n"
    else:
        text = "valid\n" if not problems else "".join(f"violation: {p}\n" for p in problems)
    _emit(text, args.out, f"validate.{'json' if args.format == 'json' else 'txt'}")
    return EXIT_OK if not problems else EXIT_FAIL


# ----------------------------------------------------------------------------
# simulate
# ----------------------------------------------------------------------------


def _parse_window(text: str) -> tuple[int, int]:
    try:
        k, n = text.split(":")
        return int(k), int(n)
    except ValueError:
        raise CliError(f"--window expects k:n (got {text!r})") from None


def _sim_config(args, n_tracked: int) -> SimConfig:
    if args.seed is None:
        raise CliError("--seed is required for reproducible runs")
    windows = [_parse_window(w) for w in (args.window or [])]
    if args.n is not None:
        windows += [(k, args.n) for k in range(1, n_tracked - args.n + 2)]
    return SimConfig(
        T=args.T,
        dt=args.dt,
        paths=args.paths,
        seed=args.seed,
        epsilons=tuple(args.eps) if args.eps else DEFAULT_EPSILONS,
        track_windows=tuple(dict.fromkeys(windows)),
        truncation_M=args.truncation_M,
        buffer_B=args.buffer_B,
        threads=args.threads,
        backend=args.backend,
    )


def cmd_simulate(args) -> int:
    if not args.out:
        raise CliError("--out is required for simulate")
    spec = _load_checked(args.spec)
    started = _now()
    if isinstance(spec, InfiniteSystemSpec):
        if args.truncation_M is None:
            raise CliError("infinite systems need --truncation-M")
        config = _sim_config(args, args.truncation_M - args.buffer_B)
        try:
            result = simulate_infinite_truncated(spec, config)
        except C.PreconditionError as exc:
            raise CliError(f"spec fails gate {exc}") from None
    else:
        problems = validate_finite_spec(spec)
        if problems:
            raise CliError("invalid spec: " + "; ".join(problems))
        config = _sim_config(args, spec.N)
        result = monte_carlo(spec, config)
    out = _out_dir(args.out)
    (out / "aggregate.json").write_text(result_to_json(result), encoding="utf-8")
    (out / "aggregate.csv").write_text(result_to_csv(result), encoding="utf-8")
    if args.convergence_check:
        report = convergence_check(spec, result.config)
        (out / "convergence.json").write_text(json.dumps(report, indent=2) + "\n",
                                              encoding="utf-8")
    if args.trajectory:
        finite = spec if isinstance(spec, FiniteSystemSpec) else spec.truncate(args.truncation_M)
        t, X = simulate_trajectory(finite, result.config, 0)
        (out / "trajectory.csv").write_text(trajectory_to_csv(t, X), encoding="utf-8")
    _manifest(args, "simulate", {"spec": spec_to_dict(spec), "config": result.config.echo()},
              started=started)
    if args.format == "table":
        print(result_to_csv(result), end="")
    else:
        print(f"wrote {out / 'aggregate.json'}")
    return EXIT_OK


# ----------------------------------------------------------------------------
# sweep
# ----------------------------------------------------------------------------

FAMILIES = {
    # sigma2_1 = sigma2_N = 1, middle 1/(N-2)
    "remark23": lambda N: [1.0] + [1.0 / (N - 2)] * (N - 2) + [1.0],
    "constant": lambda N: [1.0] * N,
}


def _parse_axis(text: str) -> tuple[str, list[Any]]:
    """``name=v1,v2,...``, ``name=a:b`` (integers a..b) or ``name=lin:a:b:k``."""
    if "=" not in text:
        raise CliError(f"--axis expects name=values (got {text!r})")
    name, values = text.split("=", 1)
    try:
        if values.startswith("lin:"):
            _, a, b, k = values.split(":")
            return name, [float(v) for v in np.linspace(float(a), float(b), int(k))]
        if ":" in values:
            a, b = values.split(":")
            return name, list(range(int(a), int(b) + 1))
        return name, [json.loads(v) for v in values.split(",") if v]
    except ValueError:
        raise CliError(f"cannot parse axis {text!r}") from None


def _grid_point_spec(template: dict, point: dict[str, Any]) -> tuple[FiniteSystemSpec, int | None]:
    base = dict(template.get("spec") or {})
    N = point.get("N", base.get("N"))
    family = template.get("family")
    if family is not None:
        if family not in FAMILIES:
            raise CliError(f"unknown family {family!r}; have {sorted(FAMILIES)}")
        if N is None:
            raise CliError("family templates need N (fixed in spec or swept)")
        base["sigma2"] = FAMILIES[family](int(N))
    if N is not None and "sigma2" in base and len(base["sigma2"]) != N:
        raise CliError(f"sigma2 has {len(base['sigma2'])} entries but N={N}")
    if N is not None:
        base["N"] = int(N)
        base.setdefault("g", [0.0] * int(N))
        base.setdefault("x0", [float(i) for i in range(int(N))])
    sigma2 = list(base.get("sigma2", []))
    for key, value in point.items():
        if key.startswith("sigma2[") and key.endswith("]"):
            k = int(key[7:-1])
            if not 1 <= k <= len(sigma2):
                raise CliError(f"axis {key} outside 1..{len(sigma2)}")
            sigma2[k - 1] = float(value)
        elif key not in ("N", "n"):
            raise CliError(f"unsupported sweep axis {key!r}")
    base["sigma2"] = sigma2
    spec = spec_from_dict(base)
    if spec.N != len(spec.g) or spec.N != len(spec.x0):
        spec = FiniteSystemSpec(spec.N, spec.g[:spec.N], spec.sigma2, spec.x0[:spec.N])
    n = point.get("n", template.get("n"))
    return spec, None if n is None else int(n)


def run_sweep(template: dict, axes: dict[str, list[Any]], seed: int | None = None,
              threads: int = 1, strict: bool | None = None) -> str:
    """Evaluate the template on every grid point; returns CSV text."""
    axes = {**template.get("axes", {}), **axes}
    if not axes or any(len(v) == 0 for v in axes.values()):
        raise CliError("sweep grid is empty")
    criteria = [c.upper() for c in template.get("criteria", ["WINDOW_REDUCTION"])]
    window_criterion = template.get("window_criterion", "LEMMA21").upper()
    sim = template.get("simulate")
    if sim is not None and seed is None and "seed" not in sim:
        raise CliError("simulation sweeps need --seed")
    names = list(axes)
    header = names + ["criterion", "label", "holds", "margin"]
    if sim is not None:
        header += ["window_k", "window_n", "epsilon", "proximity_fraction", "stderr"]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for values in itertools.product(*(axes[n] for n in names)):
        point = dict(zip(names, values))
        spec, n = _grid_point_spec(template, point)
        problems = validate_finite_spec(spec)
        if problems:
            raise CliError(f"grid point {point}: " + "; ".join(problems))
        reports = finite_reports(spec, n, criteria, window_criterion, strict)
        sim_rows: list[list[Any]] = [[]]
        if sim is not None:
            config = SimConfig(
                T=float(sim.get("T", 1.0)), dt=float(sim.get("dt", 1e-3)),
                paths=int(sim.get("paths", 1000)), seed=int(sim.get("seed", seed)),
                epsilons=tuple(sim.get("epsilons", DEFAULT_EPSILONS)),
                track_windows=tuple(tuple(w) for w in sim.get("windows", [])),
                threads=threads,
            )
            result = monte_carlo(spec, config)
            sim_rows = [[w.k, w.n, repr(e), repr(w.proximity_fraction[e]),
                         repr(w.proximity_stderr[e])]
                        for w in result.windows for e in w.proximity_fraction]
        for r in reports:
            for extra in sim_rows:
                writer.writerow([*values, r.criterion, r.label or "",
                                 str(r.holds).lower(), repr(r.margin), *extra])
    return buf.getvalue()


def cmd_sweep(args) -> int:
    try:
        template = json.loads(Path(args.template).read_text(encoding="utf-8"))
    except OSError as exc:
        raise CliError(f"cannot read {args.template}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise CliError(f"template is not valid JSON: {exc}") from None
    if not isinstance(template, dict):
        raise CliError("template must be a JSON object")
    axes = dict(_parse_axis(a) for a in (args.axis or []))
    started = _now()
    text = run_sweep(template, axes, args.seed, args.threads, _strict_flag(args))
    _emit(text, args.out, "sweep.csv")
    if args.out:
        _manifest(args, "sweep", {"template": template, "axes": axes}, started=started)
    return EXIT_OK


# ----------------------------------------------------------------------------
# plumbing
# ----------------------------------------------------------------------------


def _ext(fmt: str) -> str:
    return {"json": "json", "csv": "csv", "table": "txt"}[fmt]


def _out_dir(path: str) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise CliError(f"output directory {out} is not writable: {exc}") from None
    return out


def _emit(text: str, out: str | None, filename: str) -> None:
    if out:
        (_out_dir(out) / filename).write_text(text, encoding="utf-8")
    sys.stdout.write(text)


def _manifest(args, command: str, config: Any, started: str | None = None) -> None:
    RunManifest(
        command=command,
        config_hash=config_hash(config),
        seed=args.seed,
        tool_version=__version__,
        started=started or _now(),
        finished=_now(),
    ).write(_out_dir(args.out))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("json", "table", "csv"), default="json")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--strictness", choices=("default", "strict", "nonstrict"),
                        default="default", help="override the inequality sense")

    ap = argparse.ArgumentParser(prog="rankcollide", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", parents=[common], help="evaluate collision criteria")
    p.add_argument("spec")
    p.add_argument("--n", type=int, default=None, help="collision order (default: N)")
    p.add_argument("--criterion", action="append",
                   help="CONCAVITY, LEMMA21, COR22, EQ_TOTAL4, COR24, THM11, LEMMA31[ABC], "
                        "WINDOW_REDUCTION (default) or THM42; repeatable")
    p.add_argument("--window-criterion", default="LEMMA21",
                   help="total-collision test used inside WINDOW_REDUCTION")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("validate", parents=[common], help="validate a spec file")
    p.add_argument("spec")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo simulation")
    p.add_argument("spec")
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--paths", type=int, default=1000)
    p.add_argument("--eps", type=float, action="append")
    p.add_argument("--window", action="append", help="tracked window k:n; repeatable")
    p.add_argument("--n", type=int, default=None, help="track every window of width n")
    p.add_argument("--truncation-M", dest="truncation_M", type=int, default=None)
    p.add_argument("--buffer-B", dest="buffer_B", type=int, default=0)
    p.add_argument("--backend", choices=("auto", "compiled", "python"), default="auto")
    p.add_argument("--trajectory", action="store_true", help="dump path 0 as CSV")
    p.add_argument("--convergence-check", action="store_true",
                   help="rerun at dt/2 and report the drift of statistics")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", parents=[common], help="parameter sweep to CSV")
    p.add_argument("template")
    p.add_argument("--axis", action="append", help="name=v1,v2 | name=a:b | name=lin:a:b:k")
    p.set_defaults(func=cmd_sweep)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CliError, SpecError, UnsupportedFamilyError, InvalidInputError,
            ResourceError, SimulationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    raise SystemExit(main())
