"""Command line interface: ``stubmatch <command> [flags]``.

Exit status: 0 success, 1 verification failure, 2 usage error, 3 I/O error,
4 infeasible scheme.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import io as sio
from .analysis import (
    SWEEP_COLUMNS,
    SweepConfig,
    components,
    cube_diagnostic,
    edge_length_stats,
    locally_maximal_edges,
    percolation_sweep,
)
from .errors import (
    ContractError,
    DegreeSpecError,
    FormatError,
    InfeasibleSchemeError,
    UnsupportedDimensionError,
)
from .geometry import BoxSpec, PointSet, pair_distances
from .matching import (
    MatchResult,
    stable_multi_match,
    stable_multi_match_rounds,
    verify_stability,
)
from .process import MarkedPointSet, parse_degree_spec, sample_instance
from .schemes import (
    connectivity_scheme,
    finite_component_scheme,
    infinite_path_scheme,
    mass_bound_check,
)
from .svg import render_svg

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_IO, EXIT_INFEASIBLE = 0, 1, 2, 3, 4

COMMANDS = ("sample", "match", "scheme", "verify", "stats", "sweep", "render")
SCHEMES = ("stable", "finite", "path", "connect")


@dataclasses.dataclass
class RunConfig:
    """Everything that determines one CLI run, besides the code version."""

    command: str
    dim: int = 2
    side: float = 10.0
    periodic: bool = True
    mu: List[str] = dataclasses.field(default_factory=lambda: ["1"])
    seed: int = 0
    intensity: float = 1.0
    scheme: str = "stable"
    input: Optional[str] = None
    output: Optional[str] = None
    matching: Optional[str] = None
    summary: Optional[str] = None
    sides: Optional[List[float]] = None
    seeds: int = 1
    threshold: Optional[int] = None
    cube_side: Optional[float] = None
    cube_max: Optional[int] = None
    format: str = "csv"
    moments: List[float] = dataclasses.field(default_factory=lambda: [1.0, 2.0])
    oracle_max: int = 400
    timing: bool = False
    jobs: Optional[int] = None

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        return cls(**json.loads(text))

    @property
    def box(self) -> BoxSpec:
        return BoxSpec(self.dim, self.side, self.periodic)


class UsageError(Exception):
    pass


def _floats(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run config; flags given explicitly override it")
    common.add_argument("--save-config", help="write the effective run config as JSON")
    common.add_argument("--dim", type=int)
    common.add_argument("--side", type=float)
    common.add_argument("--periodic", action=argparse.BooleanOptionalAction, default=None)
    common.add_argument("--mu", action="append", help="degree law, e.g. 2 or 1:0.05,2:0.95")
    common.add_argument("--seed", type=int)
    common.add_argument("--intensity", type=float)
    common.add_argument("--input", help="marked point set CSV")
    common.add_argument("--output")
    common.add_argument("--matching", help="matching CSV")
    common.add_argument("--summary", help="JSON summary path")
    common.add_argument("--scheme", choices=SCHEMES)
    common.add_argument("--sides", type=_floats)
    common.add_argument("--seeds", type=int)
    common.add_argument("--threshold", type=int, help="finite-piece threshold for the mass check")
    common.add_argument("--cube-side", type=float)
    common.add_argument("--cube-max", type=int)
    common.add_argument("--format", choices=("csv", "json"))
    common.add_argument("--moments", type=_floats)
    common.add_argument("--oracle-max", type=int)
    common.add_argument("--timing", action="store_true", default=None,
                        help="fill the runtime_ms sweep column (breaks byte determinism)")
    common.add_argument("--jobs", type=int)

    parser = argparse.ArgumentParser(prog="stubmatch", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "sample": "sample a marked Poisson point set",
        "match": "compute the stable multi-matching",
        "scheme": "run a constructive matching scheme",
        "verify": "check a matching for stability and consistency",
        "stats": "component and edge-length statistics",
        "sweep": "percolation sweep over degree laws and window sides",
        "render": "draw a planar instance as SVG",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    cfg = RunConfig(command=ns.command)
    if ns.config:
        cfg = RunConfig.from_json(Path(ns.config).read_text(encoding="utf-8"))
        cfg.command = ns.command
    for f in dataclasses.fields(RunConfig):
        if f.name == "command":
            continue
        value = getattr(ns, f.name, None)
        if value is not None:
            setattr(cfg, f.name, value)
    if cfg.command == "sweep" and not cfg.sides:
        cfg.sides = [cfg.side]
    return cfg


# --------------------------------------------------------------------------


def _notice(msg: str):
    print(f"stubmatch: {msg}", file=sys.stderr)


def _mu(cfg: RunConfig):
    if len(cfg.mu) != 1:
        raise UsageError("exactly one --mu expected for this command")
    return parse_degree_spec(cfg.mu[0])


def _instance(cfg: RunConfig):
    """Instance from ``--input`` or sampled from the flags, with its metadata."""
    if cfg.input:
        m, meta = sio.read_points_csv(cfg.input)
        return m, meta
    mu = _mu(cfg)
    m = sample_instance(cfg.box, mu, cfg.seed, cfg.intensity)
    meta = sio.instance_meta(m, seed=cfg.seed, mu=cfg.mu[0], intensity=cfg.intensity)
    return m, meta


def _instance_for_matching(cfg: RunConfig, match_meta: dict):
    """Instance named by flags, or regenerated from a matching file's metadata."""
    if cfg.input or not {"seed", "mu", "d", "L"} <= match_meta.keys():
        return _instance(cfg)
    box = sio.box_from_meta(match_meta)
    intensity = float(match_meta.get("intensity", 1.0))
    seed = int(match_meta["seed"])
    m = sample_instance(box, parse_degree_spec(match_meta["mu"]), seed, intensity)
    meta = sio.instance_meta(m, seed=seed, mu=match_meta["mu"], intensity=intensity)
    return m, meta


def _emit(text: str, path: Optional[str]):
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _summary(m: MarkedPointSet, res: MatchResult, **extra) -> dict:
    rep = components(len(m), res.matching)
    total = int(m.degrees.sum())
    out = {
        "n_points": len(m),
        "n_edges": len(res.matching),
        "steps": int(res.steps),
        "leftover_stubs": int(res.leftover_stubs.sum()),
        "leftover_fraction": float(res.leftover_stubs.sum() / total) if total else 0.0,
        "points_with_leftover": int((res.leftover_stubs > 0).sum()),
        "component_count": rep.component_count,
        "largest_fraction": rep.largest_fraction,
    }
    out.update(extra)
    return out


def _write_summary(cfg: RunConfig, summary: dict):
    text = json.dumps(summary, indent=2, sort_keys=True) + "\n"
    if cfg.summary:
        Path(cfg.summary).write_text(text, encoding="utf-8")
    elif cfg.output:
        Path(cfg.output).with_suffix(".summary.json").write_text(text, encoding="utf-8")
    else:
        sys.stderr.write(text)


def cmd_sample(cfg: RunConfig) -> int:
    m, meta = _instance(cfg)
    _emit(sio.to_string(sio.write_points_csv, m, meta), cfg.output)
    return EXIT_OK


def cmd_match(cfg: RunConfig) -> int:
    m, meta = _instance(cfg)
    res = stable_multi_match(m)
    meta = dict(meta, algorithm="stable", n_points=len(m))
    _emit(sio.to_string(sio.write_matching_csv, res.matching, meta), cfg.output)
    _write_summary(cfg, _summary(m, res, algorithm="stable"))
    return EXIT_OK


def cmd_scheme(cfg: RunConfig) -> int:
    if cfg.scheme in ("path", "connect") and cfg.periodic and not cfg.input:
        _notice(f"scheme {cfg.scheme!r} needs a non-periodic box; sampling without wraparound")
        cfg.periodic = False
    m, meta = _instance(cfg)
    if cfg.scheme in ("path", "connect") and m.box.periodic:
        _notice(f"scheme {cfg.scheme!r} needs a non-periodic box; ignoring wraparound of input")
        m = MarkedPointSet(PointSet(m.box.with_periodic(False), m.coords), m.degrees)
        meta = dict(meta, periodic=False)
    run = {
        "stable": stable_multi_match,
        "finite": finite_component_scheme,
        "path": infinite_path_scheme,
        "connect": connectivity_scheme,
    }[cfg.scheme]
    res = run(m)
    meta = dict(meta, algorithm=cfg.scheme, n_points=len(m))
    _emit(sio.to_string(sio.write_matching_csv, res.matching, meta), cfg.output)
    extra = {"algorithm": cfg.scheme}
    if cfg.scheme in ("path", "connect"):
        extra["cone_trees"] = len(res.info["paths"])
    if cfg.scheme == "finite":
        extra["remainder"] = {str(k): len(v) for k, v in res.info["remainder"].items()}
    if cfg.scheme == "connect":
        plan = res.info["plan"]
        extra["plan"] = None if plan is None else {"m": plan.m, "p": list(plan.p)}
        extra["unattached_singles"] = res.info["unattached_singles"]
    _write_summary(cfg, _summary(m, res, **extra))
    return EXIT_OK


def verify_matching(m: MarkedPointSet, matching, oracle_max: int = 400,
                    stable: bool = True) -> dict:
    """Consistency checks, plus stability and (small instances) oracle
    agreement when ``matching`` claims to be the stable multi-matching."""
    problems = []
    if matching.n_points != len(m):
        problems.append(f"matching has {matching.n_points} points, instance has {len(m)}")
        return {"ok": False, "problems": problems}
    if not matching.is_simple():
        problems.append("matching has loops or repeated edges")
    used = matching.degree_used
    over = np.flatnonzero(used > m.degrees)
    if over.size:
        problems.append(f"{over.size} points use more stubs than they hold")
    if len(matching):
        exact = pair_distances(m.coords, matching.i, matching.j, m.box)
        if np.any(np.abs(exact - matching.length) > 1e-12):
            problems.append("stored edge lengths disagree with point distances")
    unstable = []
    oracle = None
    if stable and not problems:
        res = MatchResult(matching, m.degrees - used, len(matching))
        unstable = verify_stability(m, res)
        if unstable:
            problems.append(f"{len(unstable)} unstable pairs")
        if len(m) <= oracle_max:
            oracle = stable_multi_match_rounds(m).matching.edge_set() == matching.edge_set()
            if not oracle:
                problems.append("edge set differs from the round-based oracle")
    return {
        "ok": not problems,
        "problems": problems,
        "unstable_pairs": [list(p) for p in unstable[:20]],
        "oracle_checked": oracle is not None,
        "n_points": len(m),
        "n_edges": len(matching),
    }


def cmd_verify(cfg: RunConfig) -> int:
    if not cfg.matching:
        raise UsageError("verify needs --matching")
    matching, meta = sio.read_matching_csv(cfg.matching)
    m, _ = _instance_for_matching(cfg, meta)
    stable = meta.get("algorithm", "stable") == "stable"
    report = verify_matching(m, matching, cfg.oracle_max, stable=stable)
    _emit(json.dumps(report, indent=2, sort_keys=True) + "\n", cfg.output)
    return EXIT_OK if report["ok"] else EXIT_VERIFY


def _clean(value):
    if isinstance(value, float) and not np.isfinite(value):
        return None
    return value


def cmd_stats(cfg: RunConfig) -> int:
    if cfg.matching:
        matching, meta = sio.read_matching_csv(cfg.matching)
        m, _ = _instance_for_matching(cfg, meta)
    else:
        m, _ = _instance(cfg)
        matching = stable_multi_match(m).matching
    rep = components(len(m), matching)
    es = edge_length_stats(matching, cfg.moments)
    sizes, counts = np.unique(rep.sizes, return_counts=True)
    res = MatchResult(matching, m.degrees - matching.degree_used, len(matching))
    mb = mass_bound_check(m, res, cfg.threshold)
    out = {
        "n_points": len(m),
        "components": {
            "count": rep.component_count,
            "largest_fraction": rep.largest_fraction,
            "mean_size": rep.mean_size,
            "size_histogram": {str(s): int(c) for s, c in zip(sizes.tolist(), counts.tolist())},
        },
        "edges": {
            "count": es.count,
            "defined": es.defined,
            "mean": _clean(es.mean),
            "max": _clean(es.max),
            "moments": {repr(float(k)): _clean(v) for k, v in es.moments.items()},
            "histogram": {"edges": es.histogram[0].tolist(), "counts": es.histogram[1].tolist()},
            "locally_maximal_on_paths": len(locally_maximal_edges(matching, True)),
        },
        "mass_bound": {
            "threshold": mb.threshold,
            "violations": int(mb.violations.size),
            "sent": int(mb.m_out.sum()),
            "received": int(mb.m_in.sum()),
        },
    }
    if cfg.cube_side is not None:
        if cfg.cube_max is None:
            raise UsageError("--cube-side needs --cube-max")
        grid = cube_diagnostic(m.points, cfg.cube_side, cfg.cube_max)
        out["cubes"] = {
            "cube_side": grid.cube_side,
            "n_bound": grid.n_bound,
            "m_reach": grid.m_reach,
            "radius": grid.radius,
            "acceptable_fraction": float(grid.acceptable.mean()),
            "good_fraction": grid.good_fraction,
            "largest_good_cluster_fraction": grid.largest_good_cluster_fraction,
        }
    if cfg.format == "csv":
        rows = ["key,value"]

        def flat(prefix, obj):
            if isinstance(obj, dict):
                for k, v in obj.items():
                    flat(f"{prefix}.{k}" if prefix else k, v)
            elif not isinstance(obj, list):
                rows.append(f"{prefix},{'' if obj is None else obj}")

        flat("", out)
        text = "\n".join(rows) + "\n"
    else:
        text = json.dumps(out, indent=2, sort_keys=True) + "\n"
    _emit(text, cfg.output)
    return EXIT_OK


def sweep_to_text(rows, fmt: str) -> str:
    if fmt == "json":
        return "".join(json.dumps({k: r[k] for k in SWEEP_COLUMNS}) + "\n" for r in rows)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_COLUMNS)
    for r in rows:
        writer.writerow([r[k] for k in SWEEP_COLUMNS])
    return buf.getvalue()


def cmd_sweep(cfg: RunConfig) -> int:
    for spec in cfg.mu:
        parse_degree_spec(spec)
    sweep = SweepConfig(mus=list(cfg.mu), sides=list(cfg.sides), seeds=cfg.seeds, dim=cfg.dim,
                        intensity=cfg.intensity, periodic=cfg.periodic, base_seed=cfg.seed,
                        timing=bool(cfg.timing), jobs=cfg.jobs)
    rows = percolation_sweep(sweep)
    _emit(sweep_to_text(rows, cfg.format), cfg.output)
    return EXIT_OK


def cmd_render(cfg: RunConfig) -> int:
    if cfg.matching:
        matching, meta = sio.read_matching_csv(cfg.matching)
        m, _ = _instance_for_matching(cfg, meta)
    else:
        m, _ = _instance(cfg)
        matching = stable_multi_match(m).matching
    _emit(render_svg(m, matching), cfg.output)
    return EXIT_OK


HANDLERS = {
    "sample": cmd_sample,
    "match": cmd_match,
    "scheme": cmd_scheme,
    "verify": cmd_verify,
    "stats": cmd_stats,
    "sweep": cmd_sweep,
    "render": cmd_render,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        cfg = config_from_args(ns)
        if ns.save_config:
            Path(ns.save_config).write_text(cfg.to_json() + "\n", encoding="utf-8")
        return HANDLERS[cfg.command](cfg)
    except (UsageError, DegreeSpecError, ContractError, UnsupportedDimensionError) as exc:
        _notice(f"error: {exc}")
        return EXIT_USAGE
    except InfeasibleSchemeError as exc:
        _notice(f"infeasible: {exc}")
        return EXIT_INFEASIBLE
    except (OSError, FormatError, json.JSONDecodeError) as exc:
        _notice(f"I/O error: {exc}")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
