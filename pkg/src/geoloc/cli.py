"""Command-line driver.

Exit codes: 0 success, 1 runtime failure (runaway simulation, unwritable
output), 2 invalid input (config, traces, arguments, mismatched compare),
3 infeasible synthesis request.

Configuration precedence, lowest first: built-in defaults, ``--config``
file, the ``GEOLOC_SEED`` environment variable, command-line flags.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Optional, Sequence

from geoloc.geo import ConfigError, ProtocolConfig, load_config
from geoloc.nodes import OverlayMode
from geoloc.scenarios import (
    SCENARIOS,
    ScenarioConfig,
    directional,
    export_metrics,
    latency_summary,
    run_scenario,
    summary_of,
)
from geoloc.simnet import RunawayError
from geoloc.traces import (
    PORTO_BBOX,
    BBox,
    InfeasibleTraceError,
    ObjectPlacement,
    Route,
    TraceError,
    load_objects,
    load_routes,
    synthesize,
    write_objects,
    write_routes,
)

EXIT_OK, EXIT_FAIL, EXIT_INVALID, EXIT_INFEASIBLE = 0, 1, 2, 3
SYNTH_KEYS = {"clients": 5, "waypoints": 40, "objects": 50}


class UsageError(Exception):
    pass


@dataclass
class RunSpec:
    scenario: str
    modes: list[OverlayMode]
    config: Optional[Path] = None
    routes: Optional[Path] = None
    objects: Optional[Path] = None
    synth: Optional[dict[str, int]] = None
    out: Optional[Path] = None
    seeds: list[int] = field(default_factory=list)

    def check(self) -> None:
        if self.scenario not in SCENARIOS:
            raise UsageError(f"unknown scenario {self.scenario!r}")
        files = self.routes is not None or self.objects is not None
        if self.scenario == "latency":
            if files or self.synth is not None:
                raise UsageError("the latency scenario builds its own co-located cluster; drop trace arguments")
            return
        if files and self.synth is not None:
            raise UsageError("give either --routes/--objects or --synth, not both")
        if files and (self.routes is None or self.objects is None):
            raise UsageError("--routes and --objects go together")
        if not files and self.synth is None:
            raise UsageError("no traces: give --routes and --objects, or --synth defaults")


# -- argument plumbing ------------------------------------------------------------


def _add_protocol_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("protocol (override the config file)")
    for f in fields(ProtocolConfig):
        dashed = "--" + f.name.replace("_", "-")
        names = [dashed] if dashed == "--" + f.name else [dashed, "--" + f.name]
        g.add_argument(*names, dest=f"cfg_{f.name}", metavar=f.name.upper(), default=None)


def _add_scenario_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("scenario")
    g.add_argument("--edge-cell-deg", type=float, default=0.05)
    g.add_argument("--jitter", type=float, default=0.0)
    g.add_argument("--loss-rate", type=float, default=0.0)
    g.add_argument("--grace-periods", type=int, default=5)
    g.add_argument("--latency-writes", type=int, default=10)
    g.add_argument("--write-interval", type=int, default=10_000)
    g.add_argument("--latency-clients", type=int, default=5)
    g.add_argument("--outage-at", type=int, default=None, help="signalling outage time (ms)")


def resolve_config(args: argparse.Namespace) -> ProtocolConfig:
    base = load_config(args.config)
    data: dict[str, Any] = base.to_dict()
    for f in fields(ProtocolConfig):
        value = getattr(args, f"cfg_{f.name}", None)
        if value is not None:
            data[f.name] = value
    return ProtocolConfig.from_mapping(data)


def scenario_config(args: argparse.Namespace, cfg: ProtocolConfig) -> ScenarioConfig:
    return ScenarioConfig(
        protocol=cfg,
        edge_cell_deg=args.edge_cell_deg,
        jitter=args.jitter,
        loss_rate=args.loss_rate,
        grace_periods=args.grace_periods,
        latency_writes=args.latency_writes,
        write_interval=args.write_interval,
        latency_clients=args.latency_clients,
        signalling_outage_at=args.outage_at,
    )


def parse_synth(text: Optional[str]) -> Optional[dict[str, int]]:
    if text is None:
        return None
    params = dict(SYNTH_KEYS)
    if text.strip() in ("", "defaults", "default"):
        return params
    for item in text.split(","):
        key, sep, value = item.partition("=")
        key = key.strip()
        if not sep or key not in SYNTH_KEYS:
            raise UsageError(f"bad --synth item {item!r}; use defaults or clients=N,waypoints=N,objects=N")
        try:
            params[key] = int(value)
        except ValueError:
            raise UsageError(f"bad --synth value {item!r}") from None
    return params


def parse_modes(values: Sequence[str]) -> list[OverlayMode]:
    if not values or "all" in values:
        return list(OverlayMode)
    try:
        return [OverlayMode.parse(v) for v in values]
    except ValueError as exc:
        raise UsageError(f"unknown mode: {exc}") from None


def parse_bbox(text: Optional[str]) -> BBox:
    if text is None:
        return PORTO_BBOX
    try:
        return BBox(*(float(x) for x in text.split(",")))
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad --bbox {text!r}: {exc}") from None


def emit(**pairs: Any) -> None:
    print(" ".join(f"{k}={_fmt(v)}" for k, v in pairs.items()))


def _fmt(v: Any) -> str:
    if v is None:
        return "na"
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return f"{v:g}"
    return str(v)


# -- run --------------------------------------------------------------------------


@dataclass(frozen=True)
class Job:
    scenario: str
    mode: OverlayMode
    scfg: ScenarioConfig
    routes: tuple[Route, ...]
    placements: tuple[ObjectPlacement, ...]
    out: Optional[Path]

    @property
    def name(self) -> str:
        return f"{self.scenario}-{self.mode.value}-seed{self.scfg.seed}"


def execute(job: Job) -> dict[str, Any]:
    result = run_scenario(job.scenario, job.mode, job.routes, job.placements, job.scfg)
    summary = summary_of(result.metrics)
    if job.out is not None:
        export_metrics(result.metrics, job.out / job.name, result.cloud)
        summary["out"] = str(job.out / job.name)
    return summary


def traces_for(spec: RunSpec, cfg: ProtocolConfig, bbox: BBox) -> tuple[tuple[Route, ...], tuple[ObjectPlacement, ...]]:
    if spec.scenario == "latency":
        return (), ()
    if spec.synth is not None:
        routes, placements = synthesize(
            cfg.seed,
            spec.synth["clients"],
            spec.synth["waypoints"],
            spec.synth["objects"],
            bbox,
            max_distance=cfg.max_distance,
            interest_radius=cfg.interest_radius,
            kind="map" if spec.scenario == "review" else "counter",
        )
        return tuple(routes), tuple(placements)
    assert spec.routes is not None and spec.objects is not None
    return tuple(load_routes(spec.routes)), tuple(load_objects(spec.objects))


def aggregate(out: Path) -> dict[str, Any]:
    """Rebuild ``out/summary.json`` from every run directory below ``out``."""
    groups: dict[str, dict[str, dict[str, Any]]] = {}
    runs: dict[str, Any] = {}
    for path in sorted(out.glob("*/summary.json")):
        s = json.loads(path.read_text(encoding="utf-8"))
        runs[path.parent.name] = s
        groups.setdefault(f"{s['scenario']}-seed{s['seed']}", {})[s["mode"]] = s
    comparisons = {g: directional(by_mode) for g, by_mode in sorted(groups.items())}
    flat: dict[str, bool] = {}
    for checks in comparisons.values():
        for key, ok in checks.items():
            flat[key] = flat.get(key, True) and ok
    doc = {**dict(sorted(flat.items())), "comparisons": comparisons, "runs": runs}
    (out / "summary.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return doc


def cmd_run(args: argparse.Namespace) -> int:
    spec = RunSpec(
        scenario=args.scenario,
        modes=parse_modes(args.mode),
        config=args.config,
        routes=args.routes,
        objects=args.objects,
        synth=parse_synth(args.synth),
        out=args.out,
    )
    spec.check()
    cfg = resolve_config(args)
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else [cfg.seed]
    bbox = parse_bbox(args.bbox)
    jobs = []
    for seed in seeds:
        seeded = cfg.with_overrides(seed=seed)
        scfg = scenario_config(args, seeded)
        routes, placements = traces_for(spec, seeded, bbox)
        jobs += [Job(spec.scenario, mode, scfg, routes, placements, spec.out) for mode in spec.modes]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            summaries = list(pool.map(execute, jobs))
    else:
        summaries = [execute(j) for j in jobs]
    for s in summaries:
        lat = s["latency"]
        emit(scenario=s["scenario"], mode=s["mode"], seed=s["seed"], total_messages=s["total_messages"],
             total_bytes=s["total_bytes"], server_messages=s["server_messages"], peer_messages=s["peer_messages"],
             latency_median=lat["median"], latency_p95=lat["p95"], out=s.get("out"))
    if spec.out is not None:
        doc = aggregate(spec.out)
        for key in sorted(k for k in doc if k not in ("comparisons", "runs")):
            emit(**{key: doc[key]})
    return EXIT_OK


# -- compare ---------------------------------------------------------------------


COMPARE_FIELDS = ("total_messages", "total_bytes", "server_messages", "peer_messages", "control_messages", "data_messages")


def cmd_compare(args: argparse.Namespace) -> int:
    if len(args.dirs) < 2:
        raise UsageError("compare needs at least two run directories")
    summaries = []
    for d in args.dirs:
        path = Path(d) / "summary.json"
        try:
            summaries.append(json.loads(path.read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read {path}: {exc}") from None
    keys = {(s.get("scenario"), s.get("seed")) for s in summaries}
    if len(keys) != 1:
        raise UsageError(f"runs differ in scenario/seed: {sorted(map(str, keys))}")
    first = summaries[0]
    for d, s in zip(args.dirs, summaries):
        lat = s["latency"]
        emit(dir=d, mode=s["mode"], **{f: s[f] for f in COMPARE_FIELDS},
             latency_median=lat["median"], latency_p95=lat["p95"],
             **{f"delta_{f}": s[f] - first[f] for f in COMPARE_FIELDS})
    for key, ok in sorted(directional({s["mode"]: s for s in summaries}).items()):
        emit(**{key: ok})
    return EXIT_OK


# -- validate / synth ------------------------------------------------------------------


def cmd_validate(args: argparse.Namespace) -> int:
    if args.config is None and args.routes is None and args.objects is None:
        raise UsageError("nothing to validate")
    cfg = resolve_config(args)
    emit(config="ok", seed=cfg.seed)
    if args.routes is not None:
        routes = load_routes(args.routes)
        emit(routes=len(routes), waypoints=sum(len(r.waypoints) for r in routes))
    if args.objects is not None:
        objs = load_objects(args.objects)
        emit(objects=len(objs))
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    routes, placements = synthesize(
        cfg.seed,
        args.clients,
        args.waypoints,
        args.objects,
        parse_bbox(args.bbox),
        max_distance=cfg.max_distance,
        interest_radius=cfg.interest_radius,
        kind=args.kind,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_routes(routes, out / "routes.csv")
    write_objects(placements, out / "objects.csv")
    emit(routes=str(out / "routes.csv"), objects=str(out / "objects.csv"), seed=cfg.seed,
         clients=len(routes), waypoints=args.waypoints, placements=len(placements))
    return EXIT_OK


# -- entry --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="geoloc", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario in one or more modes")
    run.add_argument("--scenario", required=True, choices=SCENARIOS)
    run.add_argument("--mode", action="append", default=[], help="glo-partial, glo-full, cs or all (repeatable)")
    run.add_argument("--config", type=Path)
    run.add_argument("--routes", type=Path)
    run.add_argument("--objects", type=Path)
    run.add_argument("--synth", nargs="?", const="defaults", default=None)
    run.add_argument("--bbox", help="lat_min,lon_min,lat_max,lon_max for --synth")
    run.add_argument("--seeds", help="comma-separated seed sweep (overrides the config seed)")
    run.add_argument("--out", type=Path)
    run.add_argument("--jobs", type=int, default=1)
    _add_protocol_flags(run)
    _add_scenario_flags(run)
    run.set_defaults(func=cmd_run)

    cmp_ = sub.add_parser("compare", help="compare completed run directories")
    cmp_.add_argument("dirs", nargs="+")
    cmp_.set_defaults(func=cmd_compare)

    val = sub.add_parser("validate", help="check a config file and/or trace files")
    val.add_argument("--config", type=Path)
    val.add_argument("--routes", type=Path)
    val.add_argument("--objects", type=Path)
    _add_protocol_flags(val)
    val.set_defaults(func=cmd_validate)

    syn = sub.add_parser("synth", help="write synthetic route and object files")
    syn.add_argument("--config", type=Path)
    syn.add_argument("--clients", type=int, default=SYNTH_KEYS["clients"])
    syn.add_argument("--waypoints", type=int, default=SYNTH_KEYS["waypoints"])
    syn.add_argument("--objects", type=int, default=SYNTH_KEYS["objects"])
    syn.add_argument("--kind", choices=("counter", "map"), default="counter")
    syn.add_argument("--bbox")
    syn.add_argument("--out", required=True)
    _add_protocol_flags(syn)
    syn.set_defaults(func=cmd_synth)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_INVALID
    try:
        return args.func(args)
    except InfeasibleTraceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (UsageError, ConfigError, TraceError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (RunawayError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
