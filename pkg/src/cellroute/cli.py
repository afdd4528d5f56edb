"""Command line: ``cellroute {gen,bnb,sync,schedule,solve,plot}``.

Exit status 0 on success, 2 when the problem is infeasible, 1 on any
other error (including bad flags).
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from . import bnb, pipeline, scheduler, sync
from .errors import CellrouteError, InfeasibleError
from .geometry import DiscWorld, ingest_tsplib, render_svg
from .model import Instance, Tour, check_active_conflicts, load_instance, save_instance

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _emit(doc: dict, out: str | None) -> None:
    text = json.dumps(doc, indent=1, default=_jsonable)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def _jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    raise TypeError(f"not serializable: {type(x).__name__}")


def _bnb_config(args) -> bnb.BnbConfig:
    return bnb.BnbConfig(approach=args.approach, seed=args.seed, node_limit=args.node_limit,
                         time_limit=args.time_limit)


def _load_tours(inst: Instance, path: str | None, args) -> list[Tour]:
    """Tours from a JSON file ``{agent: [vertex ids]}``, or from a conflict-blind B&B run."""
    if path is None:
        return bnb.solve(inst, _bnb_config(args)).tours
    doc = json.loads(Path(path).read_text())
    return [Tour(k, [inst.index_of[int(v)] for v in doc[name]]) for k, name in enumerate(inst.agents)]


def _conflicts(inst: Instance, tours, radius):
    return pipeline.find_conflicts(inst, tours, radius)


def cmd_gen(args) -> int:
    inst = ingest_tsplib(args.tsplib, args.groups, args.agents, args.c_g, seed=args.seed, radius=args.radius,
                         order=args.order)
    save_instance(inst, args.output)
    print(f"{inst.name}: {inst.n_vertices} vertices, {inst.n_tasks} groups, {inst.n_agents} agents -> {args.output}")
    return EXIT_OK


def cmd_bnb(args) -> int:
    inst = load_instance(args.instance)
    cfg = _bnb_config(args)
    res = bnb.solve(inst, cfg)
    _emit(bnb.run_report(inst, res, cfg), args.output)
    return EXIT_OK


def cmd_sync(args) -> int:
    inst = load_instance(args.instance)
    tours = _load_tours(inst, args.tours, args)
    sp = sync.SyncProblem.from_tours(inst, tours, _conflicts(inst, tours, args.radius))
    try:
        sol = sync.solve_sync(sp, seed=args.seed, budget=args.budget)
    except InfeasibleError as exc:
        _emit({"instance": inst.name, "feasible": False, "reason": str(exc), "diagnostics": exc.diagnostics},
              args.output)
        return EXIT_INFEASIBLE
    doc = {
        "instance": inst.name,
        "feasible": True,
        "cycle_cost": sol.cycle_cost,
        "makespan": sol.makespan,
        "states": [[inst.vertex_ids[v] for v in s] for s in sol.states],
        "projections": {inst.agents[k]: [inst.vertex_ids[v] for v in w] for k, w in sol.projections.items()},
    }
    if args.smooth:
        res = scheduler.smooth_sync(sol)
        doc["smoothed_makespan"] = res.makespan
        doc["schedule"] = pipeline.schedules_to_dict(inst, res.schedules)
    _emit(doc, args.output)
    return EXIT_OK


def cmd_schedule(args) -> int:
    inst = load_instance(args.instance)
    tours = _load_tours(inst, args.tours, args)
    res = scheduler.schedule_tours(inst, tours, _conflicts(inst, tours, args.radius),
                                   node_limit=args.sched_node_limit)
    _emit({"instance": inst.name, "makespan": res.makespan, "optimal": res.optimal, "nodes": res.nodes,
           "schedule": pipeline.schedules_to_dict(inst, res.schedules)}, args.output)
    return EXIT_OK


def cmd_solve(args) -> int:
    inst = load_instance(args.instance)
    criteria = pipeline.StopCriteria(args.max_iterations, args.max_time, args.gap)
    cfg = pipeline.PipelineConfig(approach=args.approach, seed=args.seed, redistribute=args.redistribute,
                                  radius=args.radius, bnb_node_limit=args.node_limit, bnb_time_limit=args.time_limit)
    result = pipeline.run_pipeline(inst, criteria, cfg)
    _emit(result.report, args.output)
    return EXIT_OK if result.schedules is not None else EXIT_INFEASIBLE


def cmd_plot(args) -> int:
    inst = load_instance(args.instance)
    radius = args.radius if args.radius is not None else (inst.radius or 1.0)
    schedules = []
    if args.schedule:
        doc = json.loads(Path(args.schedule).read_text())
        schedules = pipeline.schedules_from_dict(inst, doc.get("schedule", doc))
        bad = check_active_conflicts(inst, schedules)
        if bad:
            print(f"warning: {len(bad)} active conflicts in the schedule", file=sys.stderr)
    render_svg(DiscWorld(inst.coords, radius), schedules, args.output, labels=[str(v) for v in inst.vertex_ids])
    print(f"wrote {args.output}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cellroute", description="Collision-aware multi-agent routing and scheduling.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, bnb_flags=True):
        sp.add_argument("--seed", type=int, default=0)
        if bnb_flags:
            sp.add_argument("--approach", type=int, choices=(1, 2, 3), default=3)
            sp.add_argument("--node-limit", type=int, default=None)
            sp.add_argument("--time-limit", type=float, default=None, help="seconds")
        sp.add_argument("-o", "--output", default=None)

    g = sub.add_parser("gen", help="TSPLIB file -> clustered instance JSON")
    g.add_argument("tsplib")
    g.add_argument("--groups", type=int, required=True)
    g.add_argument("--agents", type=int, default=4)
    g.add_argument("--c-g", type=float, default=0.0)
    g.add_argument("--radius", type=float, default=None)
    g.add_argument("--order", choices=("selection", "index"), default="selection")
    g.add_argument("--seed", type=int, default=None, help="random first center (default: city 1)")
    g.add_argument("-o", "--output", required=True)
    g.set_defaults(func=cmd_gen)

    b = sub.add_parser("bnb", help="conflict-blind min-max branch and bound")
    b.add_argument("instance")
    common(b)
    b.set_defaults(func=cmd_bnb)

    s = sub.add_parser("sync", help="synchronized re-sequencing of fixed loads")
    s.add_argument("instance")
    s.add_argument("--tours", default=None, help="JSON {agent: [vertex ids]}; default: B&B tours")
    s.add_argument("--radius", type=float, default=None)
    s.add_argument("--budget", type=int, default=50)
    s.add_argument("--smooth", action="store_true", help="also smooth the synchronized sequences")
    common(s)
    s.set_defaults(func=cmd_sync)

    c = sub.add_parser("schedule", help="conflict-free timing of fixed tours")
    c.add_argument("instance")
    c.add_argument("--tours", default=None)
    c.add_argument("--radius", type=float, default=None)
    c.add_argument("--sched-node-limit", type=int, default=None)
    common(c)
    c.set_defaults(func=cmd_schedule)

    v = sub.add_parser("solve", help="full iterative pipeline")
    v.add_argument("instance")
    v.add_argument("--radius", type=float, default=None)
    v.add_argument("--max-iterations", type=int, default=10)
    v.add_argument("--max-time", type=float, default=None)
    v.add_argument("--gap", type=float, default=0.01)
    v.add_argument("--redistribute", choices=pipeline.REDISTRIBUTE, default="when_infeasible")
    common(v)
    v.set_defaults(func=cmd_solve)

    pl = sub.add_parser("plot", help="SVG of vertices, tours and swept corridors")
    pl.add_argument("instance")
    pl.add_argument("--schedule", default=None, help="schedule or solve report JSON")
    pl.add_argument("--radius", type=float, default=None)
    pl.add_argument("-o", "--output", required=True)
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        for line in exc.diagnostics:
            print(f"  {line}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (CellrouteError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
