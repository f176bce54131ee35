"""Command-line front end: plan, bench, bound, gen-map.

Configuration precedence is defaults < MSPP_SEED environment fallback
(seed only) < JSON config file (--config) < explicit flags.  Exit codes:
0 success, 1 usage or I/O error, 2 planner failure (blocked endpoints or
no path), 3 iteration budget exceeded.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time

from .environments import (
    GeneratorSpec,
    generate_map,
    grid_predicate,
    random_spheres,
    realize_grid,
    uniform_astar,
)
from .predicates import parse_predicate
from .sampling import BoundParams, failure_bound
from .search import (
    BUDGET_EXCEEDED,
    SUCCESS,
    CostModel,
    PlannerSession,
    verify_path,
    verify_path_sampled,
)
from .tree import build_from_grid, map_text, read_map, write_map

DEFAULTS = {
    "dim": 2,
    "depth": 5,
    "eps": 0.5,
    "gamma": 0.1,
    "samples": 256,
    "alpha": 1.0,
    "weight": 1.0,
    "regions": 1,
    "seed": 0,
    "mode": "exact",
    "algo": "mspp-fn",
    "density": 0.3,
    "kind": "bernoulli",
}

ALGOS = ("astar", "mspp-naive", "mspp-fn", "mspp-s")

BENCH_COLUMNS = [
    "algorithm",
    "d",
    "depth",
    "seed",
    "map_build_s",
    "plan_s",
    "iterations",
    "astar_pops",
    "neighbor_calls",
    "sampled_nodes",
    "success",
    "path_cost",
]


def _common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dim", type=int, help="world dimension d")
    p.add_argument("--depth", type=int, help="tree depth (side = 2**depth)")
    p.add_argument("--eps", type=float, help="obstacle threshold scale, in (0,1)")
    p.add_argument("--gamma", type=float, help="sampling margin, > 0")
    p.add_argument("--samples", type=int, help="samples per node")
    p.add_argument("--alpha", type=float, help="window scale multiplier")
    p.add_argument("--weight", type=float, help="occupancy cost weight w")
    p.add_argument("--regions", type=int, help="independent-region count Z")
    p.add_argument("--seed", type=int, help="random seed (MSPP_SEED fallback)")
    p.add_argument("--mode", choices=["exact", "sampling"], help="planner mode")
    p.add_argument("--algo", choices=list(ALGOS), help="algorithm tag")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--out", help="output file (default: standard output)")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mspp",
        description="Multiscale path planning on dyadic occupancy trees",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="plan one instance")
    p.add_argument("--map", dest="map_file", help="occupancy map file")
    p.add_argument(
        "--predicate",
        help="obstacle predicate, e.g. spheres:8,8,3 checkerboard:4 "
        "wall:0,15.5,4 slab:0,3.2",
    )
    p.add_argument("--start", help="start point, comma-separated coordinates")
    p.add_argument("--goal", help="goal point, comma-separated coordinates")
    p.add_argument("--budget", type=int, help="iteration budget")
    _common_flags(p)

    p = sub.add_parser("bench", help="benchmark sweep, CSV output")
    p.add_argument("--dims", help="comma-separated dimensions (default: dim)")
    p.add_argument("--seeds", type=int, default=20, help="instances per dimension")
    p.add_argument("--algos", help="comma-separated algorithm tags (default: all)")
    p.add_argument("--density", type=float, help="obstacle density")
    p.add_argument(
        "--kind",
        choices=["bernoulli", "blobs", "spheres"],
        help="environment: grid textures (map given) or ball scenes "
        "(map-based algorithms pay per-cell realization)",
    )
    _common_flags(p)

    p = sub.add_parser("bound", help="failure-probability bound curve, CSV output")
    p.add_argument("--n-range", default="1,300", help="inclusive sample range lo,hi")
    _common_flags(p)

    p = sub.add_parser("gen-map", help="generate a random map file")
    p.add_argument("--density", type=float, help="obstacle density")
    p.add_argument("--kind", choices=["bernoulli", "blobs"], help="map texture")
    p.add_argument("--blobs", help="blob count range lo,hi")
    p.add_argument("--blob-size", help="blob side range lo,hi")
    p.add_argument("--free-start", action="store_true", help="keep first corner free")
    p.add_argument("--free-goal", action="store_true", help="keep last corner free")
    _common_flags(p)
    return parser


def _merged_config(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    env_seed = os.environ.get("MSPP_SEED")
    if env_seed is not None:
        try:
            cfg["seed"] = int(env_seed)
        except ValueError:
            raise ValueError(f"MSPP_SEED={env_seed!r} is not an integer")
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            loaded = json.load(fh)
        if not isinstance(loaded, dict):
            raise ValueError("config file must hold a JSON object")
        unknown = set(loaded) - set(DEFAULTS)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(loaded)
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    if not 0.0 < cfg["eps"] < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    if cfg["gamma"] <= 0:
        raise ValueError("gamma must be positive")
    if cfg["samples"] < 1 or cfg["regions"] < 1:
        raise ValueError("samples and regions must be >= 1")
    if cfg["alpha"] <= 0:
        raise ValueError("alpha must be positive")
    if cfg["weight"] < 0:
        raise ValueError("weight must be nonnegative")
    if cfg["dim"] < 1 or cfg["depth"] < 0:
        raise ValueError("need dim >= 1 and depth >= 0")
    return cfg


def _parse_point(text: str, dim: int, side: int, name: str) -> tuple[float, ...]:
    try:
        point = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise ValueError(f"{name} must be comma-separated numbers, got {text!r}")
    if len(point) != dim:
        raise ValueError(f"{name} needs {dim} coordinates, got {len(point)}")
    if any(not 0.0 <= x <= side for x in point):
        raise ValueError(f"{name} {point} outside the world box [0, {side}]^{dim}")
    return point


def _out_stream(cfg_out):
    if cfg_out:
        return open(cfg_out, "w", encoding="utf-8", newline="")
    return None


def cmd_plan(args: argparse.Namespace) -> int:
    cfg = _merged_config(args)
    if args.map_file and args.predicate:
        raise ValueError("give either --map or --predicate, not both")
    if not args.map_file and not args.predicate:
        raise ValueError("plan needs --map or --predicate")
    mode = cfg["mode"]
    if args.predicate and mode == "exact":
        raise ValueError("--predicate requires --mode sampling")
    if args.predicate:
        mode = "sampling"

    tree = predicate = world = None
    cell_picks = False
    if args.map_file:
        world = read_map(args.map_file)
        dim, depth = world.dim, world.depth
        if mode == "exact":
            tree = build_from_grid(world)
        else:
            predicate = grid_predicate(world)
            cell_picks = True
    else:
        dim, depth = cfg["dim"], cfg["depth"]
        predicate = parse_predicate(args.predicate, dim, 1 << depth)
    side = 1 << depth

    start = (
        _parse_point(args.start, dim, side, "start")
        if args.start
        else (0.5,) * dim
    )
    goal = (
        _parse_point(args.goal, dim, side, "goal")
        if args.goal
        else (side - 0.5,) * dim
    )

    session = PlannerSession(
        tree=tree,
        predicate=predicate,
        dim=dim,
        depth=depth,
        start=start,
        goal=goal,
        eps=cfg["eps"],
        gamma=cfg["gamma"],
        samples=cfg["samples"],
        alpha=cfg["alpha"],
        cost=CostModel(cfg["weight"]),
        seed=cfg["seed"],
        budget=args.budget,
        cell_picks=cell_picks,
        neighbor_mode="scan" if cfg["algo"] == "mspp-naive" else "fast",
    )
    result = session.run()

    stream = _out_stream(args.out) or sys.stdout
    try:
        if result.success:
            if tree is not None:
                ok, why = verify_path(tree, result.path, cfg["eps"], start, goal)
            else:
                ok, why = verify_path_sampled(
                    predicate, result.path, depth, start, goal
                )
            if not ok:
                print(f"internal error: planned path failed check: {why}", file=sys.stderr)
                return 1
            for idx in result.path:
                centers = " ".join(f"{c / 2:g}" for c in idx.center2)
                print(f"{idx.scale} {centers}", file=stream)
        summary = (
            f"status={result.status} nodes={len(result.path) if result.path else 0} "
            f"cost={result.cost if result.cost is not None else 'none'} "
            f"iterations={result.iterations} pops={result.stats.pops} "
            f"blocked={result.blocked}"
        )
        print(summary, file=stream)
    finally:
        if stream is not sys.stdout:
            stream.close()
    if result.status == SUCCESS:
        return 0
    if result.status == BUDGET_EXCEEDED:
        return 3
    return 2


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def _bench_instance(writer, cfg, dim: int, seed: int, algos) -> None:
    depth = cfg["depth"]
    side = 1 << depth
    start = (0.5,) * dim
    goal = (side - 0.5,) * dim

    # With a grid texture the occupancy array itself is the environment:
    # the map is given and map_build_s covers only pyramid assembly (the
    # plan-time comparison regime).  The spheres texture instead treats
    # the scene as a point oracle, so every map-based algorithm first
    # realizes the grid through per-cell queries on the clock, while
    # mspp-s plans against the oracle directly (the map-free regime).
    scene = None
    world = None
    if cfg["kind"] == "spheres":
        spheres = random_spheres(dim, depth, seed, cfg["density"])

        def scene(point, _spheres=spheres):
            return _spheres(point)

    else:
        spec = GeneratorSpec(
            dim,
            depth,
            cfg["density"],
            kind=cfg["kind"],
            seed=seed,
            free_start=True,
            free_goal=True,
        )
        world = generate_map(spec)
    tree = None
    build_elapsed = 0.0

    for algo in algos:
        map_elapsed = 0.0
        if scene is not None and algo != "mspp-s":
            began = time.perf_counter()
            world = realize_grid(scene, dim, depth)
            if algo != "astar":
                tree = build_from_grid(world)
            map_elapsed = time.perf_counter() - began
        elif scene is None and algo in ("mspp-naive", "mspp-fn"):
            if tree is None:
                began = time.perf_counter()
                tree = build_from_grid(world)
                build_elapsed = time.perf_counter() - began
            map_elapsed = build_elapsed
        row = {
            "algorithm": algo,
            "d": dim,
            "depth": depth,
            "seed": seed,
            "map_build_s": _fmt(map_elapsed),
            "plan_s": _fmt(0.0),
            "iterations": 0,
            "astar_pops": 0,
            "neighbor_calls": 0,
            "sampled_nodes": 0,
            "success": "false",
            "path_cost": "",
        }
        if algo == "astar":
            base = uniform_astar(world, (0,) * dim, (side - 1,) * dim)
            row["plan_s"] = _fmt(base.elapsed)
            row["astar_pops"] = base.expanded
            row["neighbor_calls"] = base.expanded
            row["success"] = "true" if base.reachable else "false"
            if base.reachable:
                row["path_cost"] = _fmt(float(len(base.path) - 1))
        else:
            kwargs = dict(
                start=start,
                goal=goal,
                eps=cfg["eps"],
                gamma=cfg["gamma"],
                samples=cfg["samples"],
                alpha=cfg["alpha"],
                cost=CostModel(cfg["weight"]),
                seed=seed,
            )
            if algo == "mspp-s":
                session = PlannerSession(
                    predicate=scene if scene is not None else grid_predicate(world),
                    dim=dim,
                    depth=depth,
                    cell_picks=True,
                    **kwargs,
                )
            else:
                session = PlannerSession(
                    tree=tree,
                    neighbor_mode="scan" if algo == "mspp-naive" else "fast",
                    **kwargs,
                )
            began = time.perf_counter()
            result = session.run()
            row["plan_s"] = _fmt(time.perf_counter() - began)
            row["iterations"] = result.iterations
            row["astar_pops"] = result.stats.pops
            row["neighbor_calls"] = result.stats.neighbor_calls
            if session.estimator is not None:
                row["sampled_nodes"] = len(session.estimator)
            row["success"] = "true" if result.success else "false"
            if result.cost is not None:
                row["path_cost"] = _fmt(result.cost)
        writer.writerow(row)


def cmd_bench(args: argparse.Namespace) -> int:
    cfg = _merged_config(args)
    dims = (
        [int(v) for v in args.dims.split(",")] if args.dims else [cfg["dim"]]
    )
    algos = args.algos.split(",") if args.algos else list(ALGOS)
    for algo in algos:
        if algo not in ALGOS:
            raise ValueError(f"unknown algorithm {algo!r}")
    if args.seeds < 1:
        raise ValueError("need at least one seed")

    stream = _out_stream(args.out) or sys.stdout
    try:
        writer = csv.DictWriter(stream, fieldnames=BENCH_COLUMNS)
        writer.writeheader()
        for dim in dims:
            for offset in range(args.seeds):
                _bench_instance(writer, cfg, dim, cfg["seed"] + offset, algos)
    finally:
        if stream is not sys.stdout:
            stream.close()
    return 0


def cmd_bound(args: argparse.Namespace) -> int:
    cfg = _merged_config(args)
    try:
        lo, hi = (int(v) for v in args.n_range.split(","))
    except ValueError:
        raise ValueError(f"--n-range must be lo,hi integers, got {args.n_range!r}")
    if not 1 <= lo <= hi:
        raise ValueError("need 1 <= lo <= hi in --n-range")
    stream = _out_stream(args.out) or sys.stdout
    try:
        print("n,bound", file=stream)
        for n in range(lo, hi + 1):
            params = BoundParams(
                depth=cfg["depth"],
                dim=cfg["dim"],
                eps=cfg["eps"],
                gamma=cfg["gamma"],
                samples=n,
                regions=cfg["regions"],
            )
            print(f"{n},{failure_bound(params):.10g}", file=stream)
    finally:
        if stream is not sys.stdout:
            stream.close()
    return 0


def cmd_gen_map(args: argparse.Namespace) -> int:
    cfg = _merged_config(args)
    extra = {}
    if args.blobs:
        lo, hi = (int(v) for v in args.blobs.split(","))
        extra["blobs"] = (lo, hi)
    if args.blob_size:
        lo, hi = (int(v) for v in args.blob_size.split(","))
        extra["blob_size"] = (lo, hi)
    spec = GeneratorSpec(
        cfg["dim"],
        cfg["depth"],
        cfg["density"],
        kind=cfg["kind"],
        seed=cfg["seed"],
        free_start=args.free_start,
        free_goal=args.free_goal,
        **extra,
    )
    world = generate_map(spec)
    if args.out:
        write_map(world, args.out)
    else:
        sys.stdout.write(map_text(world))
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    handlers = {
        "plan": cmd_plan,
        "bench": cmd_bench,
        "bound": cmd_bound,
        "gen-map": cmd_gen_map,
    }
    try:
        return handlers[args.command](args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
