"""Command-line harness: generate models, check region graphs, run and compare.

Subcommands:

  generate   write a synthetic model file (grid, full, qmr families)
  check      analyze a model's region graph and print the convexity verdict
  run        minimize one bound variant, writing a trace
  compare    run several variants over a seed list and summarize

Exit codes: 0 success, 1 non-convex verdict from ``check``, 2 usage error,
3 runtime failure.  All outputs are deterministic given the same inputs.
"""
from __future__ import annotations

import argparse
import math
import statistics
import sys
from dataclasses import dataclass, replace
from itertools import combinations
from pathlib import Path

import numpy as np

from .bounds import (
    VARIANTS,
    ConvexityError,
    check_conv2_bound,
    check_convex_over_constraints,
    make_bound_spec,
)
from .doubleloop import (
    OuterSettings,
    compare as run_variants,
    iterations_to_reach,
    minimize,
    trace_metadata,
    write_trace_csv,
    write_trace_json,
)
from .model import ModelFormatError, ModelSpec, generate, load, save
from .oracle import OracleLimitError, exact_inference
from .propagation import ConfigurationError, InnerSettings
from .regions import (
    GraphError,
    build_bethe,
    build_cvm,
    is_singly_connected,
    per_variable_counting_sums,
)

FAMILIES = {
    "grid": "grid_boltzmann",
    "full": "full_boltzmann",
    "qmr": "qmr_like",
    "file": "file",
}
RECIPES = ("bethe", "grid-plaquettes", "all-triplets")


class UsageError(ValueError):
    """Bad flags or config; reported with exit code 2."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce a run, round-trippable through a file."""

    family: str = "file"
    model: str | None = None
    rows: int = 0
    cols: int = 0
    nodes: int = 0
    diseases: int = 0
    findings: int = 0
    w: float = 1.0
    observe: str | None = None
    recipe: str = "bethe"
    variants: tuple[str, ...] = ("conv1", "conv2", "conv3", "cccp")
    seeds: tuple[int, ...] = (0,)
    outdir: str = "out"
    outer_tol: float = 1e-8
    marginal_tol: float = 1e-6
    max_outer: int = 10000
    inner_tol: float = 1e-8
    inner_max_sweeps: int = 2000
    damping: float | None = None
    warm_start: bool = True
    consensus_window: float = 1e-4


def _fmt_optional(v):
    return "none" if v is None else str(v)


def _parse_optional(s):
    return None if s == "none" else s


_FIELD_CODECS = {
    "family": (str, str),
    "model": (_fmt_optional, _parse_optional),
    "rows": (str, int),
    "cols": (str, int),
    "nodes": (str, int),
    "diseases": (str, int),
    "findings": (str, int),
    "w": (repr, float),
    "observe": (_fmt_optional, _parse_optional),
    "recipe": (str, str),
    "variants": (
        lambda v: ",".join(v),
        lambda s: tuple(p for p in s.split(",") if p),
    ),
    "seeds": (
        lambda v: ",".join(str(x) for x in v),
        lambda s: tuple(int(p) for p in s.split(",") if p),
    ),
    "outdir": (str, str),
    "outer_tol": (repr, float),
    "marginal_tol": (repr, float),
    "max_outer": (str, int),
    "inner_tol": (repr, float),
    "inner_max_sweeps": (str, int),
    "damping": (
        lambda v: "auto" if v is None else repr(v),
        lambda s: None if s == "auto" else float(s),
    ),
    "warm_start": (
        lambda v: "true" if v else "false",
        lambda s: {"true": True, "false": False}[s],
    ),
    "consensus_window": (repr, float),
}


def config_to_text(cfg: ExperimentConfig) -> str:
    lines = ["# experiment config v1"]
    for name, (fmt, _) in _FIELD_CODECS.items():
        lines.append(f"{name} = {fmt(getattr(cfg, name))}")
    return "\n".join(lines) + "\n"


def parse_config(text: str) -> ExperimentConfig:
    values = {}
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"config line {ln}: expected 'key = value'")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in _FIELD_CODECS:
            raise UsageError(f"config line {ln}: unknown key {key!r}")
        try:
            values[key] = _FIELD_CODECS[key][1](val)
        except (ValueError, KeyError):
            raise UsageError(f"config line {ln}: bad value for {key!r}") from None
    return ExperimentConfig(**values)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read())


def save_config(cfg: ExperimentConfig, path) -> None:
    with open(path, "w") as fh:
        fh.write(config_to_text(cfg))


def _validate_config(cfg: ExperimentConfig) -> ExperimentConfig:
    if cfg.family not in FAMILIES and cfg.family not in FAMILIES.values():
        raise UsageError(f"unknown model family {cfg.family!r}")
    if cfg.recipe not in RECIPES:
        raise UsageError(f"unknown recipe {cfg.recipe!r}; pick from {RECIPES}")
    for v in cfg.variants:
        if v not in VARIANTS:
            raise UsageError(f"unknown variant {v!r}; pick from {VARIANTS}")
    if not cfg.variants:
        raise UsageError("variant list is empty")
    if not cfg.seeds:
        raise UsageError("seed list is empty")
    return cfg


def config_model(cfg: ExperimentConfig, seed: int):
    family = FAMILIES.get(cfg.family, cfg.family)
    if family == "file":
        if not cfg.model:
            raise UsageError("family 'file' needs a model path")
        return load(cfg.model)
    spec = ModelSpec(
        family,
        rows=cfg.rows,
        cols=cfg.cols,
        nodes=cfg.nodes,
        diseases=cfg.diseases,
        findings=cfg.findings,
        weight_scale=cfg.w,
        seed=seed,
        observe=cfg.observe,
    )
    try:
        return generate(spec)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def recipe_graph(model, recipe: str):
    if recipe == "bethe":
        return build_bethe(model.scopes, model.num_vars)
    if recipe == "grid-plaquettes":
        try:
            rows = int(model.meta["rows"])
            cols = int(model.meta["cols"])
        except (KeyError, ValueError):
            raise UsageError(
                "grid-plaquettes needs a grid model carrying rows/cols metadata"
            ) from None
        if rows < 2 or cols < 2:
            raise UsageError("grid-plaquettes needs at least a 2x2 grid")
        if rows * cols != model.num_vars:
            raise UsageError("grid metadata does not match the variable count")
        outers = []
        for r in range(rows - 1):
            for c in range(cols - 1):
                v = r * cols + c
                outers.append((v, v + 1, v + cols, v + cols + 1))
        return build_cvm(outers, model.num_vars)
    if recipe == "all-triplets":
        n = model.num_vars
        if n < 3:
            raise UsageError("all-triplets needs at least three variables")
        return build_cvm(list(combinations(range(n), 3)), n)
    raise UsageError(f"unknown recipe {recipe!r}; pick from {RECIPES}")


def outer_settings(cfg: ExperimentConfig) -> OuterSettings:
    return OuterSettings(
        outer_tol=cfg.outer_tol,
        marginal_tol=cfg.marginal_tol,
        max_outer=cfg.max_outer,
        inner=InnerSettings(
            tol=cfg.inner_tol,
            max_sweeps=cfg.inner_max_sweeps,
            damping=cfg.damping,
        ),
        warm_start=cfg.warm_start,
    )


def single_variable_marginals(graph, beliefs, num_vars):
    """Per-variable marginals read off the beliefs, smallest carrier first."""
    singleton = {}
    for r in graph.regions:
        if len(r.vars) == 1 and r.vars[0] not in singleton:
            singleton[r.vars[0]] = r.id
    out = {}
    for v in range(num_vars):
        if v in singleton:
            t = beliefs.tables[singleton[v]]
        else:
            a = next(a for a in graph.outer_ids if v in graph.region_vars(a))
            va = graph.region_vars(a)
            axes = tuple(i for i, u in enumerate(va) if u != v)
            t = beliefs.tables[a].sum(axis=axes)
        t = np.maximum(t, 0.0)
        out[v] = t / t.sum()
    return out


def kl_to_oracle(model, graph, beliefs):
    """Mean per-variable KL from the exact marginals; None beyond oracle reach."""
    try:
        exact = exact_inference(model, regions=[(v,) for v in range(model.num_vars)])
    except OracleLimitError:
        return None
    approx = single_variable_marginals(graph, beliefs, model.num_vars)
    total = 0.0
    for v in range(model.num_vars):
        p = exact.marginals.tables[v]
        q = np.maximum(approx[v], 1e-300)
        mask = p > 0
        total += float((p[mask] * (np.log(p[mask]) - np.log(q[mask]))).sum())
    return total / model.num_vars


def _kl_text(kl) -> str:
    return "unavailable" if kl is None else f"{kl:.17g}"


def cmd_generate(args) -> int:
    family = FAMILIES.get(args.family)
    if family is None:
        raise UsageError(f"unknown model family {args.family!r}")
    if family == "file":
        raise UsageError("generate needs a synthetic family: grid, full, or qmr")
    spec = ModelSpec(
        family,
        rows=args.rows,
        cols=args.cols,
        nodes=args.n,
        diseases=args.diseases,
        findings=args.findings,
        weight_scale=args.w,
        seed=args.seed,
        observe=args.observe,
    )
    try:
        model = generate(spec)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    save(model, args.out)
    print(f"wrote {args.out}: {model.num_vars} variables, {len(model.scopes)} factors")
    return 0


def cmd_check(args) -> int:
    model = load(args.model)
    graph = recipe_graph(model, args.recipe)
    print(
        f"regions {len(graph.regions)} "
        f"(outer {len(graph.outer_ids)}, subset {len(graph.subset_ids)})"
    )
    print("id kind count vars")
    for r in graph.regions:
        print(f"{r.id} {r.kind} {r.overcount} " + ",".join(str(v) for v in r.vars))
    print(
        f"subsets negative {len(graph.neg_ids)} "
        f"positive {len(graph.pos_ids)} zero {len(graph.zero_ids)}"
    )
    print(f"singly-connected {'yes' if is_singly_connected(graph) else 'no'}")
    sums = per_variable_counting_sums(graph)
    balanced = all(s == 1 for s in sums.values())
    print(f"per-variable count sums all one: {'yes' if balanced else 'no'}")

    all_counts = {r.id: float(r.overcount) for r in graph.regions}
    witness = check_convex_over_constraints(graph, all_counts)
    print(f"convex-over-constraints {'yes' if witness is not None else 'no'}")
    if witness is not None:
        for (g, b), f in sorted(witness.entries.items()):
            print(f"alloc {g} {b} {f:.17g}")
    conv2 = check_conv2_bound(graph)
    print(f"conv2-bound {'yes' if conv2 is not None else 'no'}")
    spec3 = make_bound_spec(graph, "conv3")
    for b in graph.subset_ids:
        print(f"conv3-ctilde {b} {spec3.inner_overcounts[b]:.17g}")
    return 0 if witness is not None else 1


def _resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    over = {}
    for key in (
        "family",
        "model",
        "rows",
        "cols",
        "nodes",
        "diseases",
        "findings",
        "w",
        "observe",
        "recipe",
        "outdir",
        "outer_tol",
        "marginal_tol",
        "max_outer",
        "inner_tol",
        "inner_max_sweeps",
        "consensus_window",
    ):
        val = getattr(args, key, None)
        if val is not None:
            over[key] = val
    if getattr(args, "variants", None):
        over["variants"] = tuple(p for p in args.variants.split(",") if p)
    if getattr(args, "seeds", None):
        try:
            over["seeds"] = tuple(int(p) for p in args.seeds.split(",") if p)
        except ValueError:
            raise UsageError(
                f"seeds must be a comma list of integers, got {args.seeds!r}"
            ) from None
    if getattr(args, "seed", None) is not None:
        over["seeds"] = (args.seed,)
    if getattr(args, "damping", None) is not None:
        if args.damping == "auto":
            over["damping"] = None
        else:
            try:
                over["damping"] = float(args.damping)
            except ValueError:
                raise UsageError(
                    f"damping must be a number or 'auto', got {args.damping!r}"
                ) from None
    if getattr(args, "no_warm_start", False):
        over["warm_start"] = False
    if getattr(args, "model", None) and "family" not in over and not args.config:
        over["family"] = "file"
    return _validate_config(replace(cfg, **over))


def cmd_run(args) -> int:
    cfg = _resolve_config(args)
    variant = args.variant or cfg.variants[0]
    if variant not in VARIANTS:
        raise UsageError(f"unknown variant {variant!r}; pick from {VARIANTS}")
    seed = cfg.seeds[0]
    model = config_model(cfg, seed)
    graph = recipe_graph(model, cfg.recipe)
    spec = make_bound_spec(graph, variant)
    trace = minimize(model, graph, spec, outer_settings(cfg))
    outdir = Path(cfg.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    save_config(replace(cfg, variants=(variant,)), outdir / "config.txt")
    write_trace_csv(trace, outdir / f"trace_{variant}.csv")
    meta = trace_metadata(trace, spec, model.meta)
    meta["seed"] = seed
    kl = kl_to_oracle(model, graph, trace.final_beliefs)
    meta["kl_to_oracle"] = kl
    write_trace_json(meta, outdir / f"trace_{variant}.json")
    print(
        f"variant {variant} outer_iterations {trace.outer_iterations} "
        f"total_inner_sweeps {trace.total_inner_sweeps} "
        f"final_f_kik {trace.final_f:.17g} kl_to_oracle {_kl_text(kl)} "
        f"converged {'yes' if trace.converged else 'no'}"
    )
    return 0


def cmd_compare(args) -> int:
    cfg = _resolve_config(args)
    outdir = Path(cfg.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    save_config(cfg, outdir / "config.txt")

    summary = ["# compare summary"]
    summary.append(
        "# columns: seed variant outer_iterations total_inner_sweeps "
        "final_f_kik kl_to_oracle"
    )
    plot = ["# plotdata v1: x = outer iterations / just-convex iterations, y = f_kik"]
    reach: dict[str, list[float]] = {v: [] for v in cfg.variants}

    for seed in cfg.seeds:
        model = config_model(cfg, seed)
        graph = recipe_graph(model, cfg.recipe)
        specs = [make_bound_spec(graph, v) for v in cfg.variants]
        traces = run_variants(model, graph, specs, outer_settings(cfg))
        consensus = min(tr.final_f for tr in traces)
        scale = 1.0
        if "conv3" in cfg.variants:
            scale = max(1.0, float(traces[cfg.variants.index("conv3")].outer_iterations))
        for spec, tr in zip(specs, traces):
            write_trace_csv(tr, outdir / f"trace_seed{seed}_{spec.variant}.csv")
            meta = trace_metadata(tr, spec, model.meta)
            meta["seed"] = seed
            kl = kl_to_oracle(model, graph, tr.final_beliefs)
            meta["kl_to_oracle"] = kl
            write_trace_json(meta, outdir / f"trace_seed{seed}_{spec.variant}.json")
            summary.append(
                f"row {seed} {spec.variant} {tr.outer_iterations} "
                f"{tr.total_inner_sweeps} {tr.final_f:.17g} {_kl_text(kl)}"
            )
            reach[spec.variant].append(
                iterations_to_reach(tr, consensus, cfg.consensus_window)
            )
            plot.append(f"series {spec.variant} seed {seed}")
            for rec in tr.outer:
                plot.append(f"{rec.outer_index / scale:.17g} {rec.f_kik:.17g}")
            plot.append("end")
        summary.append(f"consensus {seed} {consensus:.17g}")

    median_lines = []
    for v in cfg.variants:
        med = statistics.median(reach[v])
        text = "inf" if math.isinf(med) else f"{med:g}"
        median_lines.append(f"median_iters_to_consensus {v} {text}")
    summary.extend(median_lines)

    (outdir / "summary.txt").write_text("\n".join(summary) + "\n")
    (outdir / "plotdata.txt").write_text("\n".join(plot) + "\n")
    for line in median_lines:
        print(line)
    print(f"wrote {outdir}")
    return 0


def _add_model_flags(p, with_seed=True):
    p.add_argument("--family", choices=sorted(FAMILIES), default=None)
    p.add_argument("--model", help="model file path (family 'file')")
    p.add_argument("--rows", type=int, default=None)
    p.add_argument("--cols", type=int, default=None)
    p.add_argument("--n", dest="nodes", type=int, default=None)
    p.add_argument("--diseases", type=int, default=None)
    p.add_argument("--findings", type=int, default=None)
    p.add_argument("--w", type=float, default=None, help="weight scale")
    p.add_argument("--observe", default=None, help="0/1 string, one per finding")
    if with_seed:
        p.add_argument("--seed", type=int, default=None)


def _add_solver_flags(p):
    p.add_argument("--recipe", choices=RECIPES, default=None)
    p.add_argument("--outdir", default=None)
    p.add_argument("--config", default=None, help="experiment config file")
    p.add_argument("--outer-tol", dest="outer_tol", type=float, default=None)
    p.add_argument("--marginal-tol", dest="marginal_tol", type=float, default=None)
    p.add_argument("--max-outer", dest="max_outer", type=int, default=None)
    p.add_argument("--inner-tol", dest="inner_tol", type=float, default=None)
    p.add_argument(
        "--inner-max-sweeps", dest="inner_max_sweeps", type=int, default=None
    )
    p.add_argument("--damping", default=None, help="0..1 or 'auto'")
    p.add_argument(
        "--no-warm-start", dest="no_warm_start", action="store_true", default=False
    )


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kikuchi",
        description="Region-graph free energy minimization toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic model file")
    g.add_argument("--family", required=True, choices=sorted(set(FAMILIES) - {"file"}))
    g.add_argument("--rows", type=int, default=4)
    g.add_argument("--cols", type=int, default=4)
    g.add_argument("--n", type=int, default=6, help="node count (full family)")
    g.add_argument("--diseases", type=int, default=8)
    g.add_argument("--findings", type=int, default=5)
    g.add_argument("--w", type=float, default=1.0, help="weight scale")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--observe", default=None, help="0/1 string, one per finding")
    g.add_argument("-o", "--out", required=True)
    g.set_defaults(func=cmd_generate)

    c = sub.add_parser("check", help="region graph diagnostics and convexity verdict")
    c.add_argument("model", help="model file")
    c.add_argument("--recipe", choices=RECIPES, default="bethe")
    c.set_defaults(func=cmd_check)

    r = sub.add_parser("run", help="minimize one bound variant")
    _add_model_flags(r)
    _add_solver_flags(r)
    r.add_argument("--variant", choices=VARIANTS, default=None)
    r.set_defaults(func=cmd_run)

    m = sub.add_parser("compare", help="run several variants over a seed list")
    _add_model_flags(m, with_seed=False)
    _add_solver_flags(m)
    m.add_argument("--variants", default=None, help="comma list from " + ",".join(VARIANTS))
    m.add_argument("--seeds", default=None, help="comma list of integers")
    m.add_argument(
        "--consensus-window",
        dest="consensus_window",
        type=float,
        default=None,
    )
    m.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code
        return 0 if code in (0, None) else 2
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (
        ModelFormatError,
        GraphError,
        ConvexityError,
        ConfigurationError,
        OracleLimitError,
        RuntimeError,
        OSError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
