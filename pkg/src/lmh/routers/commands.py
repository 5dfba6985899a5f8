"""Subcommand handlers. Each takes the parsed arguments and returns an exit status."""

import argparse
import logging
from pathlib import Path
from typing import List, Optional

from ..errors import ConfigurationError
from ..estimation.tables import MarginalTable, avg_kl
from ..model import enumerate_exact_marginals
from ..schemas import METHODS, ExperimentConfig, GroupsDocument, ScheduleConfig
from ..services import (
    DerivedGroups,
    SourceBundle,
    build_osa,
    build_source,
    derive_groups,
    load_config,
    osa_manifest,
    read_model,
    run_experiment,
    sample_methods,
    staged_output,
    summarize,
    write_chain_outputs,
    write_json,
)
from ..symmetry.clustering import osa_from_models

logger = logging.getLogger(__name__)


def parse_seeds(text: Optional[str]) -> Optional[List[int]]:
    """'1,2,3' -> [1, 2, 3]."""
    if text is None:
        return None
    try:
        seeds = [int(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise ConfigurationError(f"Seeds must be comma-separated integers, got '{text}'") from e
    if not seeds:
        raise ConfigurationError("At least one seed is required")
    if any(s < 0 for s in seeds):
        raise ConfigurationError(f"Seeds must be non-negative, got '{text}'")
    return seeds


def apply_overrides(config: ExperimentConfig, args: argparse.Namespace) -> ExperimentConfig:
    """CLI flags win over config fields; the result is validated again."""
    raw = config.model_dump(mode="json")
    seeds = parse_seeds(getattr(args, "seeds", None))
    if seeds is not None:
        raw["seeds"] = seeds
    if getattr(args, "method", None):
        raw["kernel"]["methods"] = [args.method]
    if getattr(args, "alpha", None) is not None:
        raw["kernel"]["alpha"] = args.alpha
    if getattr(args, "iterations", None) is not None:
        raw["schedule"]["iterations"] = args.iterations
        if raw["schedule"].get("checkpoints"):
            raw["schedule"]["checkpoints"] = [c for c in raw["schedule"]["checkpoints"] if c <= args.iterations]
    if getattr(args, "out", None) is not None:
        raw["out"] = str(args.out)
    return ExperimentConfig.model_validate(raw)


def generate(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    out = Path(args.out or config.out)
    with staged_output(out) as stage:
        bundle = build_source(config.source)
        write_json(stage / "model.json", bundle.model)
        if bundle.ground is not None:
            write_json(stage / "atoms.json", bundle.ground.atom_names())
    print(f"✅ Model generated!")
    print(f"   Variables: {bundle.model.num_variables}")
    print(f"   Potentials: {len(bundle.model.potentials)}")
    print(f"   Output: {out / 'model.json'}")
    return 0


def symmetrize(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    out = Path(args.out or config.out)
    with staged_output(out) as stage:
        bundle = build_source(config.source)
        if args.model is not None:
            if bundle.program is not None:
                raise ConfigurationError("--model cannot replace an MLN source; relation symmetrization needs the program")
            bundle = SourceBundle(model=read_model(args.model))
        osa, bmf = build_osa(bundle, config.osa)
        groups = derive_groups(bundle.model, osa, config.heuristic, config.symmetry_mode)
        write_json(stage / "osa_model.json", osa.model)
        write_json(stage / "groups.json", groups.to_document(bundle.model.num_variables))
        write_json(stage / "osa_manifest.json", osa_manifest(osa, config.osa, bmf, groups))
    print(f"✅ Symmetrized model written!")
    print(f"   Label: {config.osa.label}")
    print(f"   Replaced potentials: {len(osa.replacements)}")
    print(f"   Heuristic subgroups: {len(groups.heuristic)}")
    print(f"   Output: {out}")
    return 0


def sample(args: argparse.Namespace) -> int:
    model = read_model(args.model)
    osa = osa_from_models(model, read_model(args.osa_model)) if args.osa_model else None
    groups = DerivedGroups()
    if args.groups:
        groups = DerivedGroups.from_document(GroupsDocument.model_validate_json(Path(args.groups).read_text()))
    truth = MarginalTable.read_csv(args.truth) if args.truth else None
    seeds = parse_seeds(args.seeds) or [0]
    schedule = ScheduleConfig(iterations=args.iterations, burn_in=args.burn_in, thinning=args.thinning)
    methods = [args.method] if args.method else ["gibbs"]
    out = Path(args.out)
    with staged_output(out) as stage:
        results = sample_methods(model, osa, groups, methods, seeds, schedule, args.alpha, truth, workers=args.workers)
        write_chain_outputs(stage, results)
        if truth is not None:
            write_json(stage / "kl_summary.json", summarize(results, seeds, truth))
    print(f"✅ Sampling finished!")
    print(f"   Methods: {', '.join(methods)}")
    print(f"   Chains per method: {len(seeds)}")
    print(f"   Output: {out}")
    return 0


def evaluate(args: argparse.Namespace) -> int:
    if args.truth:
        truth = MarginalTable.read_csv(args.truth)
    elif args.model:
        truth = enumerate_exact_marginals(read_model(args.model))
    else:
        raise ConfigurationError("evaluate needs --truth or --model")
    reports = {}
    print(f"📋 KL(truth || estimate), epsilon-smoothed:")
    for path in args.estimate:
        report = avg_kl(truth, MarginalTable.read_csv(path))
        reports[str(path)] = report.to_dict()
        print(f"   {path}: {report.average:.6g}")
    if args.out:
        write_json(Path(args.out), reports)
        print(f"   Output: {args.out}")
    return 0


def run(args: argparse.Namespace) -> int:
    config = apply_overrides(load_config(args.config), args)
    summary = run_experiment(config, workers=args.workers)
    print(f"✅ Experiment '{config.name}' finished!")
    for method, result in summary.methods.items():
        kl = "n/a" if result.mean_final_kl is None else f"{result.mean_final_kl:.6g}"
        print(f"   {method}: mean final KL {kl}")
    print(f"   Output: {config.out}")
    return 0


def add_subcommands(parser: argparse.ArgumentParser) -> None:
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="Write the configured model to model.json")
    p.add_argument("--config", required=True, type=Path, help="Experiment config (JSON or YAML)")
    p.add_argument("--out", type=Path, help="Output directory (defaults to the config's out)")
    p.set_defaults(handler=generate)

    p = sub.add_parser("symmetrize", help="Build the OSA model and derive groups")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--model", type=Path, help="Use this model.json instead of the config's source")
    p.add_argument("--out", type=Path)
    p.set_defaults(handler=symmetrize)

    p = sub.add_parser("sample", help="Run chains on a model file")
    p.add_argument("--model", required=True, type=Path)
    p.add_argument("--osa-model", type=Path, help="OSA model for the osa-direct method")
    p.add_argument("--groups", type=Path, help="groups.json from symmetrize; without it every method is Gibbs")
    p.add_argument("--truth", type=Path, help="Marginal CSV used for the KL column of the traces")
    p.add_argument("--method", choices=METHODS, default="gibbs")
    p.add_argument("--alpha", type=float, default=0.8)
    p.add_argument("--iterations", type=int, required=True)
    p.add_argument("--burn-in", type=int, default=0)
    p.add_argument("--thinning", type=int, default=1)
    p.add_argument("--seeds", help='Comma-separated seeds, e.g. "1,2,3"')
    p.add_argument("--workers", type=int)
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(handler=sample)

    p = sub.add_parser("evaluate", help="Average KL of marginal CSVs against a truth")
    p.add_argument("--truth", type=Path, help="Truth marginal CSV")
    p.add_argument("--model", type=Path, help="Compute the truth by exact enumeration of this model")
    p.add_argument("--estimate", required=True, nargs="+", type=Path)
    p.add_argument("--out", type=Path, help="Write the KL reports to this JSON file")
    p.set_defaults(handler=evaluate)

    p = sub.add_parser("run", help="Run the whole experiment pipeline")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--out", type=Path)
    p.add_argument("--seeds")
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--alpha", type=float)
    p.add_argument("--iterations", type=int)
    p.add_argument("--workers", type=int)
    p.set_defaults(handler=run)
