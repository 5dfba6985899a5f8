"""
Pipeline work behind the CLI: build models and OSAs, derive groups, run chain
pools, write artifacts.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import shutil
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import yaml
from pydantic import BaseModel

from . import __version__
from .app.dependencies import get_settings
from .errors import ConfigurationError, StateSpaceTooLargeError
from .estimation.gold import gold_standard
from .estimation.tables import MarginalTable, avg_kl
from .generators.chimera import chimera
from .generators.ising import ising_grid
from .generators.mln import Evidence, GroundModel, MLNProgram, load_evidence, load_program, mln_ground
from .group import PermutationGroup
from .model import Model, enumerate_exact_marginals
from .samplers import ChainResult, KernelConfig, TraceRow, run_chain
from .schemas import (
    ChimeraSource,
    ExperimentConfig,
    FileSource,
    GroupDocument,
    GroupsDocument,
    IsingSource,
    KLSummary,
    MethodSummary,
    MLNSource,
    OSAConfig,
    OSAManifest,
    RunManifest,
    ScheduleConfig,
)
from .symmetry.automorphisms import exact_automorphisms
from .symmetry.bmf import BMFResult
from .symmetry.clustering import OSAModel, cluster_weights, compose_osa, osa_from_models, zero_unaries
from .symmetry.heuristic import HeuristicConfig, subgroup_heuristic
from .symmetry.relational import osa_from_groundings, symmetrize_relation

logger = logging.getLogger(__name__)


# Config and file helpers


def load_config(path: Path) -> ExperimentConfig:
    """Load a JSON or YAML experiment config; relative file paths resolve against its directory."""
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"Config file not found: {path}")
    text = path.read_text()
    try:
        raw = json.loads(text) if path.suffix.lower() == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as e:
        raise ConfigurationError(f"Cannot parse config {path}: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigurationError(f"Config {path} must hold a mapping at top level")
    source = raw.get("source")
    if isinstance(source, dict):
        for key in ("program", "evidence", "path"):
            if source.get(key) is not None and not Path(source[key]).is_absolute():
                source[key] = str(path.parent / source[key])
    config = ExperimentConfig.model_validate(raw)
    check_files(config)
    return config


def check_files(config: ExperimentConfig) -> None:
    for file in config.referenced_files():
        if not Path(file).exists():
            raise ConfigurationError(f"Referenced file not found: {file}")


def write_json(path: Path, document) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(document, BaseModel):
        path.write_text(document.model_dump_json(indent=2))
    else:
        path.write_text(json.dumps(document, indent=2))


def read_model(path: Path) -> Model:
    return Model.model_validate_json(Path(path).read_text())


def write_traces(path: Path, rows: Sequence[TraceRow]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(TraceRow.HEADER)
        for row in rows:
            writer.writerow(row.as_row())


@contextmanager
def staged_output(out: Path) -> Iterator[Path]:
    """Write into a sibling staging directory; move results into `out` only on success."""
    out = Path(out)
    stage = out.parent / f".{out.name}.partial"
    if stage.exists():
        shutil.rmtree(stage)
    stage.mkdir(parents=True)
    try:
        yield stage
    except BaseException:
        shutil.rmtree(stage, ignore_errors=True)
        raise
    out.mkdir(parents=True, exist_ok=True)
    for item in stage.iterdir():
        target = out / item.name
        if target.is_dir():
            shutil.rmtree(target)
        elif target.exists():
            target.unlink()
        shutil.move(str(item), str(target))
    stage.rmdir()


# Models and approximations


@dataclass(frozen=True)
class SourceBundle:
    model: Model
    ground: Optional[GroundModel] = None
    program: Optional[MLNProgram] = None
    evidence: Optional[Evidence] = None


def build_source(source) -> SourceBundle:
    if isinstance(source, IsingSource):
        return SourceBundle(model=ising_grid(source.spec))
    if isinstance(source, ChimeraSource):
        return SourceBundle(model=chimera(source.spec))
    if isinstance(source, FileSource):
        return SourceBundle(model=read_model(source.path))
    if isinstance(source, MLNSource):
        program = load_program(source.program)
        evidence = load_evidence(source.evidence, program) if source.evidence else Evidence()
        ground = mln_ground(program, evidence)
        return SourceBundle(model=ground.model, ground=ground, program=program, evidence=evidence)
    raise ConfigurationError(f"Unsupported model source {type(source).__name__}")


def build_osa(bundle: SourceBundle, config: OSAConfig) -> Tuple[OSAModel, Optional[BMFResult]]:
    """Relation symmetrization, then zeroed unaries, then weight clustering; each step optional."""
    osa: Optional[OSAModel] = None
    bmf: Optional[BMFResult] = None
    if config.rank is not None:
        if bundle.program is None:
            raise ConfigurationError("Relation symmetrization needs an MLN model source")
        evidence, bmf = symmetrize_relation(bundle.program, bundle.evidence, config.relation, config.rank)
        osa = osa_from_groundings(bundle.ground, mln_ground(bundle.program, evidence), label=f"bmf-{config.rank}")

    def then(step: OSAModel) -> OSAModel:
        return step if osa is None else compose_osa(osa, step)

    if config.zero_unaries:
        osa = then(zero_unaries(osa.model if osa else bundle.model))
    if config.clusters is not None:
        osa = then(cluster_weights(osa.model if osa else bundle.model, config.clusters))
    if osa is None:
        osa = osa_from_models(bundle.model, bundle.model)
    return dataclasses.replace(osa, label=config.label), bmf


@dataclass(frozen=True)
class DerivedGroups:
    lifted: Optional[PermutationGroup] = None
    osa: Optional[PermutationGroup] = None
    heuristic: Tuple[PermutationGroup, ...] = ()

    def to_document(self, degree: int) -> GroupsDocument:
        return GroupsDocument(
            degree=degree,
            lifted=GroupDocument.from_group(self.lifted) if self.lifted else None,
            osa=GroupDocument.from_group(self.osa) if self.osa else None,
            heuristic=[GroupDocument.from_group(g) for g in self.heuristic],
        )

    @classmethod
    def from_document(cls, document: GroupsDocument) -> "DerivedGroups":
        return cls(
            lifted=document.lifted.to_group() if document.lifted else None,
            osa=document.osa.to_group() if document.osa else None,
            heuristic=tuple(g.to_group() for g in document.heuristic),
        )


def derive_groups(
    model: Model,
    osa: OSAModel,
    heuristic: HeuristicConfig,
    mode: str = "search",
    methods: Sequence[str] = ("lifted-mcmc", "lmh"),
) -> DerivedGroups:
    """Exact automorphisms of the model and its OSA, and heuristic subgroups of the OSA orbits."""
    lifted = exact_automorphisms(model, mode) if "lifted-mcmc" in methods else None
    osa_group, selected = None, ()
    if "lmh" in methods:
        osa_group = exact_automorphisms(osa.model, mode)
        selected = tuple(subgroup_heuristic(osa_group.orbits, model, heuristic))
    return DerivedGroups(lifted=lifted, osa=osa_group, heuristic=selected)


def method_plan(
    method: str,
    model: Model,
    osa: Optional[OSAModel],
    groups: DerivedGroups,
    alpha: float,
    scan: str = "random",
) -> Tuple[Model, KernelConfig]:
    """Model to sample and kernel for one comparison method; degenerates to Gibbs without groups."""
    gibbs = KernelConfig.gibbs(scan)
    if method == "gibbs":
        return model, gibbs
    if method == "lifted-mcmc":
        if groups.lifted is None or not groups.lifted.moved_variables:
            logger.info("No exact symmetries: lifted-mcmc coincides with Gibbs")
            return model, gibbs
        return model, dataclasses.replace(KernelConfig.mixture([groups.lifted], alpha), scan=scan)
    if method == "lmh":
        if not groups.heuristic:
            logger.info("No heuristic subgroups: lmh coincides with Gibbs")
            return model, gibbs
        return model, dataclasses.replace(KernelConfig.mixture(groups.heuristic, alpha), scan=scan)
    if method == "osa-direct":
        if osa is None:
            raise ConfigurationError("Method 'osa-direct' needs an OSA model")
        return osa.model, gibbs
    raise ConfigurationError(f"Unknown method '{method}'")


def compute_truth(model: Model, gold_iterations: int, gold_seed: int = 0) -> MarginalTable:
    """Exact marginals when enumeration fits the cap, otherwise a Gibbs gold standard."""
    try:
        return enumerate_exact_marginals(model)
    except StateSpaceTooLargeError:
        logger.info("State space too large to enumerate; falling back to the Gibbs gold standard")
        return gold_standard(model, gold_seed, gold_iterations)


# Chain pool


def chain_seed(seed: int, index: int) -> int:
    """64-bit seed for chain `index`; hashed so that distinct (seed, index) pairs get unrelated streams."""
    return int(np.random.SeedSequence([seed, index]).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class ChainJob:
    method: str
    chain_index: int
    seed: int
    model: Model
    kernel: KernelConfig
    schedule: ScheduleConfig
    truth: Optional[MarginalTable]


def _run_job(job: ChainJob) -> ChainResult:
    return run_chain(
        job.model,
        job.kernel,
        job.seed,
        job.schedule.iterations,
        burn_in=job.schedule.burn_in,
        thinning=job.schedule.thinning,
        truth=job.truth,
        checkpoints=job.schedule.checkpoints,
        chain_id=job.chain_index,
        label=job.method,
    )


def run_chains(jobs: Sequence[ChainJob], workers: Optional[int] = None) -> List[ChainResult]:
    workers = get_settings().workers if workers is None else workers
    if workers <= 1 or len(jobs) <= 1:
        return [_run_job(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_job, jobs))


def sample_methods(
    model: Model,
    osa: Optional[OSAModel],
    groups: DerivedGroups,
    methods: Sequence[str],
    seeds: Sequence[int],
    schedule: ScheduleConfig,
    alpha: float,
    truth: Optional[MarginalTable],
    scan: str = "random",
    workers: Optional[int] = None,
) -> Dict[str, List[ChainResult]]:
    """Every method runs one chain per listed seed, with the same chain seeds across methods."""
    jobs = []
    for method in methods:
        target, kernel = method_plan(method, model, osa, groups, alpha, scan)
        for i, seed in enumerate(seeds):
            jobs.append(ChainJob(method, i, chain_seed(seed, i), target, kernel, schedule, truth))
    logger.info("Running %d chain(s) over %d method(s)", len(jobs), len(methods))
    results = run_chains(jobs, workers)
    by_method: Dict[str, List[ChainResult]] = {m: [] for m in methods}
    for job, result in zip(jobs, results):
        by_method[job.method].append(result)
    return by_method


def summarize(
    results: Dict[str, List[ChainResult]],
    seeds: Sequence[int],
    truth: Optional[MarginalTable],
    epsilon: Optional[float] = None,
) -> KLSummary:
    epsilon = get_settings().kl_epsilon if epsilon is None else epsilon
    methods = {}
    for method, chains in results.items():
        final = {
            str(seed): (avg_kl(truth, r.marginals, epsilon).average if truth is not None else None)
            for seed, r in zip(seeds, chains)
        }
        values = [v for v in final.values() if v is not None]
        rates = [r.stats.acceptance_rate for r in chains if r.stats.acceptance_rate is not None]
        methods[method] = MethodSummary(
            final_kl=final,
            mean_final_kl=float(np.mean(values)) if values else None,
            mean_acceptance_rate=float(np.mean(rates)) if rates else None,
        )
    return KLSummary(epsilon=epsilon, methods=methods)


def write_chain_outputs(out: Path, results: Dict[str, List[ChainResult]]) -> None:
    merged: List[TraceRow] = []
    for method, chains in results.items():
        for i, result in enumerate(chains):
            write_traces(out / "traces" / f"{method}_chain{i}.csv", result.trace)
            result.marginals.to_csv(out / "marginals" / f"{method}_chain{i}.csv")
            merged.extend(result.trace)
    write_traces(out / "traces.csv", merged)


def osa_manifest(osa: OSAModel, config: OSAConfig, bmf: Optional[BMFResult], groups: DerivedGroups) -> OSAManifest:
    return OSAManifest(
        label=config.label,
        clusters=config.clusters,
        rank=config.rank,
        relation=config.relation,
        zero_unaries=config.zero_unaries,
        bmf_error=bmf.error if bmf is not None else None,
        replacements=osa.provenance(),
        osa_generators=[g.to_cycles() for g in groups.osa.generators] if groups.osa else [],
        heuristic_supports=[list(g.symmetric_support or ()) for g in groups.heuristic],
    )


def run_experiment(config: ExperimentConfig, out: Optional[Path] = None, workers: Optional[int] = None) -> KLSummary:
    """Generate, symmetrize, derive groups, sample every method and write all artifacts."""
    out = Path(out or config.out)
    config = config.model_copy(update={"out": out})
    with staged_output(out) as stage:
        bundle = build_source(config.source)
        model = bundle.model
        logger.info("Model: %d variables, %d potentials", model.num_variables, len(model.potentials))
        osa, bmf = build_osa(bundle, config.osa)
        groups = derive_groups(model, osa, config.heuristic, config.symmetry_mode, config.kernel.methods)
        truth = compute_truth(model, config.truth.gold_iterations, config.truth.gold_seed)

        write_json(stage / "model.json", model)
        write_json(stage / "osa_model.json", osa.model)
        if bundle.ground is not None:
            write_json(stage / "atoms.json", bundle.ground.atom_names())
        write_json(stage / "groups.json", groups.to_document(model.num_variables))
        write_json(stage / "osa_manifest.json", osa_manifest(osa, config.osa, bmf, groups))
        truth.to_csv(stage / "truth.csv")

        results = sample_methods(
            model,
            osa,
            groups,
            config.kernel.methods,
            config.seeds,
            config.schedule,
            config.kernel.alpha,
            truth,
            scan=config.kernel.scan,
            workers=workers,
        )
        write_chain_outputs(stage, results)
        summary = summarize(results, config.seeds, truth)
        write_json(stage / "kl_summary.json", summary)
        write_json(
            stage / "manifest.json",
            RunManifest(
                lmh_version=__version__,
                config=config,
                settings=get_settings().model_dump(),
                seeds=list(config.seeds),
                chain_seeds=[chain_seed(s, i) for i, s in enumerate(config.seeds)],
                truth=dict(truth.provenance),
                model_variables=model.num_variables,
                model_potentials=len(model.potentials),
            ),
        )
    return summary
