"""Documents exchanged through files: experiment configs, groups and run manifests."""

from pathlib import Path
from typing import Annotated, Any, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .generators.chimera import ChimeraSpec
from .generators.ising import IsingSpec
from .group import Permutation, PermutationGroup
from .symmetry.heuristic import HeuristicConfig

Method = Literal["gibbs", "lifted-mcmc", "lmh", "osa-direct"]
METHODS: tuple = ("gibbs", "lifted-mcmc", "lmh", "osa-direct")


class IsingSource(BaseModel):
    kind: Literal["ising"] = "ising"
    spec: IsingSpec


class ChimeraSource(BaseModel):
    kind: Literal["chimera"] = "chimera"
    spec: ChimeraSpec


class MLNSource(BaseModel):
    kind: Literal["mln"] = "mln"
    program: Path
    evidence: Optional[Path] = None


class FileSource(BaseModel):
    kind: Literal["file"] = "file"
    path: Path = Field(..., description="A model.json written by `lmh generate`")


ModelSource = Annotated[Union[IsingSource, ChimeraSource, MLNSource, FileSource], Field(discriminator="kind")]


class OSAConfig(BaseModel):
    """How the over-symmetric approximation is built; all unset means the model itself."""

    clusters: Optional[int] = Field(None, ge=1, description="c: k-means clusters per scope shape")
    rank: Optional[int] = Field(None, ge=1, description="r: Boolean rank of the symmetrized relation")
    relation: Optional[str] = Field(None, description="Binary evidence predicate approximated at rank r")
    zero_unaries: bool = False

    @model_validator(mode="after")
    def _rank_needs_relation(self) -> "OSAConfig":
        if (self.rank is None) != (self.relation is None):
            raise ValueError("'rank' and 'relation' must be given together")
        return self

    @property
    def label(self) -> str:
        return f"OSA-{self.rank if self.rank is not None else '-'}-{self.clusters if self.clusters is not None else '-'}"


class KernelSettings(BaseModel):
    alpha: float = Field(0.8, gt=0.0, lt=1.0)
    methods: List[Method] = Field(default_factory=lambda: ["gibbs", "lifted-mcmc", "lmh"], min_length=1)
    scan: Literal["random", "systematic"] = "random"


class ScheduleConfig(BaseModel):
    iterations: int = Field(..., ge=1)
    burn_in: int = Field(0, ge=0)
    thinning: int = Field(1, ge=1)
    checkpoints: Optional[List[int]] = Field(None, description="Defaults to floor(100 * 1.5^k) plus the last iteration")

    @model_validator(mode="after")
    def _check_order(self) -> "ScheduleConfig":
        if self.burn_in >= self.iterations:
            raise ValueError(f"burn_in ({self.burn_in}) must be smaller than iterations ({self.iterations})")
        return self


class TruthConfig(BaseModel):
    gold_iterations: int = Field(10_000_000, ge=1)
    gold_seed: int = 0


class ExperimentConfig(BaseModel):
    name: str = "experiment"
    source: ModelSource
    osa: OSAConfig = Field(default_factory=OSAConfig)
    heuristic: HeuristicConfig = Field(default_factory=lambda: HeuristicConfig(K=50))
    symmetry_mode: Literal["template", "search"] = "search"
    kernel: KernelSettings = Field(default_factory=KernelSettings)
    schedule: ScheduleConfig
    seeds: List[Annotated[int, Field(ge=0)]] = Field(..., min_length=1)
    truth: TruthConfig = Field(default_factory=TruthConfig)
    out: Path = Path("runs/experiment")

    @field_validator("seeds")
    @classmethod
    def _distinct_seeds(cls, seeds: List[int]) -> List[int]:
        if len(set(seeds)) != len(seeds):
            raise ValueError(f"Seeds must be distinct, got {seeds}")
        return seeds

    def referenced_files(self) -> List[Path]:
        if isinstance(self.source, MLNSource):
            return [p for p in (self.source.program, self.source.evidence) if p is not None]
        if isinstance(self.source, FileSource):
            return [self.source.path]
        return []


class GroupDocument(BaseModel):
    """A permutation group as generators in disjoint-cycle notation; `symmetric_support` marks Sym(O')."""

    degree: int
    generators: List[List[List[int]]]
    symmetric_support: Optional[List[int]] = None

    @classmethod
    def from_group(cls, group: PermutationGroup) -> "GroupDocument":
        return cls(
            degree=group.degree,
            generators=[g.to_cycles() for g in group.generators],
            symmetric_support=None if group.symmetric_support is None else list(group.symmetric_support),
        )

    def to_group(self) -> PermutationGroup:
        support = None if self.symmetric_support is None else tuple(self.symmetric_support)
        generators = tuple(Permutation.from_cycles(c, self.degree) for c in self.generators)
        return PermutationGroup(generators, symmetric_support=support)


class GroupsDocument(BaseModel):
    degree: int
    lifted: Optional[GroupDocument] = Field(None, description="Exact automorphisms of the original model")
    osa: Optional[GroupDocument] = Field(None, description="Exact automorphisms of the OSA model")
    heuristic: List[GroupDocument] = Field(default_factory=list, description="Selected Sym(O') subgroups")


class OSAManifest(BaseModel):
    label: str
    clusters: Optional[int] = None
    rank: Optional[int] = None
    relation: Optional[str] = None
    zero_unaries: bool = False
    bmf_error: Optional[int] = None
    replacements: List[Dict[str, Any]] = Field(default_factory=list)
    osa_generators: List[List[List[int]]] = Field(default_factory=list, description="Generators as disjoint cycles")
    heuristic_supports: List[List[int]] = Field(default_factory=list)


class RunManifest(BaseModel):
    model_config = ConfigDict(protected_namespaces=())

    lmh_version: str
    config: ExperimentConfig
    settings: Dict[str, Any]
    seeds: List[int]
    chain_seeds: List[int] = Field(
        ..., description="Chain i draws from default_rng(SeedSequence([seeds[i], i]) hashed to 64 bits)"
    )
    truth: Dict[str, Any]
    model_variables: int
    model_potentials: int


class MethodSummary(BaseModel):
    final_kl: Dict[str, Optional[float]]
    mean_final_kl: Optional[float]
    mean_acceptance_rate: Optional[float] = None


class KLSummary(BaseModel):
    direction: str = "KL(truth || estimate)"
    epsilon: float
    methods: Dict[str, MethodSummary]
