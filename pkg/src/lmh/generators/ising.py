"""Ferromagnetic Ising lattices in the {0, 1} spin encoding."""

from typing import List, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..model import Model, Potential, SymmetryTemplate, Variable


class IsingSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    rows: int = Field(..., ge=1)
    cols: int = Field(..., ge=1)
    J: float = 1.0
    field: Union[float, List[float]] = 0.0
    field_noise: float = Field(0.0, ge=0.0, description="Std-dev of per-site Gaussian field perturbations")
    seed: int = 0

    @model_validator(mode="after")
    def _check_field(self) -> "IsingSpec":
        if isinstance(self.field, list) and len(self.field) != self.rows * self.cols:
            raise ValueError(f"Field vector has {len(self.field)} entries, expected {self.rows * self.cols}")
        return self

    def site_fields(self) -> np.ndarray:
        n = self.rows * self.cols
        fields = np.full(n, self.field, dtype=float) if not isinstance(self.field, list) else np.asarray(self.field)
        if self.field_noise > 0:
            fields = fields + np.random.default_rng(self.seed).normal(0.0, self.field_noise, size=n)
        return fields


def coupling_table(J: float) -> tuple:
    """+J when both spins agree, -J otherwise."""
    return (float(J), float(-J) + 0.0, float(-J) + 0.0, float(J))


def field_table(h: float) -> tuple:
    return (float(-h) + 0.0, float(h))


def binary_model(
    num_variables: int,
    edges: Sequence[tuple],
    couplings: Sequence[float],
    fields: Sequence[float],
    template: Optional[SymmetryTemplate] = None,
    names: Optional[Sequence[str]] = None,
) -> Model:
    """Pairwise binary model: edge potentials first, then one unary per variable."""
    variables = [
        Variable(id=v, cardinality=2, name=names[v] if names is not None else None) for v in range(num_variables)
    ]
    potentials = [
        Potential(id=pid, scope=tuple(edge), log_table=coupling_table(J))
        for pid, (edge, J) in enumerate(zip(edges, couplings))
    ]
    potentials += [
        Potential(id=len(edges) + v, scope=(v,), log_table=field_table(h)) for v, h in enumerate(fields)
    ]
    return Model(variables=variables, potentials=potentials, template=template)


def lattice_edges(rows: int, cols: int) -> List[tuple]:
    """Horizontal adjacencies row by row, then vertical ones."""
    edges = [(r * cols + c, r * cols + c + 1) for r in range(rows) for c in range(cols - 1)]
    edges += [(r * cols + c, (r + 1) * cols + c) for r in range(rows - 1) for c in range(cols)]
    return edges


def ising_grid(spec: IsingSpec) -> Model:
    edges = lattice_edges(spec.rows, spec.cols)
    names = [f"s_{r}_{c}" for r in range(spec.rows) for c in range(spec.cols)]
    return binary_model(
        spec.rows * spec.cols,
        edges,
        [spec.J] * len(edges),
        spec.site_fields(),
        template=SymmetryTemplate(kind="grid", rows=spec.rows, cols=spec.cols),
        names=names,
    )
