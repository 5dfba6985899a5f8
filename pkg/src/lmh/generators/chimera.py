"""
Chimera graphs: an M x N grid of unit cells, each a complete bipartite 4+4
graph. Left-partition lane k couples to lane k of the cell below, right lane
k to lane k of the cell to the right.
"""

from typing import List, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..model import Model, SymmetryTemplate
from .ising import binary_model


class ChimeraSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    rows: int = Field(..., ge=1, description="Cell rows M")
    cols: int = Field(..., ge=1, description="Cell columns N")
    intra_coupling: float = 1.0
    inter_coupling: float = 1.0
    field: Union[float, List[float]] = 0.0
    coupling_noise: float = Field(0.0, ge=0.0)
    field_noise: float = Field(0.0, ge=0.0)
    seed: int = 0

    @model_validator(mode="after")
    def _check_field(self) -> "ChimeraSpec":
        if isinstance(self.field, list) and len(self.field) != 8 * self.rows * self.cols:
            raise ValueError(f"Field vector has {len(self.field)} entries, expected {8 * self.rows * self.cols}")
        return self


def chimera_variable(i: int, j: int, side: int, k: int, cols: int) -> int:
    """Variable id of lane k on side 0 (left) or 1 (right) of cell (i, j)."""
    return 8 * (i * cols + j) + 4 * side + k


def chimera_edges(rows: int, cols: int) -> tuple:
    """(intra-cell edges, inter-cell edges) in cell-major order."""
    intra = [
        (chimera_variable(i, j, 0, a, cols), chimera_variable(i, j, 1, b, cols))
        for i in range(rows)
        for j in range(cols)
        for a in range(4)
        for b in range(4)
    ]
    inter = [
        (chimera_variable(i, j, 0, k, cols), chimera_variable(i + 1, j, 0, k, cols))
        for i in range(rows - 1)
        for j in range(cols)
        for k in range(4)
    ]
    inter += [
        (chimera_variable(i, j, 1, k, cols), chimera_variable(i, j + 1, 1, k, cols))
        for i in range(rows)
        for j in range(cols - 1)
        for k in range(4)
    ]
    return intra, inter


def chimera(spec: ChimeraSpec) -> Model:
    n = 8 * spec.rows * spec.cols
    intra, inter = chimera_edges(spec.rows, spec.cols)
    couplings = np.array([spec.intra_coupling] * len(intra) + [spec.inter_coupling] * len(inter), dtype=float)
    fields = np.full(n, spec.field, dtype=float) if not isinstance(spec.field, list) else np.asarray(spec.field)
    rng = np.random.default_rng(spec.seed)
    if spec.coupling_noise > 0:
        couplings = couplings + rng.normal(0.0, spec.coupling_noise, size=len(couplings))
    if spec.field_noise > 0:
        fields = fields + rng.normal(0.0, spec.field_noise, size=n)
    names = [
        f"c_{i}_{j}_{'LR'[side]}{k}"
        for i in range(spec.rows)
        for j in range(spec.cols)
        for side in (0, 1)
        for k in range(4)
    ]
    return binary_model(
        n,
        intra + inter,
        couplings,
        fields,
        template=SymmetryTemplate(kind="chimera", rows=spec.rows, cols=spec.cols),
        names=names,
    )
