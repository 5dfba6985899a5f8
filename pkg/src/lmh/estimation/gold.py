import logging
from typing import Optional

from ..app.dependencies import get_settings
from ..errors import ConfigurationError
from ..model import Model
from ..samplers import KernelConfig, run_chain
from .tables import MarginalTable

logger = logging.getLogger(__name__)


def gold_standard(
    model: Model,
    seed: int,
    iterations: int,
    min_iterations: Optional[int] = None,
) -> MarginalTable:
    """Reference marginals from one long Gibbs run, first 10% discarded as burn-in."""
    min_iterations = get_settings().gold_min_iterations if min_iterations is None else min_iterations
    if iterations < min_iterations:
        raise ConfigurationError(
            f"Gold standard needs at least {min_iterations} iterations, got {iterations}"
        )
    burn_in = iterations // 10
    logger.info("Running %d-step Gibbs gold standard (seed %d)", iterations, seed)
    result = run_chain(model, KernelConfig.gibbs(), seed, iterations, burn_in=burn_in, checkpoints=[], label="gold")
    return MarginalTable(
        probabilities=result.marginals.probabilities,
        sample_count=result.marginals.sample_count,
        provenance={"source": "gibbs-gold-standard", "seed": seed, "iterations": iterations, "burn_in": burn_in},
    )
