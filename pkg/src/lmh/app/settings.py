from pydantic_settings import BaseSettings, SettingsConfigDict


class LMHSettings(BaseSettings):
    """Runtime knobs, read from LMH_* environment variables or a .env file."""

    model_config = SettingsConfigDict(env_prefix="LMH_", env_file=".env", extra="ignore")

    # Cross-check every orbital acceptance ratio against full re-evaluation
    debug_full_eval: bool = False

    max_enumeration_states: int = 2 ** 24

    search_max_variables: int = 200
    search_node_budget: int = 2_000_000

    # Product replacement
    pr_min_slots: int = 10
    pr_burn_in: int = 50

    gold_min_iterations: int = 1_000_000
    kl_epsilon: float = 1e-6

    kmeans_seed: int = 0
    kmeans_iterations: int = 100
    asso_threshold: float = 0.5

    workers: int = 1
    log_level: str = "INFO"
