from functools import lru_cache

from .settings import LMHSettings


@lru_cache
def get_settings() -> LMHSettings:
    return LMHSettings()
