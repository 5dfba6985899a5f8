"""Marginal estimation, gold standards and KL reporting.

Import from the submodules (`tables`, `gold`); `gold` depends on the samplers,
which in turn depend on `tables`.
"""
