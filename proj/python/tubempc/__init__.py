"""Tube-based robust MPC toolkit: offline design, online solves, simulation."""

from ._core import (
    Design,
    design,
    design_scalars,
    discretize_tube_ct,
    preset_config,
    preset_names,
    propagate_h,
    propagate_tube,
    tighten,
)

__all__ = [
    "Design",
    "design",
    "design_scalars",
    "discretize_tube_ct",
    "preset_config",
    "preset_names",
    "propagate_h",
    "propagate_tube",
    "tighten",
]
