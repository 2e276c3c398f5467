"""Exact finite worlds for checking the risk decomposition, and synthetic
image worlds with controllable reliability and completeness."""

from pretextprobe.worlds.finite import (
    BoundReport,
    FiniteWorld,
    decompose_posterior,
    exact_risks,
    random_world,
    verify_bound,
)
from pretextprobe.worlds.synth import SynthSpec, SynthWorld, gen_synthetic

__all__ = [
    "BoundReport",
    "FiniteWorld",
    "SynthSpec",
    "SynthWorld",
    "decompose_posterior",
    "exact_risks",
    "gen_synthetic",
    "random_world",
    "verify_bound",
]
