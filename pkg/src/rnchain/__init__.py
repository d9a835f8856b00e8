"""Radon-Nikodym derivatives of CP maps, the chain rule for sequential
dilations, and tools for nonlocal games played sequentially or through a
compiled protocol.
"""
from .cpmaps import CpMap, Instrument
from .dilation import Dilation, gns, stinespring_minimal
from .errors import RnChainError
from .games import CommutingStrategy, Correlation, Game, TensorStrategy
from .numerics import DEFAULT_TOL, Tolerance
from .radon_nikodym import CommutingRepresentation, Stage, chain2, chain_k, lift, rn_derivative
from .sequential import SequentialStrategy, to_commuting

__all__ = [
    "CommutingRepresentation", "CommutingStrategy", "Correlation", "CpMap", "DEFAULT_TOL", "Dilation",
    "Game", "Instrument", "RnChainError", "SequentialStrategy", "Stage", "TensorStrategy", "Tolerance",
    "chain2", "chain_k", "gns", "lift", "rn_derivative", "stinespring_minimal", "to_commuting",
]
