"""Full-duplex beam learning for massive-MIMO base stations.

Simulates the self-interference and user channels of a full-duplex base
station, jointly trains probing codebooks and a beam-synthesis network to
maximize sum spectral efficiency, and evaluates the result against MRT+MRC
and capacity baselines.
"""

from fdbeam.geometry import ArrayGeometry, element_positions, steering_vector
from fdbeam.metrics import BeamPair, LinkBudget
from fdbeam.channel import (
    RAYLEIGH,
    ChannelBatch,
    ChannelRealization,
    Scenario,
    SiChannelConfig,
    UserChannelConfig,
)
from fdbeam.probing import NOISELESS, ProbingCodebooks
from fdbeam.synthesizer import SynthesizerNet, TrainConfig

__version__ = "0.1.0"

__all__ = [
    "ArrayGeometry",
    "BeamPair",
    "ChannelBatch",
    "ChannelRealization",
    "LinkBudget",
    "NOISELESS",
    "ProbingCodebooks",
    "RAYLEIGH",
    "Scenario",
    "SiChannelConfig",
    "SynthesizerNet",
    "TrainConfig",
    "UserChannelConfig",
    "element_positions",
    "steering_vector",
]
