"""Joint precoding over MIMO broadcast channels where each transmitter holds
its own imperfect channel estimate."""

__version__ = "0.1.0"

from .channel import ChannelRealization, RngSeed, sample_channel
from .csi import (
    BitMatrix,
    Codebook,
    CsiScalingMatrix,
    HierCodebook,
    TxCsi,
    build_tx_csi,
    hier_quantize,
    make_codebook,
    make_hier_codebook,
    quantize_l2,
)
from .doftheory import DofReport, dof_for_scheme, select_passive_set
from .errors import (
    ContractError,
    DCSIError,
    NumericalDegeneracyError,
    ResourceCapError,
)
from .feedback_alloc import AllocationPlan, allocate, allocate_apzf, allocate_czf
from .precoders import PassiveSet, PrecoderMatrix, distributed_precoder
from .ratesim import RateCurve, SimConfig, dof_slope, ergodic_curve, ergodic_curves
