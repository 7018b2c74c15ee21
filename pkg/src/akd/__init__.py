"""Self-supervised knowledge distillation between vision transformers.

Class-token projector alignment plus attention guidance across
mismatched teacher/student architectures, with a tape-based reverse-mode
tensor core, a training harness and an evaluation suite.
"""

from .errors import (AkdError, CheckpointError, ConfigError, ContractError,
                     DimensionError, NumericError,
                     UnsupportedCombinationError)
from .kernels import IMPL as kernel_backend
from .losses import (ClassAttention, DistillConfig, Projector,
                     aggregate_heads, aggregate_heads_alt, ag_loss,
                     interpolate_attention, kl_divergence, pa_loss,
                     patch_token_alignment, total_loss)
from .tensor import Tensor, Tape, backward, record_tape
from .vit import (AttentionRecord, EncoderOutput, ViTConfig, init_params,
                  vit_forward)

__version__ = "0.1.0"
