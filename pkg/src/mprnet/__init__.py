"""Mask-aware recurrent inpainting network on a small numpy autodiff core."""
from .attention import AttentionState, KnowledgeConsistentAttention, cosine_similarity
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .data import (BUCKETS, InpaintSample, MaskBucket, bucket_of, generate_mask, load_image,
                   load_mask, save_image, save_mask)
from .fusion import gated_fuse, mfa_aggregate
from .gradcheck import GradCheckReport, grad_check
from .kernels import BACKEND
from .losses import FeaturePyramid, LossWeights, joint_loss, perceptual_loss, reconstruction_losses, style_loss
from .metrics import EvalReport, evaluate, psnr, ssim
from .model import ModelConfig, MprNet, composite
from .mpr import MprConfig, MprCore, run_mpr
from .pconv import closure_index, mask_closure_oracle, partial_conv
from .tensor import Parameter, Tensor, no_grad

__version__ = "0.1.0"
