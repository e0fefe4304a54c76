"""Minimal differentiable toolkit for the two reconstruction networks."""

from .adam import AdamState, adam_step
from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import grad_check, grad_check_details
from .losses import gradient_mse, loss_ldr, loss_linear_hdr, loss_ln
from .unet import UNet, UNetConfig, count_params, init_params

__all__ = [
    "AdamState", "adam_step", "load_checkpoint", "save_checkpoint",
    "grad_check", "grad_check_details", "gradient_mse", "loss_ldr",
    "loss_linear_hdr", "loss_ln", "UNet", "UNetConfig", "count_params",
    "init_params",
]
