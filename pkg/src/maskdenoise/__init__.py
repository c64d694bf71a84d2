"""Masked training for generalizable image denoising, on a numpy autodiff core."""

__version__ = "0.1.0"
