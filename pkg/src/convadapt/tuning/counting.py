"""Closed-form trainable-parameter counts per block and per model.

``table_block_count`` is the textbook per-block expression (no α, adapter
channels C_mid or C_in). ``closed_form_count`` matches what the model actually
allocates: true C_out, α included, and the real K×K conv width for full
fine-tuning.
"""

from __future__ import annotations

from typing import Optional

from ..adapter import AdapterConfig, adapter_param_count
from ..backbone import AttachScheme, BackboneConfig
from .modes import ModeKind, TuningMode


def table_block_count(method: str, c_in: int, c_mid: int, c_out: int, k: int, gamma: int = 1) -> int:
    """Per-block figure as printed: ``method`` is 'ft' or an AttachScheme value."""
    if method == "ft":
        return k * k * c_in * c_mid + c_in * c_mid + c_out * c_mid
    scheme = AttachScheme.parse(method)
    if scheme in (AttachScheme.CONV_PARALLEL, AttachScheme.CONV_SEQUENTIAL):
        return k * k * c_mid + (c_mid // gamma) * c_mid
    return k * k * c_in + (c_in // gamma) * c_in


def adapter_site(scheme: AttachScheme, c_in: int, c_mid: int, c_out: int):
    """Adapter (C_in, C_out) for a block under ``scheme``."""
    if scheme in (AttachScheme.CONV_PARALLEL, AttachScheme.CONV_SEQUENTIAL):
        return c_mid, c_mid
    if scheme is AttachScheme.RESIDUAL_PARALLEL:
        return c_in, c_out
    return c_out, c_out


def block_conv_count(c_in: int, c_mid: int, c_out: int, k: int, stride: int) -> int:
    n = c_in * c_mid + k * k * c_mid * c_mid + c_mid * c_out
    if stride != 1 or c_in != c_out:
        n += c_in * c_out
    return n


def block_bn_channels(c_in: int, c_mid: int, c_out: int, stride: int) -> int:
    n = c_mid + c_mid + c_out
    if stride != 1 or c_in != c_out:
        n += c_out
    return n


def head_count(config: BackboneConfig, num_classes: Optional[int] = None) -> int:
    classes = config.num_classes if num_classes is None else num_classes
    return classes * config.stages[-1].c_out + classes


def closed_form_count(
    config: BackboneConfig,
    mode: TuningMode,
    include_head: bool = True,
    include_alpha: bool = True,
    num_classes: Optional[int] = None,
) -> int:
    """Trainable elements of ``mode`` on a backbone built from ``config``, from shapes alone."""
    total = head_count(config, num_classes) if include_head else 0
    stem_c = config.stages[0].c_in
    if mode.kind is ModeKind.LINEAR_PROBE:
        return total
    if mode.kind is ModeKind.FULL:
        total += config.input_channels * stem_c * config.stem_kernel**2 + 2 * stem_c
        for _, _, c_in, c_mid, c_out, stride, k in config.block_specs():
            total += block_conv_count(c_in, c_mid, c_out, k, stride) + 2 * block_bn_channels(c_in, c_mid, c_out, stride)
        return total
    if mode.kind is ModeKind.BIAS:
        total += stem_c
        for _, _, c_in, c_mid, c_out, stride, _k in config.block_specs():
            total += block_bn_channels(c_in, c_mid, c_out, stride)
        return total
    cfg: AdapterConfig = mode.adapter
    for _, _, c_in, c_mid, c_out, _stride, _k in config.block_specs():
        a_in, a_out = adapter_site(mode.scheme, c_in, c_mid, c_out)
        total += adapter_param_count(cfg, a_in, a_out, include_alpha=include_alpha)
    return total


def fraction_of_full(config: BackboneConfig, mode: TuningMode, include_head: bool = True, num_classes: Optional[int] = None) -> float:
    """Trainable count of ``mode`` relative to full fine-tuning."""
    full = closed_form_count(config, TuningMode.full(), include_head=include_head, num_classes=num_classes)
    return closed_form_count(config, mode, include_head=include_head, num_classes=num_classes) / full
