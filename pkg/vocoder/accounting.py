"""
Receptive-field, parameter and FLOP accounting computed from specs alone
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from core.base_check import BaseCheck
from core.models import HOP_SAMPLES, SAMPLE_RATE, CheckResult, DiscriminatorSpec, GeneratorSpec, ModelStats, Variant
from core.module import Module

# published (parameters, GFLOPS per generated second)
REFERENCE_COMPLEXITY: Dict[Variant, Tuple[float, float]] = {
    Variant.MB: (1.91e6, 0.95),
    Variant.FB: (4.87e6, 7.60),
    Variant.BASIC: (4.27e6, 5.85),
}
PARAMETER_TOLERANCE = 0.15
FLOP_TOLERANCE = 0.20


@dataclass
class LayerCost:
    """Size and work of one convolution"""
    name: str
    in_channels: int
    out_channels: int
    kernel_size: int
    groups: int
    output_length: int
    parameters: int
    macs: int


def _conv_cost(name: str, c_in: int, c_out: int, kernel: int, length: int, groups: int = 1,
               bias: bool = True, weight_norm: bool = True) -> LayerCost:
    weights = c_out * (c_in // groups) * kernel
    params = weights + (c_out if weight_norm else 0) + (c_out if bias else 0)
    return LayerCost(name, c_in, c_out, kernel, groups, length, params, length * weights)


def _transposed_cost(name: str, c_in: int, c_out: int, stride: int, input_length: int) -> LayerCost:
    kernel = 2 * stride
    weights = c_in * c_out * kernel
    # weight norm per input channel (leading axis of the stored kernel)
    params = weights + c_in + c_out
    return LayerCost(name, c_in, c_out, kernel, 1, input_length * stride, params, input_length * weights)


def resstack_receptive_field(dilations: Sequence[int], kernel_size: int = 3) -> int:
    return 1 + (kernel_size - 1) * sum(dilations)


def receptive_field(spec: GeneratorSpec) -> int:
    """Receptive field in samples of one ResStack"""
    return resstack_receptive_field(spec.resstack_dilations, spec.kernel_size)


def frame_context(spec: GeneratorSpec) -> int:
    """Mel frames on either side that can influence the samples of one frame (rounded up)"""
    half = spec.exit_kernel // 2
    for factor in reversed(spec.upsample_factors):
        half += (spec.kernel_size - 1) // 2 * sum(spec.resstack_dilations)
        half = math.ceil((half + 2 * factor) / factor)
    return half + spec.entry_kernel // 2


def generator_layer_costs(spec: GeneratorSpec, frames: int = SAMPLE_RATE // HOP_SAMPLES) -> List[LayerCost]:
    costs = [_conv_cost("entry", spec.n_mels, spec.entry_channels, spec.entry_kernel, frames)]
    channels, length = spec.entry_channels, frames
    for stage, (factor, out_channels) in enumerate(zip(spec.upsample_factors, spec.stage_channels), start=1):
        costs.append(_transposed_cost(f"upsample{stage}", channels, out_channels, factor, length))
        channels, length = out_channels, length * factor
        for block, dilation in enumerate(spec.resstack_dilations):
            prefix = f"stack{stage}.block{block}"
            costs.append(_conv_cost(f"{prefix}.dilated", channels, channels, spec.kernel_size, length))
            costs.append(_conv_cost(f"{prefix}.pointwise", channels, channels, 1, length))
            if spec.residual_shortcut == "conv":
                costs.append(_conv_cost(f"{prefix}.shortcut", channels, channels, 1, length))
    costs.append(_conv_cost("exit", channels, spec.out_channels, spec.exit_kernel, length))
    return costs


def discriminator_layer_costs(spec: DiscriminatorSpec, samples: int = SAMPLE_RATE) -> List[LayerCost]:
    costs = []
    length = samples
    for scale in range(spec.num_scales):
        if scale > 0:
            length //= 2
        span = length
        costs.append(_conv_cost(f"scale{scale}.entry", 1, spec.entry_channels, spec.entry_kernel, span))
        channels = spec.entry_channels
        for index, (out_channels, groups) in enumerate(spec.strided):
            span = math.ceil(span / spec.stride)
            costs.append(_conv_cost(f"scale{scale}.strided{index}", channels, out_channels, spec.strided_kernel,
                                    span, groups))
            channels = out_channels
        costs.append(_conv_cost(f"scale{scale}.post", channels, spec.post_channels, spec.post_kernel, span))
        costs.append(_conv_cost(f"scale{scale}.output", spec.post_channels, 1, spec.out_kernel, span))
    return costs


def count_params(model: Module) -> int:
    """Exact element count of every trainable tensor (weight-norm g and v counted separately)"""
    return model.num_parameters()


def count_spec_params(costs: Sequence[LayerCost]) -> int:
    return sum(cost.parameters for cost in costs)


def count_flops(spec: GeneratorSpec, seconds: float = 1.0) -> float:
    """2 x multiply-accumulates of every convolution for `seconds` of generated audio"""
    frames = round(seconds * SAMPLE_RATE / HOP_SAMPLES)
    return 2.0 * sum(cost.macs for cost in generator_layer_costs(spec, frames))


def model_stats(spec: GeneratorSpec, discriminator: Optional[DiscriminatorSpec] = None) -> ModelStats:
    return ModelStats(
        variant=spec.variant,
        parameter_count=count_spec_params(generator_layer_costs(spec)),
        flops_per_second_of_audio=count_flops(spec),
        receptive_field_samples=receptive_field(spec),
        frame_context=frame_context(spec),
        discriminator_parameter_count=(
            count_spec_params(discriminator_layer_costs(discriminator)) if discriminator is not None else None
        ),
    )


class ReferenceComplexityCheck(BaseCheck):
    """Compare a figure against its published value"""

    def __init__(self, check_id: str, label: str, metric: str, reference: float, tolerance: float, scale: float,
                 unit: str):
        self.check_id = check_id
        self.metric = metric
        self.title = f"{label} vs published"
        self.label = label
        self.reference = reference
        self.tolerance = tolerance
        self.scale = scale
        self.unit = unit

    def run(self, stats: ModelStats) -> CheckResult:
        value = float(getattr(stats, self.metric))
        deviation = value / self.reference - 1.0
        expected = f"{self.reference / self.scale:.2f}{self.unit} +/- {self.tolerance:.0%}"
        actual = f"{value / self.scale:.2f}{self.unit} ({deviation:+.1%})"
        if abs(deviation) <= self.tolerance:
            return self._create_pass_result(f"{self.label} within tolerance", expected, actual, value)
        logging.warning(f"{self.label} {actual} is outside {expected}")
        return self._create_warn_result(f"{self.label} outside tolerance", expected, actual, value)


def compare_to_reference(stats: ModelStats) -> List[CheckResult]:
    if stats.variant not in REFERENCE_COMPLEXITY:
        return []
    params, gflops = REFERENCE_COMPLEXITY[stats.variant]
    checks = [
        ReferenceComplexityCheck(f"{stats.variant.value}.params", "parameters", "parameter_count", params,
                                 PARAMETER_TOLERANCE, 1e6, "M"),
        ReferenceComplexityCheck(f"{stats.variant.value}.gflops", "GFLOPS", "gflops", gflops, FLOP_TOLERANCE,
                                 1.0, ""),
    ]
    return [check.evaluate(stats) for check in checks]
