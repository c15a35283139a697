"""Block-tiled attention with token-level int8 quantization and float/FP8 baselines."""

from .attention import (
    AttentionConfig,
    QuantizedAttentionInputs,
    SoftmaxState,
    Variant,
    flash_attention_float,
    fp8_emulated_attention,
    half_int8_attention,
    int_flash_attention,
    merge_softmax_state,
    reference_attention,
    run_attention,
)
from .evaluate import (
    ExperimentPlan,
    MreReport,
    PlanRow,
    bytes_loaded_model,
    mre,
    run_speed_benchmark,
    run_table_experiment,
)
from .gemm import BlockSpec, float_gemm, int_gemm_nn, int_gemm_nt
from .quant import (
    QUANT_RANGE,
    QuantizedRows,
    QuantizedTensor,
    dequantize_rows,
    dequantize_tensor,
    fp8_e4m3_roundtrip,
    quantize_per_row,
    quantize_per_tensor,
)
from .tensors import ActivationSpec, Normal, Uniform, generate, load_tensor, save_tensor

__version__ = "0.1.0"
