"""Joint split-point and bit-width optimization for edge-cloud DNN inference.

Given a layer graph and device/network profiles, the optimizer picks how many
leading layers run on the edge device and the integer precision of each edge
layer's weights and activations, minimizing predicted end-to-end latency under
an edge memory budget and an accuracy-drop limit. A small wire protocol ships
the sub-byte boundary activations so a split deployment reproduces the
optimizer's fake-quantized reference bit for bit.
"""

from .cost import (
    ConfigError,
    DeviceProfile,
    LatencyBreakdown,
    NetworkProfile,
    load_device_config,
    split_latency,
)
from .engine import (
    EvalSet,
    calibrate_activations,
    evaluate_accuracy,
    float_accuracy,
    load_eval_dir,
    run_fake_quantized,
    run_inference,
    save_eval_dir,
)
from .graph import (
    GraphError,
    LayerGraph,
    LayerNode,
    boundary_cut,
    compute_working_sets,
    graph_from_dict,
    load_graph,
    optimize_graph,
    save_graph,
    topological_order,
)
from .quantize import (
    DistortionTable,
    QuantError,
    QuantParams,
    activation_distortion_table,
    choose_clip_range,
    dequantize,
    quantize_tensor,
    weight_distortion_table,
)
from .search import (
    BitAssignment,
    SplitSolution,
    allocate_activation_bits,
    allocate_bits_lagrangian,
    enumerate_solutions,
    potential_splits,
    select_solution,
)
from .tensorio import BlobError, read_tensor, tensor_from_bytes, tensor_to_bytes, write_tensor
from .wire import (
    ActivationMessage,
    WireError,
    decode_message,
    encode_message,
    pack_activations,
    run_split_session,
    run_tcp_session,
    unpack_activations,
)

__version__ = "0.1.0"

__all__ = [
    "ActivationMessage",
    "BitAssignment",
    "BlobError",
    "ConfigError",
    "DeviceProfile",
    "DistortionTable",
    "EvalSet",
    "GraphError",
    "LatencyBreakdown",
    "LayerGraph",
    "LayerNode",
    "NetworkProfile",
    "QuantError",
    "QuantParams",
    "SplitSolution",
    "WireError",
    "allocate_activation_bits",
    "allocate_bits_lagrangian",
    "boundary_cut",
    "calibrate_activations",
    "choose_clip_range",
    "compute_working_sets",
    "decode_message",
    "dequantize",
    "encode_message",
    "enumerate_solutions",
    "evaluate_accuracy",
    "float_accuracy",
    "graph_from_dict",
    "load_device_config",
    "load_eval_dir",
    "load_graph",
    "optimize_graph",
    "pack_activations",
    "potential_splits",
    "quantize_tensor",
    "read_tensor",
    "run_fake_quantized",
    "run_inference",
    "run_split_session",
    "run_tcp_session",
    "save_eval_dir",
    "save_graph",
    "select_solution",
    "split_latency",
    "tensor_from_bytes",
    "tensor_to_bytes",
    "topological_order",
    "unpack_activations",
    "weight_distortion_table",
    "activation_distortion_table",
    "write_tensor",
    "__version__",
]
