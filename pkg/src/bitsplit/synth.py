"""Bundled synthetic assets: shapes dataset, a handcrafted toy classifier, a
ResNet-50-shaped analysis graph, and random DAGs for oracle corpora.

Everything derives deterministically from an integer seed. Dataset pixels live
on the k/256 grid so 8-bit input quantization is exact. The toy classifier is
constructed, not trained: a fixed filter bank feeds a matched-filter fc layer
whose rows are the feature-space centroids of the ten clean templates.
"""

from __future__ import annotations

import numpy as np

from .engine import EvalSet, run_inference
from .graph import LayerGraph, LayerNode, WEIGHTED_OPS, topological_order

NUM_CLASSES = 10
IMG = 16


# -- dataset -------------------------------------------------------------------


def class_templates() -> np.ndarray:
    """Ten fixed 16x16 binary shape masks.

    Classes come in look-alike pairs at graded offsets (bars shifted by two
    pixels, dot grids by one) so that precision loss translates into a
    measurable, graded accuracy drop rather than all-or-nothing behavior.
    """
    T = np.zeros((NUM_CLASSES, IMG, IMG), dtype=np.float64)
    i = np.arange(IMG)
    T[0, 5:9, 2:14] = 1  # horizontal bar
    T[1, 7:11, 2:14] = 1  # same bar, two rows lower
    T[2, 2:14, 5:9] = 1  # vertical bar
    T[3, 2:14, 7:11] = 1  # same bar, two columns right
    T[4][np.abs(i[:, None] - i[None, :]) <= 1] = 1  # diagonal
    T[5][np.abs(i[:, None] + i[None, :] - (IMG - 1)) <= 1] = 1  # anti-diagonal
    T[6, 3:13, 3:13] = 1
    T[6, 5:11, 5:11] = 0  # ring
    T[7, 5:11, 5:11] = 1  # filled square
    for y in (3, 7, 11):
        for x in (3, 7, 11):
            T[8, y : y + 2, x : x + 2] = 1  # dot grid
    for y in (4, 8, 12):
        for x in (4, 8, 12):
            T[9, y : y + 2, x : x + 2] = 1  # dot grid, one pixel off
    return T


BG_LEVEL = 40
FG_LEVEL = 150


def _render(mask: np.ndarray, jitter: np.ndarray) -> np.ndarray:
    px = BG_LEVEL + mask * (FG_LEVEL - BG_LEVEL) + jitter
    px = np.clip(np.rint(px), 0, 255)
    return (px / 256.0).astype(np.float32).reshape(1, IMG, IMG)


def make_eval_set(per_class: int = 20, seed: int = 0, noise: int = 60) -> EvalSet:
    """Noisy renders of the templates; pixels exactly representable at 8 bits."""
    rng = np.random.default_rng(seed)
    T = class_templates()
    inputs, labels = [], []
    for k in range(per_class):
        for c in range(NUM_CLASSES):
            jitter = rng.integers(-noise, noise + 1, size=(IMG, IMG))
            inputs.append(_render(T[c], jitter))
            labels.append(c)
    return EvalSet(inputs=inputs, labels=labels)


def clean_inputs() -> list:
    T = class_templates()
    return [_render(T[c], np.zeros((IMG, IMG))) for c in range(NUM_CLASSES)]


# -- toy classifier ---------------------------------------------------------------


def _stem_nodes(rng) -> list:
    f = np.zeros((8, 1, 3, 3), dtype=np.float64)
    f[0, 0, 1, 1] = 1.0  # identity
    f[1, 0] = 1.0 / 9.0  # blur
    f[2, 0] = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]]) / 4.0  # edge x
    f[3, 0] = f[2, 0].T  # edge y
    f[4, 0] = np.array([[0, 1, 0], [1, -4, 1], [0, 1, 0]]) / 4.0  # laplacian
    f[5, 0] = np.array([[2, 1, 0], [1, 0, -1], [0, -1, -2]]) / 4.0  # diag edge
    f[6, 0] = np.fliplr(f[5, 0])  # anti-diag edge
    f[7, 0] = np.array([[-1, -1, -1], [-1, 8, -1], [-1, -1, -1]]) / 8.0  # center-surround

    k = np.arange(8)
    bn = np.stack(
        [
            1.0 + 0.05 * np.cos(k),  # gamma
            0.02 * np.sin(k),  # beta
            0.03 + 0.01 * k / 8.0,  # running mean
            1.0 + 0.1 * np.sin(k + 0.5),  # running var
        ]
    )

    blur = np.array([[1, 2, 1], [2, 4, 2], [1, 2, 1]], dtype=np.float64) / 16.0
    mix2 = 0.7 * np.eye(8) + 0.3 * rng.standard_normal((8, 8)) / np.sqrt(8)
    w2 = mix2[:, :, None, None] * blur[None, None, :, :]

    mixp = 0.8 * np.eye(8) + 0.2 * rng.standard_normal((8, 8)) / np.sqrt(8)
    wp = mixp[:, :, None, None]

    sharpen = np.array([[0, -1, 0], [-1, 5, -1], [0, -1, 0]], dtype=np.float64) / 3.0
    wd = np.broadcast_to(sharpen, (8, 3, 3)).copy()

    return [
        LayerNode(0, "input", out_shape=(1, IMG, IMG)),
        LayerNode(1, "conv", attrs={"stride": 1, "pad": 1}, weight_shape=(8, 1, 3, 3),
                  out_shape=(8, IMG, IMG), inputs=[0], weights=f.astype(np.float32)),
        LayerNode(2, "batchnorm", weight_shape=(4, 8), out_shape=(8, IMG, IMG), inputs=[1],
                  weights=bn.astype(np.float32)),
        LayerNode(3, "relu", out_shape=(8, IMG, IMG), inputs=[2]),
        LayerNode(4, "conv", attrs={"stride": 2, "pad": 1}, weight_shape=(8, 8, 3, 3),
                  out_shape=(8, 8, 8), inputs=[3], weights=w2.astype(np.float32)),
        LayerNode(5, "relu", out_shape=(8, 8, 8), inputs=[4]),
        LayerNode(6, "pointwise_conv", weight_shape=(8, 8, 1, 1), out_shape=(8, 8, 8), inputs=[5],
                  weights=wp.astype(np.float32)),
        LayerNode(7, "add", out_shape=(8, 8, 8), inputs=[5, 6]),
        LayerNode(8, "relu", out_shape=(8, 8, 8), inputs=[7]),
        LayerNode(9, "depthwise_conv", attrs={"stride": 2, "pad": 1}, weight_shape=(8, 3, 3),
                  out_shape=(8, 4, 4), inputs=[8], weights=wd.astype(np.float32)),
    ]


def make_toy_classifier(seed: int = 0) -> LayerGraph:
    """Small conv net over the shapes dataset; fc rows are template centroids."""
    rng = np.random.default_rng(seed + 1000003)
    nodes = _stem_nodes(rng)
    stem = LayerGraph(nodes, input_bits=8)
    feats = [run_inference(stem, x)[0].ravel().astype(np.float64) for x in clean_inputs()]
    F = np.stack(feats)
    scale = 1.0 / max(1e-9, float(np.mean(np.linalg.norm(F, axis=1))))
    W = (F * scale).astype(np.float32)
    b = (-0.5 * scale * np.sum(F * F, axis=1)).astype(np.float32)
    nodes = nodes + [
        LayerNode(10, "fc", weight_shape=(NUM_CLASSES, 8 * 4 * 4), out_shape=(NUM_CLASSES,),
                  inputs=[9], weights=W, bias=b)
    ]
    return LayerGraph(nodes, input_bits=8)


def toy_device_config() -> dict:
    """Small-accelerator edge, datacenter cloud, cellular uplink."""
    return {
        "edge": {
            "name": "npu-s",
            "on_chip_bytes": 4096,
            "off_chip_bytes": 262144,
            "bandwidth_bytes_per_s": 2.5e8,
            "peak_ops_per_s": 2.0e9,
            "mac_bits": 8,
            "supported_bits": [2, 4, 8],
        },
        "cloud": {
            "name": "server",
            "on_chip_bytes": 1 << 25,
            "off_chip_bytes": 1 << 34,
            "bandwidth_bytes_per_s": 1.3e10,
            "peak_ops_per_s": 9.6e13,
            "mac_bits": 16,
            "supported_bits": [2, 4, 8, 16],
        },
        "network": {"uplink_bps": 3.0e6, "fixed_rtt_s": 0.0},
    }


TOY_MEMORY_BYTES = 2500


def table1_device_config() -> dict:
    """Published accelerator profiles: small edge NPU vs datacenter TPU."""
    return {
        "edge": {
            "name": "eyeriss",
            "on_chip_bytes": 192 * 1024,
            "off_chip_bytes": 4 << 30,
            "bandwidth_bytes_per_s": 1.0e9,
            "peak_ops_per_s": 3.4e10,
            "mac_bits": 8,
            "supported_bits": [2, 4, 8],
        },
        "cloud": {
            "name": "tpu",
            "on_chip_bytes": 28 << 20,
            "off_chip_bytes": 16 << 30,
            "bandwidth_bytes_per_s": 1.3e10,
            "peak_ops_per_s": 9.6e13,
            "mac_bits": 16,
            "supported_bits": [2, 4, 8, 16],
        },
        "network": {"uplink_bps": 3.0e6, "fixed_rtt_s": 0.0},
    }


# -- ResNet-50-shaped analysis graph ------------------------------------------------


def resnet50_shapes():
    """Shapes-only residual classifier graph (no weight blobs).

    Returns (graph, names) where names maps human labels like
    "layer4.0.conv3" to node ids. Weighted layers appear in the canonical
    execution order (block order conv1, conv2, downsample, conv3), so the
    weighted index of layer4.0.conv3 is 46 and fc is 53.
    """
    nodes = []
    names = {}
    nid = 0

    def emit(name, **kw):
        nonlocal nid
        node = LayerNode(nid, **kw)
        nodes.append(node)
        names[name] = nid
        nid += 1
        return node.id

    emit("input", op_kind="input", out_shape=(3, 224, 224))
    prev = emit(
        "conv1",
        op_kind="conv",
        attrs={"stride": 4, "pad": 2},
        weight_shape=(64, 3, 7, 7),
        out_shape=(64, 56, 56),
        inputs=[0],
    )

    stages = [  # (label, blocks, width, out channels, spatial, first stride)
        ("layer1", 3, 64, 256, 56, 1),
        ("layer2", 4, 128, 512, 28, 2),
        ("layer3", 6, 256, 1024, 14, 2),
        ("layer4", 3, 512, 2048, 7, 2),
    ]
    in_c, in_sp = 64, 56
    for label, blocks, width, out_c, sp, first_stride in stages:
        for b in range(blocks):
            stride = first_stride if b == 0 else 1
            block_in, block_in_c, block_in_sp = prev, in_c, in_sp
            c1 = emit(
                "%s.%d.conv1" % (label, b),
                op_kind="pointwise_conv",
                weight_shape=(width, block_in_c, 1, 1),
                out_shape=(width, block_in_sp, block_in_sp),
                inputs=[block_in],
            )
            c2 = emit(
                "%s.%d.conv2" % (label, b),
                op_kind="conv",
                attrs={"stride": stride, "pad": 1},
                weight_shape=(width, width, 3, 3),
                out_shape=(width, sp, sp),
                inputs=[c1],
            )
            if b == 0:
                skip = emit(
                    "%s.%d.downsample" % (label, b),
                    op_kind="pointwise_conv",
                    attrs={"stride": stride},
                    weight_shape=(out_c, block_in_c, 1, 1),
                    out_shape=(out_c, sp, sp),
                    inputs=[block_in],
                )
            else:
                skip = block_in
            c3 = emit(
                "%s.%d.conv3" % (label, b),
                op_kind="pointwise_conv",
                weight_shape=(out_c, width, 1, 1),
                out_shape=(out_c, sp, sp),
                inputs=[c2],
            )
            prev = emit(
                "%s.%d.add" % (label, b),
                op_kind="add",
                out_shape=(out_c, sp, sp),
                inputs=[c3, skip],
            )
            in_c, in_sp = out_c, sp

    pool = emit("pool", op_kind="global_pool", out_shape=(2048,), inputs=[prev])
    emit("fc", op_kind="fc", weight_shape=(1000, 2048), out_shape=(1000,), inputs=[pool])
    return LayerGraph(nodes, input_bits=8), names


def weighted_positions(g: LayerGraph, order=None) -> dict:
    """Map node id -> index among weighted layers in execution order."""
    order = order or topological_order(g)
    out = {}
    k = 0
    for nid in order:
        if g.nodes[nid].op_kind in WEIGHTED_OPS:
            out[nid] = k
            k += 1
    return out


def last_weighted_in_prefix(g: LayerGraph, order, n: int):
    """Weighted index of the deepest weighted layer within the n-prefix."""
    wpos = weighted_positions(g, order)
    compute = [i for i in order if i != g.input_id]
    best = None
    for nid in compute[:n]:
        if nid in wpos:
            best = wpos[nid]
    return best


# -- random graphs for oracle corpora -------------------------------------------------


def random_dag(rng: np.random.Generator, max_nodes: int = 10) -> LayerGraph:
    """Small random valid graph with loaded weights (runnable end to end)."""
    H = int(rng.choice([4, 6, 8]))
    C0 = int(rng.integers(1, 4))
    nodes = [LayerNode(0, "input", out_shape=(C0, H, H))]
    pool = [(0, (C0, H, H))]
    target = int(rng.integers(3, max_nodes + 1))

    def w(shape, fan):
        return (rng.standard_normal(shape) / np.sqrt(max(1, fan))).astype(np.float32)

    nid = 1
    while nid < target:
        kinds = ["conv", "pointwise_conv", "depthwise_conv", "relu", "batchnorm", "add", "concat", "fc"]
        probs = [0.22, 0.14, 0.12, 0.14, 0.08, 0.14, 0.10, 0.06]
        op = rng.choice(kinds, p=probs)
        src_id, src_shape = pool[int(rng.integers(0, len(pool)))]
        rank3 = [t for t in pool if len(t[1]) == 3]
        node = None
        if op in ("conv", "pointwise_conv", "depthwise_conv", "batchnorm") and not rank3:
            op = "relu"
        if op == "conv":
            src_id, src_shape = rank3[int(rng.integers(0, len(rank3)))]
            cout = int(rng.integers(1, 7))
            stride = 2 if (src_shape[1] >= 4 and rng.random() < 0.25) else 1
            sp = (src_shape[1] + 2 - 3) // stride + 1
            node = LayerNode(nid, "conv", attrs={"stride": stride, "pad": 1},
                             weight_shape=(cout, src_shape[0], 3, 3), out_shape=(cout, sp, sp),
                             inputs=[src_id], weights=w((cout, src_shape[0], 3, 3), 9 * src_shape[0]))
        elif op == "pointwise_conv":
            src_id, src_shape = rank3[int(rng.integers(0, len(rank3)))]
            cout = int(rng.integers(1, 7))
            node = LayerNode(nid, "pointwise_conv", weight_shape=(cout, src_shape[0], 1, 1),
                             out_shape=(cout,) + src_shape[1:], inputs=[src_id],
                             weights=w((cout, src_shape[0], 1, 1), src_shape[0]))
        elif op == "depthwise_conv":
            src_id, src_shape = rank3[int(rng.integers(0, len(rank3)))]
            node = LayerNode(nid, "depthwise_conv", attrs={"stride": 1, "pad": 1},
                             weight_shape=(src_shape[0], 3, 3), out_shape=src_shape,
                             inputs=[src_id], weights=w((src_shape[0], 3, 3), 9))
        elif op == "batchnorm":
            src_id, src_shape = rank3[int(rng.integers(0, len(rank3)))]
            c = src_shape[0]
            params = np.stack(
                [
                    rng.uniform(0.5, 1.5, c),
                    rng.uniform(-0.2, 0.2, c),
                    rng.uniform(-0.2, 0.2, c),
                    rng.uniform(0.5, 1.5, c),
                ]
            ).astype(np.float32)
            node = LayerNode(nid, "batchnorm", weight_shape=(4, c), out_shape=src_shape,
                             inputs=[src_id], weights=params)
        elif op == "relu":
            node = LayerNode(nid, "relu", out_shape=src_shape, inputs=[src_id])
        elif op == "add":
            mates = [t for t in pool if t[1] == src_shape and t[0] != src_id]
            if not mates:
                node = LayerNode(nid, "relu", out_shape=src_shape, inputs=[src_id])
            else:
                other = mates[int(rng.integers(0, len(mates)))]
                node = LayerNode(nid, "add", out_shape=src_shape, inputs=[src_id, other[0]])
        elif op == "concat":
            mates = [t for t in pool if len(t[1]) == len(src_shape) and t[1][1:] == src_shape[1:]]
            if len(mates) < 2 or len(src_shape) < 2:
                node = LayerNode(nid, "relu", out_shape=src_shape, inputs=[src_id])
            else:
                other = mates[int(rng.integers(0, len(mates)))]
                out_shape = (src_shape[0] + other[1][0],) + src_shape[1:]
                node = LayerNode(nid, "concat", attrs={"axis": 0}, out_shape=out_shape,
                                 inputs=[src_id, other[0]])
        elif op == "fc":
            k = int(rng.integers(2, 8))
            nin = 1
            for d in src_shape:
                nin *= d
            node = LayerNode(nid, "fc", weight_shape=(k, nin), out_shape=(k,),
                             inputs=[src_id], weights=w((k, nin), nin))
        nodes.append(node)
        pool.append((nid, tuple(node.out_shape)))
        nid += 1
    return LayerGraph(nodes, input_bits=8)


def random_grid_input(rng: np.random.Generator, shape) -> np.ndarray:
    """Random tensor on the k/256 grid (exact under 8-bit input quantization)."""
    return (rng.integers(0, 256, size=shape) / 256.0).astype(np.float32)
