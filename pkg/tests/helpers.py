"""Shared builders for tests: device profiles and bit assignments."""

import numpy as np

from bitsplit.cost import DeviceProfile, NetworkProfile
from bitsplit.search import BitAssignment
from bitsplit.synth import table1_device_config, toy_device_config


def device_from(cfg: dict) -> DeviceProfile:
    return DeviceProfile(
        name=cfg["name"],
        on_chip_bytes=int(cfg["on_chip_bytes"]),
        off_chip_bytes=int(cfg["off_chip_bytes"]),
        bandwidth_bytes_per_s=float(cfg["bandwidth_bytes_per_s"]),
        peak_ops_per_s=float(cfg["peak_ops_per_s"]),
        mac_bits=int(cfg["mac_bits"]),
        supported_bits=tuple(int(b) for b in cfg["supported_bits"]),
    )


def profiles_from(cfg: dict):
    net = NetworkProfile(
        uplink_bits_per_s=float(cfg["network"]["uplink_bps"]),
        fixed_rtt_s=float(cfg["network"].get("fixed_rtt_s", 0.0)),
    )
    return device_from(cfg["edge"]), device_from(cfg["cloud"]), net


def toy_profiles():
    return profiles_from(toy_device_config())


def table1_profiles():
    return profiles_from(table1_device_config())


def uniform_assignment(g, order, n, bw, ba) -> BitAssignment:
    compute = [i for i in order if i != g.input_id]
    return BitAssignment(
        weight_bits={i: bw for i in compute[:n]},
        act_bits={i: ba for i in compute[:n]},
    )


def random_assignment(g, order, n, rng, choices=(2, 4, 8)) -> BitAssignment:
    compute = [i for i in order if i != g.input_id]
    return BitAssignment(
        weight_bits={i: int(rng.choice(choices)) for i in compute[:n]},
        act_bits={i: int(rng.choice(choices)) for i in compute[:n]},
    )


def grid_input_covering(rng: np.random.Generator, shape) -> np.ndarray:
    """Input on the k/256 grid that spans the full code range, so 8-bit input
    quantization reconstructs it exactly (needed for bitwise session checks)."""
    x = rng.integers(0, 256, size=shape)
    flat = x.reshape(-1)
    flat[0] = 0
    flat[-1] = 255
    return (x / 256.0).astype(np.float32)
