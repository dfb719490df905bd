"""Wire layer: sub-byte activation packing, message framing, split sessions.

Message layout (little-endian): magic 0x4153 u16, version u8 = 1, bits u8,
tensor_id u32, scale f32, zero_point f32, ndim u8, dims i32 x ndim,
payload_len u32, payload. The fixed fields through ndim span 17 bytes; ndim=0
denotes an empty tensor. Values pack little-end-first within each byte, with
the channel axis varying fastest; the final partial byte is zero padded.
"""

from __future__ import annotations

import socket
import struct
import threading
from dataclasses import dataclass

import numpy as np

from .cost import message_payload_bytes
from .engine import run_fake_quantized_detailed, run_inference
from .graph import GraphError, LayerGraph, boundary_cut, topological_order
from .quantize import QuantParams, choose_clip_range, dequantize, quantize_tensor
from .util import prod

MAGIC = 0x4153
VERSION = 1
PACKABLE_BITS = (1, 2, 4, 8)
_HEAD = struct.Struct("<HBBIffB")


class WireError(ValueError):
    pass


class TruncatedError(WireError):
    pass


class BadMagicError(WireError):
    pass


class BadVersionError(WireError):
    pass


class ChannelClosedError(WireError):
    pass


# -- packing -------------------------------------------------------------------


def _channel_last_flat(q: np.ndarray) -> np.ndarray:
    if q.ndim >= 2:
        return np.moveaxis(q, 0, -1).ravel()
    return q.ravel()


def _channel_first_unflat(flat: np.ndarray, shape) -> np.ndarray:
    if len(shape) >= 2:
        moved = tuple(shape[1:]) + (shape[0],)
        return np.moveaxis(flat.reshape(moved), -1, 0)
    return flat.reshape(shape)


def pack_activations(q: np.ndarray, bits: int) -> bytes:
    if bits not in PACKABLE_BITS:
        raise WireError("cannot pack %d-bit values (supported: 1, 2, 4, 8)" % bits)
    q = np.asarray(q)
    if q.size and (q.min() < 0 or q.max() >= (1 << bits)):
        raise WireError("value out of range for %d-bit packing" % bits)
    flat = _channel_last_flat(q).astype(np.uint8)
    if flat.size == 0:
        return b""
    per = 8 // bits
    padded = np.zeros((-(-flat.size // per)) * per, dtype=np.uint8)
    padded[: flat.size] = flat
    grouped = padded.reshape(-1, per)
    out = np.zeros(len(grouped), dtype=np.uint8)
    for j in range(per):
        out |= grouped[:, j] << (bits * j)
    return out.tobytes()


def unpack_activations(buf: bytes, bits: int, shape) -> np.ndarray:
    if bits not in PACKABLE_BITS:
        raise WireError("cannot unpack %d-bit values" % bits)
    elements = 0 if len(shape) == 0 else prod(shape)
    expect = message_payload_bytes(elements, bits)
    if len(buf) != expect:
        raise WireError("payload length %d does not match %d elements at %d bits" % (len(buf), elements, bits))
    if elements == 0:
        return np.zeros(shape, dtype=np.int64)
    raw = np.frombuffer(buf, dtype=np.uint8)
    per = 8 // bits
    mask = (1 << bits) - 1
    cols = [(raw >> (bits * j)) & mask for j in range(per)]
    flat = np.stack(cols, axis=1).ravel()[:elements].astype(np.int64)
    return _channel_first_unflat(flat, tuple(shape))


# -- messages ------------------------------------------------------------------


@dataclass(frozen=True)
class ActivationMessage:
    tensor_id: int
    bits: int
    scale: float
    zero_point: float
    shape: tuple
    payload: bytes

    def elements(self) -> int:
        return 0 if len(self.shape) == 0 else prod(self.shape)


def encode_message(m: ActivationMessage) -> bytes:
    if m.bits not in PACKABLE_BITS:
        raise WireError("bits %d not encodable" % m.bits)
    if len(m.shape) > 255:
        raise WireError("too many dims")
    if len(m.payload) != message_payload_bytes(m.elements(), m.bits):
        raise WireError("payload length does not match shape/bits")
    head = _HEAD.pack(
        MAGIC,
        VERSION,
        m.bits,
        m.tensor_id,
        np.float32(m.scale),
        np.float32(m.zero_point),
        len(m.shape),
    )
    dims = struct.pack("<%di" % len(m.shape), *m.shape)
    return head + dims + struct.pack("<I", len(m.payload)) + m.payload


def decode_message(buf: bytes) -> ActivationMessage:
    if len(buf) < 2:
        raise TruncatedError("message shorter than magic")
    (magic,) = struct.unpack_from("<H", buf, 0)
    if magic != MAGIC:
        raise BadMagicError("bad magic 0x%04x" % magic)
    if len(buf) < 3:
        raise TruncatedError("message cut before version")
    version = buf[2]
    if version != VERSION:
        raise BadVersionError("unsupported version %d" % version)
    if len(buf) < _HEAD.size:
        raise TruncatedError("message cut inside fixed header")
    _, _, bits, tensor_id, scale, zero_point, ndim = _HEAD.unpack_from(buf, 0)
    off = _HEAD.size
    if len(buf) < off + 4 * ndim:
        raise TruncatedError("message cut inside dims")
    shape = struct.unpack_from("<%di" % ndim, buf, off)
    off += 4 * ndim
    if len(buf) < off + 4:
        raise TruncatedError("message cut before payload length")
    (payload_len,) = struct.unpack_from("<I", buf, off)
    off += 4
    if len(buf) < off + payload_len:
        raise TruncatedError("message cut inside payload")
    if len(buf) > off + payload_len:
        raise WireError("trailing bytes after payload")
    if bits not in PACKABLE_BITS:
        raise WireError("bad bits field %d" % bits)
    payload = bytes(buf[off : off + payload_len])
    m = ActivationMessage(
        tensor_id=tensor_id,
        bits=bits,
        scale=float(scale),
        zero_point=float(zero_point),
        shape=tuple(shape),
        payload=payload,
    )
    if payload_len != message_payload_bytes(m.elements(), bits):
        raise WireError("payload length inconsistent with shape")
    return m


# -- byte channels ---------------------------------------------------------------


class Channel:
    """Length-prefixed frames over a stream socket."""

    def __init__(self, sock: socket.socket):
        self._sock = sock

    def send_frame(self, data: bytes):
        try:
            self._sock.sendall(struct.pack("<I", len(data)) + data)
        except OSError as e:
            raise ChannelClosedError("send failed: %s" % e)

    def _recv_exact(self, n: int) -> bytes:
        chunks = []
        got = 0
        while got < n:
            try:
                chunk = self._sock.recv(n - got)
            except OSError as e:
                raise ChannelClosedError("recv failed: %s" % e)
            if not chunk:
                raise ChannelClosedError("channel closed mid-frame")
            chunks.append(chunk)
            got += len(chunk)
        return b"".join(chunks)

    def recv_frame(self) -> bytes:
        (size,) = struct.unpack("<I", self._recv_exact(4))
        return self._recv_exact(size)

    def close(self):
        try:
            self._sock.close()
        except OSError:
            pass


def make_channel_pair():
    a, b = socket.socketpair()
    return Channel(a), Channel(b)


# -- split session -----------------------------------------------------------------


def _quantize_input(g: LayerGraph, x) -> tuple:
    bits = g.input_bits
    if bits not in PACKABLE_BITS:
        raise WireError("input_bits %d not transportable" % bits)
    p = choose_clip_range(np.asarray(x, dtype=np.float32), bits, symmetric=False)
    q, _ = quantize_tensor(x, p)
    return q, p


def _crossing_payloads(g: LayerGraph, x, solution, order):
    """One (id, message) per boundary tensor, ascending id order."""
    n = solution.n
    cut = boundary_cut(g, order, n)
    if n == 0:
        records = {}
    else:
        _, records = run_fake_quantized_detailed(
            g, x, n, solution.assignment, order=order, prefix_only=True
        )
    out = []
    for nid in cut.crossing_tensors:
        node = g.nodes[nid]
        if nid == g.input_id:
            q, p = _quantize_input(g, x)
        else:
            rec = records[nid]
            if rec.q is None:
                raise WireError("tensor %d uses a non-transportable bit-width" % nid)
            q, p = rec.q, rec.params
        msg = ActivationMessage(
            tensor_id=nid,
            bits=p.bits,
            scale=p.scale,
            zero_point=p.zero_point,
            shape=tuple(node.out_shape),
            payload=pack_activations(q, p.bits),
        )
        out.append((nid, msg))
    return out


def edge_role(g: LayerGraph, x, solution, chan: Channel, order=None):
    order = order or topological_order(g)
    for _, msg in _crossing_payloads(g, x, solution, order):
        chan.send_frame(encode_message(msg))


def cloud_role(g: LayerGraph, solution, chan: Channel, order=None, want_transcript=False):
    """Receive boundary tensors, run the suffix in float, return outputs."""
    order = order or topological_order(g)
    n = solution.n
    cut = boundary_cut(g, order, n)
    vals = {}
    transcript = []
    for expect_id in cut.crossing_tensors:
        msg = decode_message(chan.recv_frame())
        if msg.tensor_id != expect_id:
            raise WireError("expected tensor %d, got %d" % (expect_id, msg.tensor_id))
        node = g.nodes[msg.tensor_id]
        if tuple(msg.shape) != tuple(node.out_shape):
            raise WireError("tensor %d shape mismatch" % msg.tensor_id)
        q = unpack_activations(msg.payload, msg.bits, msg.shape)
        p = QuantParams(msg.bits, msg.scale, msg.zero_point, symmetric=False)
        vals[msg.tensor_id] = dequantize(q, p)
        if want_transcript:
            transcript.append(
                {
                    "tensor_id": msg.tensor_id,
                    "bits": msg.bits,
                    "elements": msg.elements(),
                    "payload_bytes": len(msg.payload),
                    "expected_payload_bytes": message_payload_bytes(msg.elements(), msg.bits),
                }
            )

    compute = [i for i in order if i != g.input_id]
    suffix = compute[n:]
    from .engine import _apply_node, _need_weights  # late import to keep module load light

    for nid in suffix:
        node = g.nodes[nid]
        _need_weights(node)
        vals[nid] = _apply_node(node, [vals[i] for i in node.inputs])
    outputs = [vals[i] for i in g.output_ids]
    return (outputs, transcript) if want_transcript else outputs


def run_split_session(g: LayerGraph, x, solution, order=None, channels=None, want_transcript=False):
    """Drive edge and cloud roles over a byte channel; returns cloud outputs.

    Output is bit-identical to the monolithic fake-quantized run for any input
    whose raw tensor is exactly representable at input_bits (needed only when
    the input itself crosses the boundary).
    """
    order = order or topological_order(g)
    edge_chan, cloud_chan = channels or make_channel_pair()
    errors = []

    def run_edge():
        try:
            edge_role(g, x, solution, edge_chan, order=order)
        except Exception as e:  # re-raised in the caller
            errors.append(e)
        finally:
            edge_chan.close()

    t = threading.Thread(target=run_edge, daemon=True)
    t.start()
    try:
        result = cloud_role(g, solution, cloud_chan, order=order, want_transcript=want_transcript)
    finally:
        t.join(timeout=30)
        cloud_chan.close()
    if errors:
        raise errors[0]
    return result


def run_tcp_session(g: LayerGraph, x, solution, host="127.0.0.1", port=0, order=None, want_transcript=False):
    """Same as run_split_session but over a real TCP loopback connection."""
    order = order or topological_order(g)
    server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    server.bind((host, port))
    server.listen(1)
    actual_port = server.getsockname()[1]
    errors = []

    def run_edge():
        try:
            sock = socket.create_connection((host, actual_port), timeout=10)
            chan = Channel(sock)
            try:
                edge_role(g, x, solution, chan, order=order)
            finally:
                chan.close()
        except Exception as e:
            errors.append(e)

    t = threading.Thread(target=run_edge, daemon=True)
    t.start()
    conn, _ = server.accept()
    chan = Channel(conn)
    try:
        result = cloud_role(g, solution, chan, order=order, want_transcript=want_transcript)
    finally:
        t.join(timeout=30)
        chan.close()
        server.close()
    if errors:
        raise errors[0]
    return result


def reference_outputs(g: LayerGraph, x, solution, order=None):
    """What a session must reproduce bitwise: the monolithic reference."""
    order = order or topological_order(g)
    if solution.n == 0:
        return run_inference(g, x, order)
    return run_fake_quantized_detailed(g, x, solution.n, solution.assignment, order=order)[0]
