"""Executable description of the two-branch encoder/decoder architecture.

There is no training or forward pass here: the graph exists so its shape
arithmetic and parameter counts can be checked for self-consistency.
"""

from dataclasses import dataclass, field

ENCODER_CHANNELS = [64, 128, 256, 512, 512]
DECODER_CHANNELS = [512, 512, 256, 128, 64]
DENSE_LAYERS = [8, 8, 8, 4, 4]
DEFAULT_GROWTH = 32
CONVS_PER_ENCODER_BLOCK = 3
N_POOL_STAGES = 5
DIVISOR = 2 ** N_POOL_STAGES


@dataclass
class TensorShape:
    channels: int
    height: int
    width: int

    def __post_init__(self):
        if min(self.channels, self.height, self.width) <= 0:
            raise ValueError("tensor dims must be positive")


@dataclass
class LayerSpec:
    name: str
    kind: str           # conv | pool | unpool | dense | softmax
    kernel: int = 0
    out_channels: int = 0
    dense_layers: int = 0
    growth: int = 0


@dataclass
class NetGraph:
    encoder: list = field(default_factory=list)
    inst_branch: list = field(default_factory=list)
    top_branch: list = field(default_factory=list)

    @property
    def heads(self):
        return 2


def _dense_out_channels(in_ch, n_layers, growth):
    return in_ch + n_layers * growth


def build_tanet(growth=DEFAULT_GROWTH, inst_head_kernel=1):
    """Encoder of five 3-conv downsampling blocks; two symmetric decoders.

    Decoder blocks are unpool + densely-connected stack + 3x3 transition
    conv. The instance head is a 2-channel conv followed by softmax
    (inst_head_kernel=2 keeps a literal 2x2 kernel variant); the topology
    head is a single-channel 1x1 conv.
    """
    if inst_head_kernel not in (1, 2):
        raise ValueError("inst_head_kernel must be 1 or 2")
    g = NetGraph()
    for b, ch in enumerate(ENCODER_CHANNELS, start=1):
        for k in range(1, CONVS_PER_ENCODER_BLOCK + 1):
            g.encoder.append(LayerSpec(f"enc{b}_conv{k}", "conv", 3, ch))
        g.encoder.append(LayerSpec(f"enc{b}_pool", "pool"))

    def decoder(prefix):
        layers = []
        for b, (ch, nd) in enumerate(zip(DECODER_CHANNELS, DENSE_LAYERS), start=1):
            layers.append(LayerSpec(f"{prefix}{b}_unpool", "unpool"))
            layers.append(LayerSpec(f"{prefix}{b}_dense", "dense",
                                    dense_layers=nd, growth=growth))
            layers.append(LayerSpec(f"{prefix}{b}_conv", "conv", 3, ch))
        return layers

    g.inst_branch = decoder("inst")
    g.inst_branch.append(LayerSpec("inst_head", "conv", inst_head_kernel, 2))
    g.inst_branch.append(LayerSpec("inst_softmax", "softmax"))
    g.top_branch = decoder("top")
    g.top_branch.append(LayerSpec("top_head", "conv", 1, 1))
    return g


def _run(layers, shape):
    """Propagate a TensorShape through a layer list, yielding a table."""
    table = []
    for layer in layers:
        before = shape
        if layer.kind == "conv":
            shape = TensorShape(layer.out_channels, shape.height, shape.width)
        elif layer.kind == "pool":
            shape = TensorShape(shape.channels, shape.height // 2, shape.width // 2)
        elif layer.kind == "unpool":
            shape = TensorShape(shape.channels, shape.height * 2, shape.width * 2)
        elif layer.kind == "dense":
            shape = TensorShape(
                _dense_out_channels(shape.channels, layer.dense_layers, layer.growth),
                shape.height, shape.width)
        elif layer.kind == "softmax":
            pass
        else:
            raise ValueError(f"unknown layer kind {layer.kind!r}")
        table.append((layer, before, shape))
    return shape, table


def propagate_shapes(graph, input_shape):
    """(inst_shape, top_shape) for an input; spatial dims must divide by 32."""
    if input_shape.height % DIVISOR or input_shape.width % DIVISOR:
        raise ValueError(
            f"input spatial dims must be divisible by {DIVISOR}, "
            f"got {input_shape.height}x{input_shape.width}")
    mid, _ = _run(graph.encoder, input_shape)
    inst, _ = _run(graph.inst_branch, mid)
    top, _ = _run(graph.top_branch, mid)
    return inst, top


def _conv_params(kernel, in_ch, out_ch):
    return kernel * kernel * in_ch * out_ch + out_ch


def _layer_params(layer, in_shape):
    if layer.kind == "conv":
        return _conv_params(layer.kernel, in_shape.channels, layer.out_channels)
    if layer.kind == "dense":
        total = 0
        ch = in_shape.channels
        for _ in range(layer.dense_layers):
            total += _conv_params(3, ch, layer.growth)
            ch += layer.growth
        return total
    return 0


def layer_table(graph, input_shape):
    """Rows of (name, kind, in_shape, out_shape, params) for every layer."""
    mid, enc_table = _run(graph.encoder, input_shape)
    _, inst_table = _run(graph.inst_branch, mid)
    _, top_table = _run(graph.top_branch, mid)
    rows = []
    for layer, before, after in enc_table + inst_table + top_table:
        rows.append({"name": layer.name, "kind": layer.kind,
                     "in": (before.channels, before.height, before.width),
                     "out": (after.channels, after.height, after.width),
                     "params": _layer_params(layer, before)})
    return rows


def param_count(graph, input_shape=None):
    """Total learnable parameters; independent of spatial input size."""
    if input_shape is None:
        input_shape = TensorShape(3, DIVISOR, DIVISOR)
    return sum(row["params"] for row in layer_table(graph, input_shape))
