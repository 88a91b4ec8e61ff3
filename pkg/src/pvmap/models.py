"""Network assembly: the patch classifier and the encoder-decoder segmenter.

Both take a 41x41 RGB patch. The classifier returns one probability that the
patch contains a panel; the segmenter returns a 41x41 per-pixel probability
map. Layer stacks are described by a NetworkSpec (kind + width per block)
and instantiated into a runnable Network with seeded initialization.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError, ValidationError
from .nn.layers import (
    Conv1x1,
    Conv3x3,
    Dense,
    Flatten,
    MaxPool3x3s2,
    MaxUnpool,
    Network,
    ReLU,
)
from .nn.ops import softmax2
from .nn.weights_io import read_weights, write_weights

SCALAR_OUTPUT = "scalar-probability"
MAP_OUTPUT = "dense-probability-map"

PATCH_SIZE = 41


@dataclass(frozen=True)
class LayerSpec:
    kind: str  # VGG | FC | D-VGG | SOFTMAX2
    width: int


@dataclass(frozen=True)
class NetworkSpec:
    layers: tuple[LayerSpec, ...]
    output_kind: str
    input_size: tuple[int, int, int] = (PATCH_SIZE, PATCH_SIZE, 3)


def build_classifier(
    conv_widths: tuple[int, ...] = (64, 128, 128),
    fc_widths: tuple[int, ...] = (128, 32),
) -> NetworkSpec:
    """Patch classifier: VGG blocks, two FC blocks, a 2-way softmax head."""
    layers = [LayerSpec("VGG", w) for w in conv_widths]
    layers += [LayerSpec("FC", w) for w in fc_widths]
    layers.append(LayerSpec("SOFTMAX2", 2))
    return NetworkSpec(tuple(layers), SCALAR_OUTPUT)


def build_segmenter(conv_widths: tuple[int, ...] = (64, 128, 128)) -> NetworkSpec:
    """Encoder-decoder segmenter sharing the classifier's convolutional stack.

    Decoder blocks mirror the encoder in reverse: each one unpools with the
    indices recorded by its paired encoder pool, then applies two 3x3
    convolutions. A per-pixel 2-way softmax head closes the stack.
    """
    enc = [LayerSpec("VGG", w) for w in conv_widths]
    dec = [LayerSpec("D-VGG", w) for w in conv_widths[::-1]]
    return NetworkSpec(tuple(enc + dec + [LayerSpec("SOFTMAX2", 2)]), MAP_OUTPUT)


def build_network(spec: NetworkSpec, seed: int = 0, dtype=np.float32) -> Network:
    """Instantiate a spec with fan-in-scaled uniform weights and zero biases."""
    _validate_spec(spec)
    rng = np.random.default_rng(seed)
    h, w, channels = spec.input_size
    layers: list = []
    pool_stack: list[tuple[MaxPool3x3s2, int, int]] = []  # (layer, pre-pool size, channels)
    size = h
    flat = False
    n_vgg = n_fc = n_dvgg = 0
    for ls in spec.layers:
        if ls.kind == "VGG":
            name = f"vgg{n_vgg}"
            n_vgg += 1
            layers += [
                Conv3x3(f"{name}a", channels, ls.width, rng, dtype),
                ReLU(),
                Conv3x3(f"{name}b", ls.width, ls.width, rng, dtype),
                ReLU(),
            ]
            pool = MaxPool3x3s2()
            layers.append(pool)
            channels = ls.width
            pool_stack.append((pool, size, channels))
            size = (size - 3) // 2 + 1
        elif ls.kind == "D-VGG":
            name = f"dvgg{n_dvgg}"
            n_dvgg += 1
            pool, size, rec_channels = pool_stack.pop()
            if channels % rec_channels:
                raise ValidationError(
                    f"decoder stage {n_dvgg - 1}: {channels} channels cannot reuse "
                    f"pool indices recorded over {rec_channels} channels"
                )
            layers += [
                MaxUnpool(pool),
                Conv3x3(f"{name}a", channels, ls.width, rng, dtype),
                ReLU(),
                Conv3x3(f"{name}b", ls.width, ls.width, rng, dtype),
                ReLU(),
            ]
            channels = ls.width
        elif ls.kind == "FC":
            if not flat:
                layers.append(Flatten())
                channels = size * size * channels
                flat = True
            layers += [Dense(f"fc{n_fc}", channels, ls.width, rng, dtype), ReLU()]
            n_fc += 1
            channels = ls.width
        elif ls.kind == "SOFTMAX2":
            if spec.output_kind == SCALAR_OUTPUT:
                if not flat:
                    layers.append(Flatten())
                    channels = size * size * channels
                    flat = True
                layers.append(Dense("head", channels, 2, rng, dtype))
            else:
                layers.append(Conv1x1("head", channels, 2, rng, dtype))
        else:
            raise ValidationError(f"unknown layer kind {ls.kind!r}")
    net = Network(layers, dtype=dtype)
    net.spec = spec
    return net


def _validate_spec(spec: NetworkSpec) -> None:
    kinds = [ls.kind for ls in spec.layers]
    if kinds.count("SOFTMAX2") != 1 or kinds[-1] != "SOFTMAX2":
        raise ValidationError("spec must end with exactly one SOFTMAX2 layer")
    if "D-VGG" in kinds:
        first_d = kinds.index("D-VGG")
        if "VGG" in kinds[first_d:]:
            raise ValidationError("D-VGG layers must come after all VGG layers")
        if kinds.count("D-VGG") != kinds.count("VGG"):
            raise ValidationError("each D-VGG must pair with one VGG layer")
    if spec.output_kind not in (SCALAR_OUTPUT, MAP_OUTPUT):
        raise ValidationError(f"unknown output kind {spec.output_kind!r}")
    if spec.output_kind == MAP_OUTPUT and "FC" in kinds:
        raise ValidationError("a dense-map network cannot contain FC layers")


def forward(net: Network, patch: np.ndarray) -> np.ndarray | float:
    """Panel probability for one 41x41x3 patch in [0, 1].

    Scalar for a classifier net; a (41, 41) map for a segmenter net.
    """
    out = forward_batch(net, patch[None])
    return float(out[0]) if net.spec.output_kind == SCALAR_OUTPUT else out[0]


def forward_batch(net: Network, patches: np.ndarray) -> np.ndarray:
    """Panel probabilities for an (N, 41, 41, 3) batch of [0, 1] patches."""
    expect = net.spec.input_size
    if patches.ndim != 4 or patches.shape[1:] != expect:
        raise ShapeError(f"expected (N, {expect[0]}, {expect[1]}, {expect[2]}) input, got {patches.shape}")
    logits = net.forward(patches)
    return softmax2(logits)[..., 1]


def parameter_count(net: Network) -> int:
    return sum(p.value.size for p in net.parameters())


def spec_to_text(spec: NetworkSpec) -> str:
    return "".join(f"{ls.kind} {ls.width}\n" for ls in spec.layers)


def spec_from_text(text: str) -> NetworkSpec:
    layers = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2 or not parts[1].isdigit():
            raise ValidationError(f"bad network manifest line: {line!r}")
        layers.append(LayerSpec(parts[0], int(parts[1])))
    if not layers:
        raise ValidationError("empty network manifest")
    kind = MAP_OUTPUT if any(ls.kind == "D-VGG" for ls in layers) else SCALAR_OUTPUT
    return NetworkSpec(tuple(layers), kind)


def save_model(net: Network, weights_path, manifest_path) -> None:
    write_weights(weights_path, [(p.name, p.value) for p in net.parameters()])
    with open(manifest_path, "w") as f:
        f.write(spec_to_text(net.spec))


def load_model(weights_path, manifest_path, dtype=np.float32) -> Network:
    with open(manifest_path) as f:
        spec = spec_from_text(f.read())
    net = build_network(spec, seed=0, dtype=dtype)
    stored = read_weights(weights_path)
    for p in net.parameters():
        if p.name not in stored:
            raise ValidationError(f"{weights_path}: missing parameter {p.name!r}")
        arr = stored[p.name]
        if arr.shape != p.value.shape:
            raise ValidationError(
                f"{weights_path}: {p.name} has shape {arr.shape}, expected {p.value.shape}"
            )
        p.value[...] = arr.astype(dtype)
    return net
