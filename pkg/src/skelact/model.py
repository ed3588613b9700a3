"""Model configuration and parameter construction.

ModelConfig pins every structural choice (frame count, joint tree, channel
widths, enabled stages, label vocabulary) so a checkpoint can rebuild the
exact network.  ModelParams.build draws all weights from one seeded
generator in a fixed order, which makes initialization reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .autograd import Tensor
from .encoder import (
    AttentionHead, EmbeddingLayer, EncoderParams, EnhanceFlags, ScaleHead,
    TemporalEmbedding,
)
from .errors import UsageError
from .skeleton import Topology


@dataclass(frozen=True)
class ModelConfig:
    joints: int
    classes: int
    bones: tuple[tuple[int, int], ...]
    root: int
    labels: tuple[int, ...]
    frames: int = 64
    channels: tuple[int, int, int] = (32, 64, 128)
    fc_hidden: int = 256
    scale_hidden: int = 64
    dt: float = 1.0
    flags: EnhanceFlags = field(default_factory=EnhanceFlags)

    def __post_init__(self):
        if self.classes != len(self.labels):
            raise UsageError(f"{self.classes} classes but {len(self.labels)} labels")
        if len(self.bones) != self.joints - 1:
            raise UsageError(f"{len(self.bones)} bones cannot span {self.joints} joints")
        if self.frames < 2:
            raise UsageError("frames must be >= 2")

    def topology(self) -> Topology:
        return Topology(joint_count=self.joints, bones=self.bones, root=self.root)

    def stream_count(self) -> int:
        return 4 if self.flags.velocity else 2

    def conv_trace(self) -> list[tuple[int, int]]:
        """(spatial extent, channels) after each conv+pool stage."""
        size = self.frames
        trace = []
        for c in self.channels:
            size = (size + 2 - 3) // 2 + 1  # 3x3 conv, stride 2, padding 1
            if size % 2:
                raise UsageError(f"frame count {self.frames} does not pool evenly")
            size //= 2
            trace.append((size, c))
        return trace

    def feature_width(self) -> int:
        trace = self.conv_trace()
        size, c3 = trace[-1]
        if size != 1:
            raise UsageError(f"frame count {self.frames} does not reduce to 1x1 (got {size})")
        return c3


@dataclass
class StreamCNNParams:
    """Three conv stages of one stream; each is followed by pool + leaky."""

    conv1_kernels: Tensor
    conv1_bias: Tensor
    conv2_kernels: Tensor
    conv2_bias: Tensor
    conv3_kernels: Tensor
    conv3_bias: Tensor

    def named(self, prefix: str) -> dict[str, Tensor]:
        return {
            f"{prefix}.conv1.kernels": self.conv1_kernels,
            f"{prefix}.conv1.bias": self.conv1_bias,
            f"{prefix}.conv2.kernels": self.conv2_kernels,
            f"{prefix}.conv2.bias": self.conv2_bias,
            f"{prefix}.conv3.kernels": self.conv3_kernels,
            f"{prefix}.conv3.bias": self.conv3_bias,
        }


@dataclass
class ClassifierParams:
    fc1_weight: Tensor
    fc1_bias: Tensor
    fc2_weight: Tensor
    fc2_bias: Tensor

    def named(self, prefix: str = "classifier") -> dict[str, Tensor]:
        return {
            f"{prefix}.fc1.weight": self.fc1_weight,
            f"{prefix}.fc1.bias": self.fc1_bias,
            f"{prefix}.fc2.weight": self.fc2_weight,
            f"{prefix}.fc2.bias": self.fc2_bias,
        }


def _kaiming(rng, shape, fan_in, dtype) -> np.ndarray:
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)


def _scale_head(rng, feat_width, hidden, dtype) -> ScaleHead:
    # fc2 starts as bias 1 with tiny weights so initial scales sit near 1
    return ScaleHead(
        fc1_weight=Tensor(_kaiming(rng, (hidden, feat_width), feat_width, dtype), requires_grad=True, dtype=dtype),
        fc1_bias=Tensor(np.zeros(hidden, dtype=dtype), requires_grad=True, dtype=dtype),
        fc2_weight=Tensor(rng.uniform(-0.01, 0.01, (1, hidden)).astype(dtype), requires_grad=True, dtype=dtype),
        fc2_bias=Tensor(np.ones(1, dtype=dtype), requires_grad=True, dtype=dtype),
    )


def identity_like_embedding(frames: int, joints: int, dtype=np.float32) -> np.ndarray:
    """Row t selects joint floor(t*J/T); the identity when J == T."""
    weight = np.zeros((frames, joints), dtype=dtype)
    for t in range(frames):
        weight[t, t * joints // frames] = 1.0
    return weight


@dataclass
class ModelParams:
    config: ModelConfig
    encoder: EncoderParams
    streams: list[StreamCNNParams]
    classifier: ClassifierParams

    @staticmethod
    def build(config: ModelConfig, seed: int = 0, dtype=np.float32) -> "ModelParams":
        rng = np.random.default_rng(seed)
        flags = config.flags
        t, j = config.frames, config.joints
        bone_count = j - 1

        joint_head = _scale_head(rng, t * 3, config.scale_hidden, dtype) if flags.joint_scale else None
        bone_head = _scale_head(rng, t * 3, config.scale_hidden, dtype) if flags.bone_scale else None

        attention = None
        if flags.attention:
            d = j
            attention = AttentionHead(
                shared_weight=Tensor(_kaiming(rng, (d, j * 3), j * 3, dtype), requires_grad=True, dtype=dtype),
                shared_bias=Tensor(np.zeros(d, dtype=dtype), requires_grad=True, dtype=dtype),
                query_weight=Tensor(_kaiming(rng, (j, d), d, dtype), requires_grad=True, dtype=dtype),
                key_weight=Tensor(_kaiming(rng, (j, d), d, dtype), requires_grad=True, dtype=dtype),
            )

        # embeddings learn only when their source tensor is itself learned,
        # so the raw baseline keeps fixed identity-like coordinate images
        learnable = {
            "joints": flags.joint_scale,
            "joint_velocity": flags.joint_scale,
            "bones": flags.bone_scale,
            "bone_velocity": flags.bone_scale,
        }
        embeddings = {}
        temporals = {}
        for name in flags.active_streams():
            weight = identity_like_embedding(t, j, dtype)
            embeddings[name] = EmbeddingLayer(Tensor(weight, requires_grad=learnable[name], dtype=dtype))
            if flags.temporal:
                temporals[name] = TemporalEmbedding(Tensor(np.zeros(t, dtype=dtype), requires_grad=True, dtype=dtype))

        encoder = EncoderParams(
            topology=config.topology(),
            flags=flags,
            frames=t,
            dt=config.dt,
            joint_scale=joint_head,
            bone_scale=bone_head,
            attention=attention,
            embeddings=embeddings,
            temporals=temporals,
        )

        c1, c2, c3 = config.channels
        streams = []
        for _ in range(config.stream_count()):
            streams.append(StreamCNNParams(
                conv1_kernels=Tensor(_kaiming(rng, (c1, 3, 3, 3), 3 * 9, dtype), requires_grad=True, dtype=dtype),
                conv1_bias=Tensor(np.zeros(c1, dtype=dtype), requires_grad=True, dtype=dtype),
                conv2_kernels=Tensor(_kaiming(rng, (c2, c1, 3, 3), c1 * 9, dtype), requires_grad=True, dtype=dtype),
                conv2_bias=Tensor(np.zeros(c2, dtype=dtype), requires_grad=True, dtype=dtype),
                conv3_kernels=Tensor(_kaiming(rng, (c3, c2, 3, 3), c2 * 9, dtype), requires_grad=True, dtype=dtype),
                conv3_bias=Tensor(np.zeros(c3, dtype=dtype), requires_grad=True, dtype=dtype),
            ))

        concat_width = config.stream_count() * config.feature_width()
        classifier = ClassifierParams(
            fc1_weight=Tensor(_kaiming(rng, (config.fc_hidden, concat_width), concat_width, dtype), requires_grad=True, dtype=dtype),
            fc1_bias=Tensor(np.zeros(config.fc_hidden, dtype=dtype), requires_grad=True, dtype=dtype),
            fc2_weight=Tensor(_kaiming(rng, (config.classes, config.fc_hidden), config.fc_hidden, dtype), requires_grad=True, dtype=dtype),
            fc2_bias=Tensor(np.zeros(config.classes, dtype=dtype), requires_grad=True, dtype=dtype),
        )
        return ModelParams(config=config, encoder=encoder, streams=streams, classifier=classifier)

    def named_tensors(self) -> dict[str, Tensor]:
        out = dict(self.encoder.named_tensors())
        for i, stream in enumerate(self.streams):
            out.update(stream.named(f"stream{i}"))
        out.update(self.classifier.named())
        return out

    def trainable_tensors(self) -> dict[str, Tensor]:
        return {k: t for k, t in self.named_tensors().items() if t.requires_grad}

    def with_flags(self, flags: EnhanceFlags) -> "ModelParams":
        """Fresh build under different flags (same everything else)."""
        return ModelParams.build(replace(self.config, flags=flags))
