"""Frozen vision backbones used as feature extractors.

Two families are supported: DinoV2 vision transformers and the visual tower of
OpenCLIP-style CLIP models (the text encoder is never loaded). Embeddings are
the backbone's pooled / class-token output; its true width is recorded, which
for small and large variants differs from 768.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch


class WeightFetchError(RuntimeError):
    """Pretrained weights could not be downloaded or found locally."""


@dataclass(frozen=True)
class VariantInfo:
    hidden_size: int
    num_layers: int
    num_heads: int
    patch_size: int
    pretrained_repo: str


# Published architecture parameters per variant.
DINO_V2_VARIANTS = {
    "vits14": VariantInfo(384, 12, 6, 14, "facebook/dinov2-small"),
    "vitb14": VariantInfo(768, 12, 12, 14, "facebook/dinov2-base"),
    "vitl14": VariantInfo(1024, 24, 16, 14, "facebook/dinov2-large"),
}
OPEN_CLIP_VARIANTS = {
    "vit-b-16": VariantInfo(768, 12, 12, 16, "laion/CLIP-ViT-B-16-laion400M-e32"),
    "vit-b-32": VariantInfo(768, 12, 12, 32, "laion/CLIP-ViT-B-32-laion400M-e32"),
    "vit-l-14": VariantInfo(1024, 24, 16, 14, "laion/CLIP-ViT-L-14-laion400M-e32"),
}

# Channel normalization constants published with each family's preprocessing.
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)
OPENAI_CLIP_MEAN = (0.48145466, 0.4578275, 0.40821073)
OPENAI_CLIP_STD = (0.26862954, 0.26130258, 0.27577711)

DEFAULT_OPEN_CLIP_WEIGHTS_TAG = "laion400m_e32"


@dataclass(frozen=True)
class BackboneSpec:
    """Which frozen backbone to run and which weights to put in it.

    ``weights`` is either "pretrained" (download/published checkpoints) or
    "untrained" (architecture only, seeded random weights - a smoke-test mode
    for environments without access to the model hub; the corpus backbone tag
    records this so such corpora are never mistaken for real features).
    """

    family: str  # dino-v2 | open-clip
    variant: str
    weights: str = "pretrained"
    seed: int = 0

    def __post_init__(self):
        if self.family not in ("dino-v2", "open-clip"):
            raise ValueError(f"unknown family {self.family!r}")
        table = DINO_V2_VARIANTS if self.family == "dino-v2" else OPEN_CLIP_VARIANTS
        if self.variant not in table:
            raise ValueError(
                f"unknown {self.family} variant {self.variant!r}; expected one of {sorted(table)}"
            )
        if self.weights not in ("pretrained", "untrained"):
            raise ValueError(f"weights must be 'pretrained' or 'untrained', got {self.weights!r}")

    @property
    def info(self) -> VariantInfo:
        table = DINO_V2_VARIANTS if self.family == "dino-v2" else OPEN_CLIP_VARIANTS
        return table[self.variant]

    @property
    def output_dim(self) -> int:
        return self.info.hidden_size

    @property
    def weights_tag(self) -> str:
        if self.weights == "untrained":
            return f"untrained-seed{self.seed}"
        if self.family == "open-clip":
            return DEFAULT_OPEN_CLIP_WEIGHTS_TAG
        return self.info.pretrained_repo

    @property
    def normalization(self) -> tuple:
        if self.family == "open-clip":
            return OPENAI_CLIP_MEAN, OPENAI_CLIP_STD
        return IMAGENET_MEAN, IMAGENET_STD

    def corpus_tag(self) -> str:
        return f"{self.family}/{self.variant}@{self.weights_tag}"


def load_backbone(spec: BackboneSpec, device: str = "cpu") -> torch.nn.Module:
    """Build the frozen backbone in eval mode with gradients disabled."""
    from transformers import CLIPVisionConfig, CLIPVisionModel, Dinov2Config, Dinov2Model

    info = spec.info
    if spec.weights == "pretrained":
        cls = Dinov2Model if spec.family == "dino-v2" else CLIPVisionModel
        try:
            model = cls.from_pretrained(info.pretrained_repo)
        except Exception as exc:  # hub errors surface as several exception types
            raise WeightFetchError(
                f"could not fetch weights {info.pretrained_repo!r}: {exc}. "
                "Use --weights untrained for a seeded smoke-test backbone."
            ) from exc
    else:
        torch.manual_seed(spec.seed)
        if spec.family == "dino-v2":
            config = Dinov2Config(
                hidden_size=info.hidden_size,
                num_hidden_layers=info.num_layers,
                num_attention_heads=info.num_heads,
                patch_size=info.patch_size,
                image_size=224,
            )
            model = Dinov2Model(config)
        else:
            config = CLIPVisionConfig(
                hidden_size=info.hidden_size,
                num_hidden_layers=info.num_layers,
                num_attention_heads=info.num_heads,
                patch_size=info.patch_size,
                image_size=224,
            )
            model = CLIPVisionModel(config)
    model = model.to(device).eval()
    for param in model.parameters():
        param.requires_grad_(False)
    return model


def embed_batch(model: torch.nn.Module, batch: torch.Tensor) -> torch.Tensor:
    """Pooled/class-token embeddings for a (n, 3, 224, 224) batch; no gradients."""
    with torch.inference_mode():
        return model(batch).pooler_output
