"""ViT architecture configuration and the named presets."""

from typing import Literal, Optional

from pydantic import BaseModel, Field, model_validator

Variant = Literal["S", "B", "L", "tiny-test"]


class ViTConfig(BaseModel):
    """
    Encoder/decoder scalars for MAE, CA-MAE and WSL ViTs.

    The S, B and L variants use patch sizes 8 or 16; ``tiny-test`` is free.
    """

    variant: Variant = "tiny-test"
    img_size: int = Field(64, ge=1)
    in_chans: int = Field(6, ge=1)
    patch_size: int = Field(8, ge=1)
    depth: int = Field(2, ge=1)
    width: int = Field(64, ge=1)
    heads: int = Field(4, ge=1)
    mlp_ratio: float = Field(4.0, gt=0.0)
    decoder_depth: int = Field(1, ge=1)
    decoder_width: int = Field(32, ge=1)
    decoder_heads: int = Field(4, ge=1)
    stochastic_depth_rate: float = Field(0.0, ge=0.0, lt=1.0)

    # Training-stability options for large models
    parallel_blocks: bool = False
    qk_norm: bool = False
    qk_bias: bool = True
    layer_scale_init: Optional[float] = None

    # Reconstruction target
    norm_pix_loss: bool = False

    @model_validator(mode="after")
    def _check(self) -> "ViTConfig":
        if self.width % self.heads:
            raise ValueError(f"width {self.width} is not divisible by heads {self.heads}")
        if self.decoder_width % self.decoder_heads:
            raise ValueError(
                f"decoder_width {self.decoder_width} is not divisible by decoder_heads {self.decoder_heads}"
            )
        if self.variant != "tiny-test" and self.patch_size not in (8, 16):
            raise ValueError(f"patch_size must be 8 or 16 for ViT-{self.variant}")
        if self.img_size % self.patch_size:
            raise ValueError(f"img_size {self.img_size} is not divisible by patch_size {self.patch_size}")
        # 2D sine-cosine embeddings split the width four ways
        if self.width % 4 or self.decoder_width % 4:
            raise ValueError("width and decoder_width must be multiples of 4")
        return self

    @property
    def n_patches(self) -> int:
        return (self.img_size // self.patch_size) ** 2

    @classmethod
    def preset(cls, variant: Variant, patch_size: int = 16, **overrides) -> "ViTConfig":
        """
        Named architectures. S/B/L use the large-run stability options
        (parallel blocks, QK-norm, no QK-bias, LayerScale) and an
        8-block, 512-wide decoder.
        """
        if variant == "tiny-test":
            base = dict(variant=variant, img_size=64, patch_size=8, depth=2, width=64, heads=4,
                        decoder_depth=1, decoder_width=32, decoder_heads=4)
        else:
            depth, width, heads, drop = {
                "S": (12, 384, 6, 0.1),
                "B": (12, 768, 12, 0.1),
                "L": (24, 1024, 16, 0.3),
            }[variant]
            base = dict(variant=variant, img_size=256, patch_size=patch_size, depth=depth, width=width,
                        heads=heads, decoder_depth=8, decoder_width=512, decoder_heads=16,
                        stochastic_depth_rate=drop, parallel_blocks=True, qk_norm=True,
                        qk_bias=False, layer_scale_init=1e-5)
        base.update(overrides)
        return cls(**base)
