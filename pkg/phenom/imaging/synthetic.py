"""
Synthetic high-content-screening plates with planted relationships.

Every gene gets a phenotype latent z. Genes in the same relationship block
share a latent up to small noise, so their wells look alike; the returned
RelationshipDB holds exactly the within-block pairs. Wells render Gaussian
blobs ("cells") whose per-channel amplitude, size and texture frequency are
smooth functions of z, on top of smooth per-plate and per-experiment
illumination fields scaled by ``batch_effect_scale``.
"""

from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

from phenom.benchmarks.relationships import RelationshipDB
from phenom.core.logger import PhenomLogger
from phenom.imaging.well_image import NEG_CONTROL, WellImage

logger = PhenomLogger.get_logger(__name__)

DEFAULT_CHANNELS = ["DNA", "ER", "RNA", "AGP", "Mito", "BF"]

# Stream tags for np.random.default_rng([seed, tag, ...])
_LATENT_STREAM = 11
_MAPPING_STREAM = 13
_FIELD_STREAM = 17
_WELL_STREAM = 19


class SynthConfig(BaseModel):
    """Synthetic dataset configuration. Defaults are desk scale."""

    n_genes: int = Field(40, ge=1)
    n_replicates_per_gene: int = Field(4, ge=1)
    n_plates: int = Field(2, ge=1)
    n_experiments: int = Field(2, ge=1)
    relationship_blocks: List[List[int]] = Field(default_factory=list)
    phenotype_dim: int = Field(8, ge=1)
    batch_effect_scale: float = Field(1.0, ge=0.0)
    seed: int = Field(0, ge=0)

    image_size: int = Field(64, ge=8)
    channel_names: List[str] = Field(default_factory=lambda: list(DEFAULT_CHANNELS))
    n_controls_per_plate: int = Field(4, ge=0)
    blobs_per_image: int = Field(24, ge=1)
    blob_radius: float = Field(3.0, gt=0.0)
    texture_frequency: float = Field(0.15, gt=0.0)
    within_block_noise: float = Field(0.15, ge=0.0)
    pixel_noise: float = Field(0.05, ge=0.0)
    background: float = Field(0.2, ge=0.0)

    @field_validator("channel_names")
    @classmethod
    def _unique_channels(cls, names: List[str]) -> List[str]:
        if not names:
            raise ValueError("at least one channel is required")
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate channel names: {names}")
        return names

    @model_validator(mode="after")
    def _disjoint_blocks(self) -> "SynthConfig":
        seen = set()
        for block in self.relationship_blocks:
            for g in block:
                if g < 0 or g >= self.n_genes:
                    raise ValueError(f"gene index {g} outside [0, {self.n_genes})")
                if g in seen:
                    raise ValueError(f"gene index {g} appears in more than one relationship block")
                seen.add(g)
        return self

    @property
    def n_channels(self) -> int:
        return len(self.channel_names)


def gene_id(g: int) -> str:
    return f"gene_{g:04d}"


@dataclass(frozen=True)
class PhenotypeMapping:
    """Fixed linear read-outs from latent space into rendering parameters."""

    amplitude: np.ndarray   # C x d
    radius: np.ndarray      # C x d
    frequency: np.ndarray   # C x d
    density: np.ndarray     # d
    baseline: np.ndarray    # C


class SyntheticPlateGenerator:
    """
    Renders a synthetic screen from a SynthConfig.

    The generator is deterministic: every random draw comes from a stream
    keyed on (seed, purpose, index), so any single well can be re-rendered
    on its own.
    """

    def __init__(self, config: SynthConfig):
        self.config = config
        self.mapping = self._build_mapping()
        self.latents = self._build_latents()
        logger.info(
            f"Initialized synthetic generator: {config.n_genes} genes, "
            f"{len(config.relationship_blocks)} relationship blocks, seed {config.seed}"
        )

    def _rng(self, *keys: int) -> np.random.Generator:
        return np.random.default_rng([self.config.seed, *keys])

    def _build_mapping(self) -> PhenotypeMapping:
        c, d = self.config.n_channels, self.config.phenotype_dim
        rng = self._rng(_MAPPING_STREAM)
        scale = 1.0 / np.sqrt(d)
        return PhenotypeMapping(
            amplitude=rng.normal(0.0, scale, (c, d)),
            radius=rng.normal(0.0, scale, (c, d)),
            frequency=rng.normal(0.0, scale, (c, d)),
            density=rng.normal(0.0, scale, d),
            baseline=rng.uniform(0.5, 1.5, c),
        )

    def _build_latents(self) -> np.ndarray:
        """n_genes x d latents; block members share a base latent."""
        cfg = self.config
        rng = self._rng(_LATENT_STREAM)
        latents = rng.normal(0.0, 1.0, (cfg.n_genes, cfg.phenotype_dim))
        for b, block in enumerate(cfg.relationship_blocks):
            block_rng = self._rng(_LATENT_STREAM, 1 + b)
            base = block_rng.normal(0.0, 1.0, cfg.phenotype_dim)
            for g in block:
                latents[g] = base + cfg.within_block_noise * block_rng.normal(0.0, 1.0, cfg.phenotype_dim)
        return latents

    def batch_field(self, kind: int, index: int) -> np.ndarray:
        """
        Smooth H x W x C illumination pattern for one plate (kind 0) or
        experiment (kind 1), before scaling by batch_effect_scale.
        """
        cfg = self.config
        size, c = cfg.image_size, cfg.n_channels
        rng = self._rng(_FIELD_STREAM, kind, index)
        yy, xx = np.meshgrid(np.linspace(0.0, 1.0, size), np.linspace(0.0, 1.0, size), indexing="ij")
        out = np.empty((size, size, c), dtype=np.float64)
        for ch in range(c):
            gy, gx = rng.normal(0.0, 1.0, 2)
            ky, kx = rng.uniform(0.5, 2.0, 2)
            phase = rng.uniform(0.0, 2 * np.pi)
            strength = rng.normal(0.0, 1.0)
            pattern = gy * (yy - 0.5) + gx * (xx - 0.5) + np.cos(2 * np.pi * (ky * yy + kx * xx) + phase)
            out[:, :, ch] = 0.5 * strength * pattern
        return out

    def render_well(self, z: np.ndarray, field: np.ndarray, well_seed: int) -> np.ndarray:
        """
        Render one H x W x C float32 image for latent ``z``.

        Args:
            z: Phenotype latent (zeros for negative controls)
            field: Additive batch field, already scaled
            well_seed: Seed for blob placement and pixel noise

        Returns:
            Non-negative float32 pixels
        """
        cfg, m = self.config, self.mapping
        size, c = cfg.image_size, cfg.n_channels
        rng = self._rng(_WELL_STREAM, well_seed)

        amplitude = np.exp(0.5 * np.tanh(m.amplitude @ z))
        sigma = cfg.blob_radius * np.exp(0.35 * np.tanh(m.radius @ z))
        frequency = cfg.texture_frequency * np.exp(0.5 * np.tanh(m.frequency @ z))
        n_blobs = max(1, int(round(cfg.blobs_per_image * np.exp(0.3 * np.tanh(m.density @ z)))))

        image = np.broadcast_to(cfg.background * m.baseline, (size, size, c)).astype(np.float64)
        centers = rng.uniform(0.0, size, (n_blobs, 2))
        brightness = rng.uniform(0.8, 1.2, n_blobs)
        reach = int(np.ceil(4.0 * sigma.max()))
        for (cy, cx), bright in zip(centers, brightness):
            r0, r1 = max(0, int(cy) - reach), min(size, int(cy) + reach + 1)
            c0, c1 = max(0, int(cx) - reach), min(size, int(cx) + reach + 1)
            yy, xx = np.meshgrid(np.arange(r0, r1), np.arange(c0, c1), indexing="ij")
            dist = np.sqrt((yy - cy) ** 2 + (xx - cx) ** 2)[:, :, None]
            blob = np.exp(-(dist ** 2) / (2.0 * sigma ** 2))
            texture = 0.75 + 0.25 * np.cos(2.0 * np.pi * frequency * dist)
            image[r0:r1, c0:c1, :] += bright * amplitude * blob * texture

        image = image + field + cfg.pixel_noise * rng.normal(0.0, 1.0, image.shape)
        return np.clip(image, 0.0, None).astype(np.float32)

    def layout(self) -> List[Dict[str, str]]:
        """Well assignments: one row per well with ids and the gene index (-1 for controls)."""
        cfg = self.config
        plates: List[Tuple[int, int]] = [
            (e, p) for e in range(cfg.n_experiments) for p in range(cfg.n_plates)
        ]
        per_plate: Dict[int, List[int]] = {i: [] for i in range(len(plates))}
        for g in range(cfg.n_genes):
            for r in range(cfg.n_replicates_per_gene):
                per_plate[(g * cfg.n_replicates_per_gene + r) % len(plates)].append(g)
        rows = []
        for i, (e, p) in enumerate(plates):
            plate_id = f"exp{e}_plate{p}"
            genes = per_plate[i] + [-1] * cfg.n_controls_per_plate
            for k, g in enumerate(genes):
                rows.append({
                    "well_id": f"{plate_id}_w{k:04d}",
                    "plate_id": plate_id,
                    "experiment_id": f"exp{e}",
                    "perturbation_id": NEG_CONTROL if g < 0 else gene_id(g),
                    "gene": g,
                    "plate_index": p,
                    "experiment_index": e,
                })
        return rows

    def generate(self) -> Tuple[List[WellImage], RelationshipDB]:
        cfg = self.config
        fields: Dict[Tuple[int, int], np.ndarray] = {}
        images = []
        zero = np.zeros(cfg.phenotype_dim)
        for well_index, row in enumerate(self.layout()):
            key = (row["experiment_index"], row["plate_index"])
            if key not in fields:
                plate_key = row["experiment_index"] * cfg.n_plates + row["plate_index"]
                fields[key] = cfg.batch_effect_scale * (
                    self.batch_field(0, plate_key) + self.batch_field(1, row["experiment_index"])
                )
            z = zero if row["gene"] < 0 else self.latents[row["gene"]]
            pixels = self.render_well(z, fields[key], well_index)
            images.append(WellImage(
                pixels=pixels,
                channel_names=list(cfg.channel_names),
                well_id=row["well_id"],
                plate_id=row["plate_id"],
                experiment_id=row["experiment_id"],
                perturbation_id=row["perturbation_id"],
            ))

        db = RelationshipDB.from_groups(
            "synthetic",
            ([gene_id(g) for g in block] for block in cfg.relationship_blocks),
        )
        logger.info(f"Generated {len(images)} wells and {len(db)} known relationships")
        return images, db


def generate_synthetic_dataset(config: SynthConfig) -> Tuple[List[WellImage], RelationshipDB]:
    """Render the full synthetic screen and its planted relationship DB."""
    return SyntheticPlateGenerator(config).generate()
