"""
Well image container and dataset manifest.

Each well is one file::

    bytes 0-3    magic b"PHWI"
    bytes 4-7    header length L, uint32 little-endian
    bytes 8-8+L  UTF-8 JSON header {schema, H, W, C, channel_names,
                 well_id, plate_id, experiment_id, perturbation_id}
    rest         H*W*C float32 little-endian pixels, H-major, W next, C last

The dataset directory holds ``manifest.csv`` with columns well_id,
plate_id, experiment_id, perturbation_id, file_path (relative to the
directory) and a ``wells/`` folder of containers.
"""

import json
import struct
from pathlib import Path
from typing import Iterator, List

import numpy as np
import pandas as pd

from phenom.core.exceptions import FormatError
from phenom.core.logger import PhenomLogger
from phenom.imaging.well_image import WellImage

logger = PhenomLogger.get_logger(__name__)

MAGIC = b"PHWI"
SCHEMA = "phenom.well/v1"
MANIFEST_COLUMNS = ["well_id", "plate_id", "experiment_id", "perturbation_id", "file_path"]


class ImageDAO:
    """
    Reads and writes well image containers under one dataset directory.
    """

    def __init__(self, root: Path):
        self.root = Path(root)
        self.manifest_path = self.root / "manifest.csv"

    def write_well(self, image: WellImage) -> Path:
        """Serialize one well; returns the path relative to the dataset root."""
        header = {
            "schema": SCHEMA,
            "H": image.height,
            "W": image.width,
            "C": image.n_channels,
            "channel_names": list(image.channel_names),
            "well_id": image.well_id,
            "plate_id": image.plate_id,
            "experiment_id": image.experiment_id,
            "perturbation_id": image.perturbation_id,
        }
        header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
        payload = np.ascontiguousarray(image.pixels, dtype="<f4").tobytes()

        relative = Path("wells") / f"{image.well_id}.phw"
        path = self.root / relative
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as f:
            f.write(MAGIC)
            f.write(struct.pack("<I", len(header_bytes)))
            f.write(header_bytes)
            f.write(payload)
        return relative

    @staticmethod
    def read_well(path: Path) -> WellImage:
        path = Path(path)
        with open(path, "rb") as f:
            blob = f.read()
        if blob[:4] != MAGIC:
            raise FormatError(f"{path} is not a well container (bad magic)")
        (header_len,) = struct.unpack("<I", blob[4:8])
        try:
            header = json.loads(blob[8:8 + header_len].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise FormatError(f"{path}: unreadable header: {e}") from e
        if header.get("schema") != SCHEMA:
            raise FormatError(f"{path}: unsupported schema {header.get('schema')}")
        h, w, c = header["H"], header["W"], header["C"]
        payload = blob[8 + header_len:]
        if len(payload) != h * w * c * 4:
            raise FormatError(f"{path}: payload has {len(payload)} bytes, expected {h * w * c * 4}")
        pixels = np.frombuffer(payload, dtype="<f4").reshape(h, w, c).astype(np.float32)
        return WellImage(
            pixels=pixels,
            channel_names=list(header["channel_names"]),
            well_id=header["well_id"],
            plate_id=header["plate_id"],
            experiment_id=header["experiment_id"],
            perturbation_id=header["perturbation_id"],
        )

    def write_dataset(self, images: List[WellImage]) -> pd.DataFrame:
        """Write every well plus the manifest; returns the manifest frame."""
        self.root.mkdir(parents=True, exist_ok=True)
        rows = []
        for image in images:
            relative = self.write_well(image)
            rows.append({
                "well_id": image.well_id,
                "plate_id": image.plate_id,
                "experiment_id": image.experiment_id,
                "perturbation_id": image.perturbation_id,
                "file_path": relative.as_posix(),
            })
        manifest = pd.DataFrame(rows, columns=MANIFEST_COLUMNS)
        manifest.to_csv(self.manifest_path, index=False, lineterminator="\n")
        logger.info(f"Wrote {len(rows)} wells to {self.root}")
        return manifest

    def read_manifest(self) -> pd.DataFrame:
        if not self.manifest_path.exists():
            raise FileNotFoundError(f"No manifest at {self.manifest_path}")
        manifest = pd.read_csv(self.manifest_path, dtype=str, keep_default_na=False)
        missing = set(MANIFEST_COLUMNS) - set(manifest.columns)
        if missing:
            raise FormatError(f"Manifest {self.manifest_path} is missing columns {sorted(missing)}")
        return manifest

    def iter_wells(self) -> Iterator[WellImage]:
        for relative in self.read_manifest()["file_path"]:
            yield self.read_well(self.root / relative)

    def load_dataset(self) -> List[WellImage]:
        images = list(self.iter_wells())
        logger.info(f"Loaded {len(images)} wells from {self.root}")
        return images
