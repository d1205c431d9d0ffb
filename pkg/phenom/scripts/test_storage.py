import json

import numpy as np
import pandas as pd
import pytest

from phenom.benchmarks.feature_regression import FeatureTable
from phenom.benchmarks.relationships import RelationshipDB
from phenom.core.exceptions import FormatError
from phenom.db.embedding_dao import EmbeddingDAO
from phenom.db.feature_dao import FeatureDAO
from phenom.db.image_dao import MAGIC, MANIFEST_COLUMNS, ImageDAO
from phenom.db.relationship_dao import RelationshipDAO


def test_dataset_write_and_load(tmp_path, synth_images):
    dao = ImageDAO(tmp_path / "dataset")
    manifest = dao.write_dataset(synth_images)
    assert list(manifest.columns) == MANIFEST_COLUMNS
    assert len(list((tmp_path / "dataset" / "wells").iterdir())) == len(synth_images)

    loaded = dao.load_dataset()
    for original, restored in zip(synth_images, loaded):
        assert restored.well_id == original.well_id
        assert restored.channel_names == original.channel_names
        assert restored.perturbation_id == original.perturbation_id
        np.testing.assert_array_equal(restored.pixels, original.pixels)


def test_well_container_layout(tmp_path, synth_images):
    dao = ImageDAO(tmp_path)
    relative = dao.write_well(synth_images[0])
    blob = (tmp_path / relative).read_bytes()
    assert blob[:4] == MAGIC
    header_len = int.from_bytes(blob[4:8], "little")
    header = json.loads(blob[8:8 + header_len])
    assert (header["H"], header["W"], header["C"]) == synth_images[0].pixels.shape
    pixels = np.frombuffer(blob[8 + header_len:], dtype="<f4").reshape(synth_images[0].pixels.shape)
    np.testing.assert_array_equal(pixels, synth_images[0].pixels)


def test_bad_magic_is_rejected(tmp_path):
    path = tmp_path / "bad.phw"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(FormatError):
        ImageDAO.read_well(path)


def test_truncated_payload_is_rejected(tmp_path, synth_images):
    dao = ImageDAO(tmp_path)
    path = tmp_path / dao.write_well(synth_images[0])
    path.write_bytes(path.read_bytes()[:-4])
    with pytest.raises(FormatError):
        ImageDAO.read_well(path)


def test_missing_manifest(tmp_path):
    with pytest.raises(FileNotFoundError):
        ImageDAO(tmp_path / "nowhere").load_dataset()


def test_relationship_file(tmp_path):
    db = RelationshipDB("corum-like", {("b", "a"), ("c", "a")})
    path = RelationshipDAO.write(db, tmp_path / "pairs.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "# database: corum-like"
    assert lines[1] == "perturbation_a,perturbation_b"
    restored = RelationshipDAO.read(path)
    assert restored.name == "corum-like"
    assert restored.pairs == {("a", "b"), ("a", "c")}


def test_relationship_file_without_name(tmp_path):
    path = tmp_path / "pairs.csv"
    path.write_text("perturbation_a,perturbation_b\na,b\n")
    with pytest.raises(FormatError):
        RelationshipDAO.read(path)


def test_self_pairs_are_rejected():
    with pytest.raises(ValueError):
        RelationshipDB("x", {("a", "a")})


def test_embedding_table_is_bit_exact(tmp_path, make_table):
    rng = np.random.default_rng(0)
    table = make_table(rng.standard_normal((5, 3)).astype(np.float32), ["a", "b", "a", "NEG_CONTROL", "b"])
    stem = EmbeddingDAO.write(table, tmp_path / "emb")
    header = json.loads((tmp_path / "emb.json").read_text())
    assert header["rows"] == 5 and header["D"] == 3
    assert (tmp_path / "emb.f32").stat().st_size == 5 * 3 * 4

    restored = EmbeddingDAO.read(stem)
    assert restored.vectors.tobytes() == table.vectors.astype("<f4").tobytes()
    pd.testing.assert_frame_equal(restored.metadata, table.metadata)


def test_embedding_rows_follow_row_index(tmp_path, make_table):
    table = make_table(np.arange(6, dtype=np.float32).reshape(3, 2), ["a", "b", "c"])
    EmbeddingDAO.write(table, tmp_path / "emb")
    frame = pd.read_csv(tmp_path / "emb.csv", dtype=str)
    frame.iloc[::-1].to_csv(tmp_path / "emb.csv", index=False)
    restored = EmbeddingDAO.read(tmp_path / "emb")
    assert restored.metadata["perturbation_id"].tolist() == ["c", "b", "a"]
    np.testing.assert_array_equal(restored.vectors, table.vectors[::-1])


def test_embedding_size_mismatch(tmp_path, make_table):
    table = make_table(np.ones((2, 2)), ["a", "b"])
    EmbeddingDAO.write(table, tmp_path / "emb")
    (tmp_path / "emb.f32").write_bytes(b"\x00" * 4)
    with pytest.raises(FormatError):
        EmbeddingDAO.read(tmp_path / "emb")


def test_feature_table_file(tmp_path, synth_images):
    features = FeatureTable.from_images(synth_images[:4])
    path = FeatureDAO.write(features, tmp_path / "features.csv")
    restored = FeatureDAO.read(path)
    assert restored.columns == features.columns
    assert list(restored.frame.index) == [im.well_id for im in synth_images[:4]]
    np.testing.assert_allclose(restored.values(), features.values(), rtol=1e-12)


def test_feature_table_with_unknown_category(tmp_path):
    path = tmp_path / "features.csv"
    path.write_text("well_id,Color_Hue_DNA\nw0,1.0\n")
    with pytest.raises(FormatError):
        FeatureDAO.read(path)
