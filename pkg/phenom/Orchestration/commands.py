"""
Command implementations behind the CLI.

Each ``cmd_*`` takes already-validated inputs, writes its artifacts under
``output_dir`` and returns a name -> path mapping for the run manifest.
"""

import shutil
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from phenom.benchmarks.feature_regression import FeatureTable, fit_feature_regressors, skew_transform
from phenom.benchmarks.relationships import RelationshipDB
from phenom.benchmarks.report import BenchmarkReport, RetrievalEntry
from phenom.benchmarks.retrieval import RetrievalKind, build_retrieval_task, retrieval_benchmark
from phenom.benchmarks.similarity import random_embeddings, recall_for_matrix
from phenom.core.exceptions import ChannelMismatchError, EmptyInputError, InvalidConfigError
from phenom.core.logger import PhenomLogger
from phenom.db.embedding_dao import EmbeddingDAO
from phenom.db.feature_dao import FeatureDAO
from phenom.db.image_dao import ImageDAO
from phenom.db.relationship_dao import RelationshipDAO
from phenom.imaging.synthetic import SynthConfig, generate_synthetic_dataset
from phenom.imaging.well_image import WellImage
from phenom.models.ca_mae import EmbedMode, build_ca_mae
from phenom.models.checkpoint import load_checkpoint
from phenom.models.classifier import build_classifier
from phenom.models.config import ViTConfig
from phenom.models.mae import build_mae
from phenom.Orchestration.embedder import WellEmbedder
from phenom.processors.aggregation import perturbation_embeddings
from phenom.processors.embeddings import EmbeddingTable
from phenom.processors.pipeline import parse_pipeline, run_pipeline
from phenom.training.config import TrainConfig
from phenom.training.datasets import label_index
from phenom.training.trainer import Trainer

logger = PhenomLogger.get_logger(__name__)

DATASET_DIR = "dataset"
RELATIONSHIPS_FILE = "relationships.csv"
FEATURES_FILE = "features.csv"
CHECKPOINT_FILE = "model.pt"
LOSS_CURVE_FILE = "loss_curve.csv"
EMBEDDINGS_STEM = "embeddings"
REPORT_FILE = "report.json"


def _select_channels(images: List[WellImage], channels: Optional[Sequence[str]]) -> List[WellImage]:
    if not channels:
        return images
    names = images[0].channel_names
    missing = [c for c in channels if c not in names]
    if missing:
        raise ChannelMismatchError(f"Channels {missing} not in dataset channels {names}")
    indices = [names.index(c) for c in channels]
    return [im.select_channels(indices) for im in images]


def load_images(dataset_dir: Path, channels: Optional[Sequence[str]] = None) -> List[WellImage]:
    images = ImageDAO(dataset_dir).load_dataset()
    if not images:
        raise EmptyInputError(f"Dataset {dataset_dir} has no wells")
    return _select_channels(images, channels)


# --------------------------------------------------
# synth
# --------------------------------------------------
def cmd_synth(config: SynthConfig, output_dir: Path, with_features: bool = True) -> Dict[str, Path]:
    images, db = generate_synthetic_dataset(config)
    dataset_dir = output_dir / DATASET_DIR
    ImageDAO(dataset_dir).write_dataset(images)
    outputs = {
        "dataset": dataset_dir,
        "relationships": RelationshipDAO.write(db, output_dir / RELATIONSHIPS_FILE),
    }
    if with_features:
        outputs["features"] = FeatureDAO.write(FeatureTable.from_images(images), output_dir / FEATURES_FILE)
    return outputs


# --------------------------------------------------
# train
# --------------------------------------------------
def cmd_train(
    model_config: ViTConfig,
    train_config: TrainConfig,
    dataset_dir: Path,
    output_dir: Path,
    resume_from: Optional[Path] = None,
    channels: Optional[Sequence[str]] = None,
    device: str = "cpu",
) -> Dict[str, Path]:
    images = load_images(dataset_dir, channels)
    n_channels = images[0].n_channels
    if train_config.objective != "CA_MAE" and model_config.in_chans != n_channels:
        raise ChannelMismatchError(
            f"Model config expects {model_config.in_chans} channels, dataset has {n_channels}"
        )

    seed = train_config.seed
    if train_config.objective == "MAE":
        model = build_mae(model_config, seed)
    elif train_config.objective == "CA_MAE":
        model = build_ca_mae(model_config.model_copy(update={"in_chans": n_channels}), seed)
    else:
        model = build_classifier(model_config, len(label_index(images)), seed)

    trainer = Trainer(model, train_config, output_dir=output_dir, device=device)
    _, curve = trainer.fit(images, resume_from=resume_from)
    if trainer.last_checkpoint is None:
        raise EmptyInputError("Training finished without writing a checkpoint")
    checkpoint = output_dir / CHECKPOINT_FILE
    shutil.copyfile(trainer.last_checkpoint, checkpoint)
    return {"checkpoint": checkpoint, "loss_curve": curve.to_csv(output_dir / LOSS_CURVE_FILE)}


# --------------------------------------------------
# embed
# --------------------------------------------------
def cmd_embed(
    dataset_dir: Path,
    output_dir: Path,
    checkpoint: Optional[Path] = None,
    baseline: Optional[str] = None,
    mode: EmbedMode = EmbedMode.MEAN_ALL,
    channels: Optional[Sequence[str]] = None,
    seed: int = 0,
    workers: int = 1,
) -> Dict[str, Path]:
    images = load_images(dataset_dir, channels)
    model = load_checkpoint(checkpoint).model if checkpoint is not None else None
    embedder = WellEmbedder(model=model, baseline=baseline, mode=mode, seed=seed, workers=workers)
    table = embedder.embed_dataset(images)
    return {"embeddings": EmbeddingDAO.write(table, output_dir / EMBEDDINGS_STEM)}


# --------------------------------------------------
# transform
# --------------------------------------------------
def cmd_transform(table_stem: Path, pipeline: str, output_dir: Path) -> Dict[str, Path]:
    parse_pipeline(pipeline)
    table = run_pipeline(EmbeddingDAO.read(table_stem), pipeline)
    return {"embeddings": EmbeddingDAO.write(table, output_dir / EMBEDDINGS_STEM)}


# --------------------------------------------------
# benchmark
# --------------------------------------------------
def _regression_summary(table: EmbeddingTable, features: FeatureTable, test_experiment: Optional[str],
                        seed: int, workers: int) -> Dict[str, Dict[str, float]]:
    experiments = sorted(table.metadata["experiment_id"].unique())
    if len(experiments) < 2:
        raise InvalidConfigError("Feature regression needs at least two experiments (train and test)")
    test_experiment = test_experiment or experiments[-1]
    if test_experiment not in experiments:
        raise InvalidConfigError(f"Unknown test experiment {test_experiment!r}; have {experiments}")
    test_mask = (table.metadata["experiment_id"] == test_experiment).to_numpy()
    train, test = table.subset(~test_mask), table.subset(test_mask)
    train_features = skew_transform(features.align(train.metadata["well_id"].tolist()))
    test_features = skew_transform(features.align(test.metadata["well_id"].tolist()))
    report = fit_feature_regressors(train.vectors, train_features, test.vectors, test_features,
                                    seed=seed, workers=workers)
    return report.to_dict()["category_median_r2"]


def cmd_benchmark(
    table_stem: Path,
    output_dir: Path,
    db_files: Sequence[Path] = (),
    pipelines: Sequence[str] = ("none",),
    retrieval_tasks: Sequence[str] = (),
    sibling_db_file: Optional[Path] = None,
    feature_file: Optional[Path] = None,
    test_experiment: Optional[str] = None,
    tail_pct: float = 5.0,
    n_permutations: int = 1000,
    q_threshold: float = 0.05,
    random_baseline: bool = False,
    context: Optional[Dict[str, str]] = None,
    seed: int = 0,
    workers: int = 1,
) -> Dict[str, Path]:
    """
    Evaluate each transform pipeline on one embedding table. Nothing is
    written unless every requested benchmark completes.
    """
    for p in pipelines:
        parse_pipeline(p)
    table = EmbeddingDAO.read(table_stem)
    dbs: List[RelationshipDB] = [RelationshipDAO.read(f) for f in db_files]
    sibling_db = RelationshipDAO.read(sibling_db_file) if sibling_db_file else None
    features = FeatureDAO.read(feature_file) if feature_file else None
    context = context or {}

    logger.info(f"Benchmarking {len(table)} wells over pipelines {list(pipelines)}")
    report = BenchmarkReport(embedding=Path(table_stem).name, tail_pct=tail_pct)
    for pipeline in pipelines:
        transformed = run_pipeline(table, pipeline)
        if dbs:
            matrix = perturbation_embeddings(transformed)
            for db in dbs:
                report.add_recall(pipeline, db.name, recall_for_matrix(matrix.vectors, matrix.ids, db, tail_pct))
        for kind in retrieval_tasks:
            task = build_retrieval_task(transformed, RetrievalKind(kind.upper()), sibling_db=sibling_db,
                                        n_permutations=n_permutations, q_threshold=q_threshold)
            result = retrieval_benchmark(transformed.vectors, task, seed=seed, workers=workers)
            report.retrieval.append(RetrievalEntry(
                task=task.task.value,
                pipeline=pipeline,
                fraction_retrieved=result.fraction_retrieved,
                n_queries=len(result.q_values),
                cell_type=context.get("cell_type"),
                modality=context.get("modality"),
                time_point=context.get("time_point"),
            ))

    if random_baseline and dbs:
        ids = sorted(table.metadata.loc[~table.control_mask, "perturbation_id"].unique())
        vectors = random_embeddings(len(ids), seed=seed)
        for db in dbs:
            report.add_recall("random", db.name, recall_for_matrix(vectors, ids, db, tail_pct))

    if features is not None:
        first = run_pipeline(table, pipelines[0])
        report.feature_regression = _regression_summary(first, features, test_experiment, seed, workers)

    return {"report": report.write_json(output_dir / REPORT_FILE)}


# --------------------------------------------------
# report
# --------------------------------------------------
def cmd_report(report_path: Path, output_dir: Path, markdown: bool = False) -> Dict[str, Path]:
    report = BenchmarkReport.read_json(report_path)
    if markdown:
        path = output_dir / "report.md"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(report.to_markdown() + "\n", encoding="utf-8")
    else:
        path = report.write_json(output_dir / REPORT_FILE)
    return {"report": path}
