"""On-disk formats for images, embeddings, relationships and features."""

# Explicit exports for easier importing
from phenom.db.embedding_dao import EmbeddingDAO
from phenom.db.feature_dao import FeatureDAO
from phenom.db.image_dao import ImageDAO
from phenom.db.relationship_dao import RelationshipDAO

__all__ = [
    "EmbeddingDAO",
    "FeatureDAO",
    "ImageDAO",
    "RelationshipDAO"
]
