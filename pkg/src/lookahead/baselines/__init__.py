from .classifiers import MLCRouter, QueryClassifier, ZooterRouter
from .embeddings import BackboneEmbedder, EmbeddingProvider, FileEmbeddings, unit_rows
from .neighbors import ClusterModel, KMeansRouter, KNNRouter, kmeans_fit, kmeans_pp_init, knn_scores
from .reference import (OracleRouter, RandomRouter, RewardSelectRouter, oracle_route, random_route,
                        reward_select)

__all__ = [
    "MLCRouter", "QueryClassifier", "ZooterRouter",
    "EmbeddingProvider", "BackboneEmbedder", "FileEmbeddings", "unit_rows",
    "knn_scores", "KNNRouter", "kmeans_fit", "kmeans_pp_init", "ClusterModel", "KMeansRouter",
    "random_route", "oracle_route", "reward_select", "RandomRouter", "OracleRouter", "RewardSelectRouter",
]
