from dataclasses import dataclass, field
from typing import List, Sequence, Tuple
from warnings import warn

import numpy as np
import pandas as pd

from sa_reid.exceptions import ConfigurationError, DimensionError, SaReidError
from sa_reid.numerics import Tensor, as_tensor

REPORT_RANKS = (1, 5, 10)


@dataclass
class RankingResult:
    """
    Retrieval scores of a query set against a gallery.

    Attributes
    ----------
    cmc : np.ndarray
        ``cmc[k - 1]`` is the fraction of evaluated queries whose first true match is at rank k or better.
    map : float
        Mean average precision over the evaluated queries.
    per_query_ap : list of (int, float)
        (query index, average precision) of every evaluated query, in query order.
    skipped_queries : list of int
        Queries without any cross-camera match in the gallery; they count in neither denominator.
    """

    cmc: np.ndarray
    map: float
    per_query_ap: List[Tuple[int, float]] = field(default_factory=list)
    skipped_queries: List[int] = field(default_factory=list)

    @property
    def max_rank(self) -> int:
        return len(self.cmc)

    def rank(self, k: int) -> float:
        """CMC at rank ``k`` (1-indexed); ranks beyond ``max_rank`` report the last computed value."""
        if k < 1:
            raise ConfigurationError(f"Ranks are 1-indexed, got {k}.")
        if k > self.max_rank:
            warn(f"Rank {k} exceeds the evaluated maximum rank {self.max_rank}; reporting rank {self.max_rank}.")
            k = self.max_rank
        return float(self.cmc[k - 1])


def distance_matrix(queries: Sequence[Tensor], gallery: Sequence[Tensor]) -> Tensor:
    """
    Euclidean distances between every query and every gallery embedding.

    Parameters
    ----------
    queries : sequence of Tensor
        Q embeddings of dimension D.
    gallery : sequence of Tensor
        G embeddings of dimension D.

    Returns
    -------
    Tensor
        Distances of shape (Q, G). Identical vectors are exactly 0 apart.
    """
    queries = as_tensor(queries, ndim=2, name="queries")
    gallery = as_tensor(gallery, ndim=2, name="gallery")
    if queries.shape[1] != gallery.shape[1]:
        raise DimensionError(
            f"Query embeddings have dimension {queries.shape[1]} but gallery embeddings have {gallery.shape[1]}."
        )
    # explicit differences: identical vectors give exact zeros
    return np.sqrt(((queries[:, np.newaxis, :] - gallery[np.newaxis, :, :]) ** 2).sum(axis=2))


def average_precision(matches: np.ndarray) -> float:
    """Mean of the precision at every true-positive position of a ranked 0/1 list."""
    hit_ranks = np.flatnonzero(matches) + 1
    if not len(hit_ranks):
        return 0.0
    return float(np.mean(np.arange(1, len(hit_ranks) + 1) / hit_ranks))


def evaluate_protocol(
    dist: Tensor,
    query_meta: Sequence[Tuple[int, int]],
    gallery_meta: Sequence[Tuple[int, int]],
    max_rank: int = 10,
) -> RankingResult:
    """
    Single-query cross-camera retrieval scores.

    For every query the gallery is sorted by ascending distance, ties broken by ascending gallery index.
    Gallery items sharing both identity and camera with the query are dropped; a true match has the query's
    identity and another camera.

    Parameters
    ----------
    dist : Tensor
        Distances of shape (Q, G).
    query_meta : sequence of (identity, camera)
        One entry per query.
    gallery_meta : sequence of (identity, camera)
        One entry per gallery item.
    max_rank : int, default: 10
        Length of the CMC curve.

    Returns
    -------
    RankingResult
    """
    if max_rank < 1:
        raise ConfigurationError(f"'max_rank' must be at least 1, got {max_rank}.")
    dist = as_tensor(dist, ndim=2, name="dist")
    query_meta = np.asarray(query_meta, dtype=np.int64).reshape(-1, 2)
    gallery_meta = np.asarray(gallery_meta, dtype=np.int64).reshape(-1, 2)
    if dist.shape != (len(query_meta), len(gallery_meta)):
        raise DimensionError(
            f"Distance matrix of shape {dist.shape} does not match {len(query_meta)} queries "
            f"and {len(gallery_meta)} gallery items."
        )

    first_hits, per_query_ap, skipped_queries = [], [], []
    for query_index, (identity, camera) in enumerate(query_meta):
        order = np.argsort(dist[query_index], kind="stable")
        ranked_identities = gallery_meta[order, 0]
        ranked_cameras = gallery_meta[order, 1]
        same_identity = ranked_identities == identity
        junk = same_identity & (ranked_cameras == camera)
        matches = same_identity[~junk]
        if not matches.any():
            skipped_queries.append(query_index)
            continue
        first_hits.append(int(np.argmax(matches)))
        per_query_ap.append((query_index, average_precision(matches)))

    if not per_query_ap:
        raise SaReidError("No query has a cross-camera match in the gallery; the retrieval scores are undefined.")
    if skipped_queries:
        warn(f"Skipped {len(skipped_queries)} queries without a cross-camera gallery match: {skipped_queries}.")

    first_hits = np.asarray(first_hits)
    cmc = np.array([np.mean(first_hits < k) for k in range(1, max_rank + 1)])
    mean_ap = float(np.mean([ap for _, ap in per_query_ap]))
    return RankingResult(cmc=cmc, map=mean_ap, per_query_ap=per_query_ap, skipped_queries=skipped_queries)


def format_ranking_report(result: RankingResult) -> str:
    """The key-value block printed by the evaluation command: cmc_1, cmc_5, cmc_10, map and skipped."""
    lines = [f"cmc_{k} = {result.rank(k):.6f}" for k in REPORT_RANKS]
    lines.append(f"map = {result.map:.6f}")
    lines.append(f"skipped = {len(result.skipped_queries)}")
    return "\n".join(lines)


def per_query_ap_table(result: RankingResult) -> pd.DataFrame:
    return pd.DataFrame(result.per_query_ap, columns=["query_index", "average_precision"])
