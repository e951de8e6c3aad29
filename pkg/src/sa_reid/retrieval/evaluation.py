from typing import List, Sequence

import numpy as np
from tqdm import tqdm

from sa_reid.dataset import Sample, select_split
from sa_reid.exceptions import SaReidError
from sa_reid.model import ModelConfig, Params, extract_embedding
from sa_reid.numerics import Tensor
from sa_reid.retrieval.ranking import RankingResult, distance_matrix, evaluate_protocol


def extract_embeddings(
    params: Params, cfg: ModelConfig, samples: Sequence[Sample], verbose: bool = False, description: str = "Embedding"
) -> List[Tensor]:
    """Embeddings of ``samples`` in input order."""
    return [
        extract_embedding(params, cfg, sample.image)
        for sample in tqdm(samples, desc=description, unit="image", disable=not verbose)
    ]


def evaluate_model(
    params: Params, cfg: ModelConfig, samples: Sequence[Sample], max_rank: int = 10, verbose: bool = False
) -> RankingResult:
    """
    Embed the query and gallery samples and score the cross-camera retrieval.

    Parameters
    ----------
    params : Params
    cfg : ModelConfig
    samples : sequence of Sample
        Must contain 'query' and 'gallery' samples; 'train' samples are ignored.
    max_rank : int, default: 10
    verbose : bool, default: False
        Show progress bars over the embedded images.
    """
    queries = select_split(samples, "query")
    gallery = select_split(samples, "gallery")
    if not queries or not gallery:
        raise SaReidError(f"Evaluation needs query and gallery samples, got {len(queries)} and {len(gallery)}.")
    query_embeddings = extract_embeddings(params, cfg, queries, verbose=verbose, description="Embedding queries")
    gallery_embeddings = extract_embeddings(params, cfg, gallery, verbose=verbose, description="Embedding gallery")
    dist = distance_matrix(np.stack(query_embeddings), np.stack(gallery_embeddings))
    return evaluate_protocol(
        dist,
        query_meta=[(sample.identity, sample.camera) for sample in queries],
        gallery_meta=[(sample.identity, sample.camera) for sample in gallery],
        max_rank=max_rank,
    )
