import warnings

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from oracles import protocol_by_definition

from sa_reid.dataset import Sample, generate_toy
from sa_reid.exceptions import ConfigurationError, DimensionError, SaReidError
from sa_reid.model import ModelConfig, StageConfig, init_params
from sa_reid.retrieval import (
    RankingResult,
    average_precision,
    distance_matrix,
    evaluate_model,
    evaluate_protocol,
    format_ranking_report,
    per_query_ap_table,
)


def test_distance_matrix_basics(rng):
    assert_array_equal(distance_matrix([[0.0, 0.0]], [[3.0, 4.0], [0.0, 0.0]]), [[5.0, 0.0]])
    queries, gallery = rng.standard_normal((4, 6)), rng.standard_normal((5, 6))
    expected = np.array([[np.sqrt(np.sum((q - g) ** 2)) for g in gallery] for q in queries])
    assert_allclose(distance_matrix(queries, gallery), expected, rtol=0, atol=1e-12)
    assert_array_equal(np.diag(distance_matrix(queries, queries)), 0.0)
    with pytest.raises(DimensionError):
        distance_matrix(queries, rng.standard_normal((2, 5)))


def test_average_precision_of_interleaved_hits():
    assert average_precision(np.array([False, True, False, True])) == 0.5
    assert average_precision(np.array([True, True])) == 1.0


def test_single_query_hand_computed():
    # gallery ranked: miss, hit, miss, hit
    dist = np.array([[0.1, 0.2, 0.3, 0.4]])
    result = evaluate_protocol(dist, [(1, 0)], [(2, 1), (1, 1), (3, 1), (1, 1)], max_rank=4)
    assert result.map == 0.5
    assert result.rank(1) == 0.0
    assert result.rank(2) == 1.0
    assert result.per_query_ap == [(0, 0.5)]


def test_perfect_ordering():
    dist = np.array([[0.0, 1.0, 2.0], [2.0, 1.0, 0.0]])
    result = evaluate_protocol(dist, [(1, 0), (2, 0)], [(1, 1), (3, 1), (2, 1)], max_rank=3)
    assert result.rank(1) == 1.0
    assert result.map == 1.0
    assert result.skipped_queries == []


def test_same_camera_matches_are_junk():
    dist = np.array([[0.0, 1.0], [0.0, 1.0]])
    with pytest.warns(UserWarning, match="Skipped 1 queries"):
        result = evaluate_protocol(dist, [(1, 0), (2, 0)], [(1, 0), (2, 1)], max_rank=2)
    assert result.skipped_queries == [0]
    assert result.per_query_ap == [(1, 0.5)]
    assert result.map == 0.5


def test_all_queries_skipped_is_an_error():
    with pytest.raises(SaReidError):
        evaluate_protocol(np.zeros((1, 1)), [(1, 0)], [(1, 0)])


def test_protocol_input_errors():
    with pytest.raises(ConfigurationError):
        evaluate_protocol(np.zeros((1, 1)), [(1, 0)], [(1, 1)], max_rank=0)
    with pytest.raises(DimensionError):
        evaluate_protocol(np.zeros((1, 2)), [(1, 0)], [(1, 1)])


def test_ties_are_broken_by_gallery_index():
    dist = np.zeros((1, 3))
    result = evaluate_protocol(dist, [(1, 0)], [(2, 1), (1, 1), (1, 1)], max_rank=3)
    assert result.rank(1) == 0.0
    assert np.isclose(result.map, (1 / 2 + 2 / 3) / 2)


def test_matches_definition_on_small_galleries():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        num_queries, num_gallery = rng.integers(1, 4), rng.integers(1, 6)
        query_meta = [tuple(meta) for meta in rng.integers(0, 3, size=(num_queries, 2))]
        gallery_meta = [tuple(meta) for meta in rng.integers(0, 3, size=(num_gallery, 2))]
        # a coarse grid of distances produces ties
        dist = rng.integers(0, 4, size=(num_queries, num_gallery)).astype(float)
        expected = protocol_by_definition(dist, query_meta, gallery_meta, max_rank=5)
        if len(expected[2]) == num_queries:
            with pytest.raises(SaReidError):
                evaluate_protocol(dist, query_meta, gallery_meta, max_rank=5)
            continue
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            result = evaluate_protocol(dist, query_meta, gallery_meta, max_rank=5)
        assert_allclose(result.cmc, expected[0], rtol=0, atol=1e-12)
        assert abs(result.map - expected[1]) < 1e-12
        assert result.skipped_queries == expected[2]


def test_monotone_distance_transform_leaves_result_unchanged():
    rng = np.random.default_rng(1)
    dist = rng.random((6, 12))
    query_meta = [(identity, 0) for identity in range(6)]
    gallery_meta = [(identity % 6, 1) for identity in range(12)]
    result = evaluate_protocol(dist, query_meta, gallery_meta)
    transformed = evaluate_protocol(np.exp(3.0 * dist) + 7.0, query_meta, gallery_meta)
    assert_array_equal(result.cmc, transformed.cmc)
    assert result.map == transformed.map
    assert np.all(np.diff(result.cmc) >= 0)


def test_gallery_permutation_with_distinct_distances():
    rng = np.random.default_rng(2)
    dist = rng.random((4, 10))
    query_meta = [(identity, 0) for identity in range(4)]
    gallery_meta = [(int(identity), 1) for identity in rng.integers(0, 4, size=10)]
    gallery_meta[:4] = [(identity, 1) for identity in range(4)]
    permutation = rng.permutation(10)
    result = evaluate_protocol(dist, query_meta, gallery_meta)
    permuted = evaluate_protocol(dist[:, permutation], query_meta, [gallery_meta[i] for i in permutation])
    assert_array_equal(result.cmc, permuted.cmc)
    assert np.isclose(result.map, permuted.map, rtol=0, atol=1e-15)


def test_cmc_reaches_one_at_largest_filtered_gallery():
    rng = np.random.default_rng(3)
    dist = rng.random((3, 6))
    result = evaluate_protocol(dist, [(0, 0), (1, 0), (2, 0)], [(i % 3, 1) for i in range(6)], max_rank=6)
    assert result.rank(6) == 1.0


def test_report_and_table():
    result = RankingResult(
        cmc=np.linspace(0.5, 1.0, 10), map=0.25, per_query_ap=[(0, 0.25), (2, 0.25)], skipped_queries=[1]
    )
    lines = format_ranking_report(result).splitlines()
    assert [line.split(" = ")[0] for line in lines] == ["cmc_1", "cmc_5", "cmc_10", "map", "skipped"]
    assert lines[-1] == "skipped = 1"
    table = per_query_ap_table(result)
    assert list(table.columns) == ["query_index", "average_precision"]
    assert table["query_index"].tolist() == [0, 2]


def test_rank_beyond_max_rank_saturates():
    result = RankingResult(cmc=np.array([0.5, 0.75]), map=0.5)
    with pytest.warns(UserWarning):
        assert result.rank(10) == 0.75
    with pytest.raises(ConfigurationError):
        result.rank(0)


def test_gallery_copies_from_other_camera_rank_first(rng):
    cfg = ModelConfig(
        stages=(StageConfig(out_channels=4), StageConfig(out_channels=4, downsample=False)),
        input_shape=(3, 8, 4),
        num_classes=2,
        reduced_dim=3,
    )
    params = init_params(cfg)
    images = [rng.random(cfg.input_shape) for _ in range(4)]
    samples = [Sample(image=image, identity=i, camera=0, split="query") for i, image in enumerate(images)]
    samples += [Sample(image=image.copy(), identity=i, camera=1, split="gallery") for i, image in enumerate(images)]
    result = evaluate_model(params, cfg, samples, max_rank=4)
    assert result.rank(1) == 1.0
    assert result.map == 1.0


def test_evaluation_is_deterministic(small_toy_spec):
    cfg = ModelConfig(input_shape=(3, 16, 8), num_classes=3, m=1)
    params = init_params(cfg)
    samples = generate_toy(small_toy_spec)
    first, second = evaluate_model(params, cfg, samples), evaluate_model(params, cfg, samples)
    assert_array_equal(first.cmc, second.cmc)
    assert first.map == second.map
    assert first.per_query_ap == second.per_query_ap


def test_evaluation_needs_query_and_gallery(small_toy_spec):
    samples = [sample for sample in generate_toy(small_toy_spec) if sample.split != "gallery"]
    cfg = ModelConfig(input_shape=(3, 16, 8), num_classes=3, m=1)
    with pytest.raises(SaReidError):
        evaluate_model(init_params(cfg), cfg, samples)


@pytest.mark.slow
def test_untrained_model_map_matches_random_ranking():
    from sa_reid.dataset import ToySpec

    spec = ToySpec(num_identities=40, images_per_identity_per_camera=3, noise_std=0.02, seed=5)
    samples = generate_toy(spec)
    cfg = ModelConfig(num_classes=20, seed=3)
    result = evaluate_model(init_params(cfg), cfg, samples)

    query = [(s.identity, s.camera) for s in samples if s.split == "query"]
    gallery = [(s.identity, s.camera) for s in samples if s.split == "gallery"]
    rng = np.random.default_rng(0)
    random_maps = [
        evaluate_protocol(rng.random((len(query), len(gallery))), query, gallery).map for _ in range(200)
    ]
    mean, std = np.mean(random_maps), np.std(random_maps)
    # untrained features still carry color information, so the model may only do better than chance
    assert result.map >= mean - 3 * std
