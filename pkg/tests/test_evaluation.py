import numpy as np
import pytest

from star_kge.data import classify_relations
from star_kge.evaluation import evaluate, filtered_rank
from star_kge.model import init_embeddings, score_batch
from conftest import make_store
from oracles import sort_rank


def trained_toy(store, epochs=60, seed=0):
    from star_kge.training import TrainConfig, train

    cfg = TrainConfig(n=8, epochs=epochs, lr=0.2, batch_size=32, seed=seed, init_scale=0.1)
    table, _ = train(store, cfg)
    return table


class TestFilteredRank:
    def test_unique_maximum_ranks_first(self):
        store = make_store([(0, 0, 1), (0, 0, 2)], num_entities=4)
        table = init_embeddings(4, 1, 4, seed=0)
        # make candidate 1 the clear winner for (0, r0)
        table.rel_c[:] = 0.0
        table.rel_tau[0] = 0.0
        table.entity_embeddings[:] = 0.0
        table.rel_tau[0, 0] = 1.0
        table.entity_embeddings[1, 0] = 5.0
        table.entity_embeddings[2, 0] = 3.0
        assert filtered_rank((0, 0, 1), table, store.filter_index) == 1
        # entity 1 is filtered away for the (0, r0, 2) query, so 2 ranks first
        assert filtered_rank((0, 0, 2), table, store.filter_index) == 1

    def test_all_equal_scores_tie_rules(self):
        m = 6
        store = make_store([(0, 0, 1)], num_entities=m)
        table = init_embeddings(m, 1, 4, seed=0)
        table.entity_embeddings[:] = 0.0  # every candidate scores 1.0
        table.rel_c[:] = 0.0
        table.rel_tau[:] = 0.0
        assert filtered_rank((0, 0, 1), table, store.filter_index, "pessimistic") == m
        rng = np.random.default_rng(7)
        draws = [
            filtered_rank((0, 0, 1), table, store.filter_index, "random", rng)
            for _ in range(4000)
        ]
        assert min(draws) == 1 and max(draws) == m
        assert np.mean(draws) == pytest.approx((m + 1) / 2, rel=0.05)

    def test_query_missing_from_filter_rejected(self):
        store = make_store([(0, 0, 1)], num_entities=3)
        table = init_embeddings(3, 1, 4, seed=0)
        with pytest.raises(ValueError, match="filter"):
            filtered_rank((0, 0, 2), table, store.filter_index)

    def test_matches_sort_oracle_on_all_queries(self, rng):
        triples = list(dict.fromkeys(map(tuple, rng.integers(0, 5, size=(12, 3)).tolist())))
        triples = [(h, r % 2, t) for h, r, t in triples]
        store = make_store(triples, num_entities=5, num_relations=2)
        table = init_embeddings(5, 2, 6, init_scale=1.0, seed=3)
        nr = store.num_relations
        for h, r, t in store.train.tolist():
            for query in ((h, r, t), (t, r + nr, h)):
                got = filtered_rank(query, table, store.filter_index)
                scores = score_batch(table, query[0], query[1])
                excluded = store.filter_index[(query[0], query[1])] - {query[2]}
                assert got == sort_rank(scores, query[2], excluded)

    def test_random_tie_rule_matches_sort_oracle_distributionally(self):
        store = make_store([(0, 0, 1)], num_entities=5)
        table = init_embeddings(5, 1, 4, seed=0)
        table.entity_embeddings[:] = 0.0
        table.entity_embeddings[2, :] = 1.0  # one candidate clearly separated
        rng1, rng2 = np.random.default_rng(1), np.random.default_rng(1)
        scores = score_batch(table, 0, 0)
        ours = [
            filtered_rank((0, 0, 1), table, store.filter_index, "random", rng1)
            for _ in range(500)
        ]
        oracle = [sort_rank(scores, 1, set(), "random", rng2) for _ in range(500)]
        assert np.mean(ours) == pytest.approx(np.mean(oracle), rel=0.1)

    def test_filtered_rank_never_exceeds_raw_rank(self, rng):
        triples = list(dict.fromkeys(map(tuple, rng.integers(0, 6, size=(15, 3)).tolist())))
        store = make_store(triples, num_entities=6, num_relations=6)
        table = init_embeddings(6, 6, 4, init_scale=1.0, seed=8)
        for h, r, t in store.train.tolist():
            filtered = filtered_rank((h, r, t), table, store.filter_index)
            scores = score_batch(table, h, r)
            raw = sort_rank(scores, t, set())
            assert filtered <= raw


class TestEvaluate:
    def test_perfectly_ranked_single_triple(self):
        store = make_store([(0, 0, 1)], num_entities=2)
        table = init_embeddings(2, 1, 4, seed=0)
        table.entity_embeddings[:] = 0.0
        table.rel_c[:] = 0.0
        table.rel_tau[:] = 0.0
        table.rel_tau[0, 0] = 1.0  # tail query favors entity 1
        table.rel_tau[1, 1] = 1.0  # head query favors entity 0
        table.entity_embeddings[1, 0] = 1.0
        table.entity_embeddings[0, 1] = 1.0
        report = evaluate("train", table, store)
        assert report.mrr == 1.0
        assert all(v == 1.0 for v in report.hits.values())

    def test_known_rank_arithmetic(self, monkeypatch):
        store = make_store([(0, 0, 1)], num_entities=5)
        table = init_embeddings(5, 1, 4, seed=0)
        ranks = iter([1, 4])
        monkeypatch.setattr(
            "star_kge.evaluation.filtered_rank", lambda *a, **k: next(ranks)
        )
        report = evaluate("train", table, store)
        assert report.mrr == pytest.approx((1 + 0.25) / 2)
        assert report.hits[1] == 0.5
        assert report.hits[3] == 0.5
        assert report.hits[10] == 1.0

    def test_hits_monotone_and_bounded(self, rng):
        triples = list(dict.fromkeys(map(tuple, rng.integers(0, 8, size=(20, 3)).tolist())))
        store = make_store(triples, num_entities=8, num_relations=8)
        table = init_embeddings(8, 8, 4, init_scale=1.0, seed=2)
        report = evaluate("train", table, store)
        assert report.hits[1] <= report.hits[3] <= report.hits[10] <= 1.0
        assert report.mrr >= report.hits[1]

    def test_per_relation_counts_sum_to_queries(self, toy_store):
        table = init_embeddings(toy_store.num_entities, toy_store.num_relations, 4, seed=0)
        report = evaluate("train", table, toy_store)
        assert sum(c for _, c in report.per_relation.values()) == report.num_queries
        assert report.num_queries == 2 * len(toy_store.train)

    def test_per_class_grouping(self, toy_store):
        table = init_embeddings(toy_store.num_entities, toy_store.num_relations, 4, seed=0)
        classes = classify_relations(toy_store)
        report = evaluate("train", table, toy_store, classes)
        assert set(report.per_class) == {c.label for c in classes}

    def test_direction_splits(self, toy_store):
        table = init_embeddings(toy_store.num_entities, toy_store.num_relations, 4, seed=0)
        both = evaluate("train", table, toy_store, direction="both")
        tail = evaluate("train", table, toy_store, direction="tail")
        head = evaluate("train", table, toy_store, direction="head")
        assert both.num_queries == tail.num_queries + head.num_queries
        assert both.mrr == pytest.approx((tail.mrr + head.mrr) / 2)

    def test_empty_split_rejected(self):
        store = make_store([(0, 0, 1)])
        table = init_embeddings(2, 1, 4, seed=0)
        with pytest.raises(ValueError, match="empty"):
            evaluate("valid", table, store)

    def test_invariant_under_entity_relabeling(self, rng):
        triples = [(0, 0, 1), (1, 0, 2), (2, 1, 3), (3, 1, 0), (0, 1, 2)]
        store = make_store(triples, num_entities=4, num_relations=2)
        table = init_embeddings(4, 2, 6, init_scale=1.0, seed=21)
        report = evaluate("train", table, store)

        perm = rng.permutation(4)
        renamed = make_store(
            [(int(perm[h]), r, int(perm[t])) for h, r, t in triples],
            num_entities=4,
            num_relations=2,
        )
        permuted = table.copy()
        permuted.entity_embeddings = table.entity_embeddings[np.argsort(perm)]
        renamed_report = evaluate("train", permuted, renamed)
        assert renamed_report.mrr == report.mrr
        assert renamed_report.hits == report.hits

    def test_equals_scalar_path_mean(self, toy_store):
        table = init_embeddings(toy_store.num_entities, toy_store.num_relations, 4, seed=1)
        report = evaluate("test", table, toy_store)
        nr = toy_store.num_relations
        rrs = []
        for h, r, t in toy_store.test.tolist():
            rrs.append(1.0 / filtered_rank((h, r, t), table, toy_store.filter_index))
            rrs.append(1.0 / filtered_rank((t, r + nr, h), table, toy_store.filter_index))
        assert report.mrr == np.mean(rrs)


class TestReportShape:
    def test_json_round_trip(self, toy_store):
        import json

        table = init_embeddings(toy_store.num_entities, toy_store.num_relations, 4, seed=0)
        report = evaluate("train", table, toy_store, classify_relations(toy_store))
        payload = json.loads(json.dumps(report.to_dict()))
        assert payload["num_queries"] == report.num_queries
        assert set(payload["hits"]) == {"1", "3", "10"}

    def test_trained_toy_reaches_mrr_one(self):
        # fully memorizable graph: a 4-cycle plus its reverse relation
        forward = [(i, 0, (i + 1) % 4) for i in range(4)]
        backward = [(t, 1, h) for h, _, t in forward]
        store = make_store(forward + backward, num_entities=4, num_relations=2)
        table = trained_toy(store, epochs=80)
        assert evaluate("train", table, store).mrr == 1.0
