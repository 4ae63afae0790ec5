import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_f1_avg
from relstance.data_io import STANCES, LabeledTweet, Split, Stance
from relstance.evaluation import (
    ConfusionMatrix,
    CvRow,
    FoldMode,
    GridSpec,
    f1_favor_against,
    format_table,
    grid_search,
    kfold_split,
)
from relstance.relemb import Mode, TrainConfig
from relstance.synth import Community, SynthConfig, generate

A, F, N = Stance.AGAINST, Stance.FAVOR, Stance.NONE
labels = st.lists(st.sampled_from(STANCES), min_size=1, max_size=40)


def records(n_users, per_user, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for u in range(n_users):
        for k in range(per_user):
            out.append(LabeledTweet(f"t{u}_{k}", f"u{u}", "x", STANCES[int(rng.integers(3))]))
    return out


class TestF1:
    def test_worked_example(self):
        r = f1_favor_against([F, F, A, A, N], [F, A, A, A, N])
        assert r.f1_favor == pytest.approx(2 / 3, abs=1e-12)
        assert r.f1_against == pytest.approx(0.8, abs=1e-12)
        assert r.f1_avg == pytest.approx(0.7333, abs=1e-4)

    def test_perfect(self):
        g = [F, A, N, F]
        assert f1_favor_against(g, g).f1_avg == 1.0

    def test_all_none(self):
        assert f1_favor_against([N, N], [N, N]).f1_avg == 0.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            f1_favor_against([F], [F, A])

    @settings(max_examples=200, deadline=None)
    @given(st.data())
    def test_matches_counting_oracle(self, data):
        gold = data.draw(labels)
        pred = data.draw(st.lists(st.sampled_from(STANCES), min_size=len(gold), max_size=len(gold)))
        r = f1_favor_against(gold, pred)
        assert r.f1_avg == brute_f1_avg(gold, pred)
        assert r.f1_avg == (r.f1_against + r.f1_favor) / 2
        assert r.n == len(gold)

    def test_report_json(self):
        r = f1_favor_against([F, A], [F, N])
        d = json.loads(r.to_json())
        assert set(d) == {"f1_against", "f1_favor", "f1_avg", "precision", "recall", "n"}
        assert d["precision"]["NONE"] == 0.0


class TestConfusion:
    def test_counts(self):
        cm = ConfusionMatrix.from_labels([F, F, A, N], [F, A, A, F])
        assert cm.total == 4
        assert cm.counts[1, 1] == 1 and cm.counts[1, 0] == 1 and cm.counts[2, 1] == 1

    def test_tsv(self):
        tsv = ConfusionMatrix.from_labels([A], [N]).to_tsv()
        lines = tsv.splitlines()
        assert lines[0] == "gold\\pred\tAGAINST\tFAVOR\tNONE"
        assert lines[1] == "AGAINST\t0\t0\t1"


class TestKFold:
    def test_by_tweet_sizes(self):
        folds = kfold_split(records(10, 1), 5, seed=0)
        assert [len(v) for _, v in folds] == [2] * 5

    def test_by_user_disjoint(self):
        recs = records(4, 3)
        for tr, va in kfold_split(recs, 2, seed=1, mode=FoldMode.BY_USER):
            assert not ({recs[i].author for i in tr} & {recs[i].author for i in va})

    def test_same_seed(self):
        recs = records(8, 2)
        a = kfold_split(recs, 3, seed=4)
        b = kfold_split(recs, 3, seed=4)
        for (x, y), (p, q) in zip(a, b):
            np.testing.assert_array_equal(x, p)
            np.testing.assert_array_equal(y, q)

    def test_too_many_folds(self):
        with pytest.raises(ValueError):
            kfold_split(records(3, 1), 5)
        with pytest.raises(ValueError):
            kfold_split(records(2, 5), 3, mode="by_user")

    @settings(max_examples=40, deadline=None)
    @given(st.integers(2, 12), st.integers(1, 4), st.integers(2, 5), st.sampled_from(list(FoldMode)),
           st.integers(0, 1000))
    def test_partition(self, n_users, per_user, k, mode, seed):
        recs = records(n_users, per_user, seed)
        groups = n_users if mode is FoldMode.BY_USER else len(recs)
        if k > groups:
            return
        folds = kfold_split(recs, k, seed, mode)
        val = np.concatenate([v for _, v in folds])
        assert sorted(val.tolist()) == list(range(len(recs)))
        for tr, va in folds:
            assert not set(tr.tolist()) & set(va.tolist())
            assert len(tr) + len(va) == len(recs)

    def test_stratified(self):
        recs = [LabeledTweet(f"t{i}", f"u{i}", "x", STANCES[i % 3]) for i in range(30)]
        for _, va in kfold_split(recs, 5, seed=2):
            assert {recs[i].stance for i in va} == set(STANCES)


class TestGridSearch:
    @staticmethod
    def informative_retweets():
        cfg = SynthConfig(communities=[Community(s, 30, 1.0) for s in STANCES],
                          p_in=0.1, p_out=0.01, friend_p_in=0.05, friend_p_out=0.05,
                          tweets_per_user=2, text_noise=1.0, seed=4)
        return generate(cfg)

    def test_single_cell(self):
        data = self.informative_retweets()
        grid = GridSpec(dims=[5], Cs=[1.0], gammas=[1.0], folds=2, modes=[Mode.RETWEET])
        res = grid_search(data.tweets.train, data.retweets, data.friends, grid, "relemb-svm",
                          TrainConfig(epochs=2))
        assert len(res.table) == 1 and res.best is res.table[0]
        assert (res.best.mode, res.best.dim, res.best.C, res.best.gamma) == ("RETWEET", 5, 1.0, 1.0)

    def test_selects_informative_edges(self):
        data = self.informative_retweets()
        grid = GridSpec(dims=[10], Cs=[10.0], gammas=[1.0], folds=3, modes=[Mode.RETWEET, Mode.FRIENDS])
        res = grid_search(data.tweets.train, data.retweets, data.friends, grid, "relemb-svm",
                          TrainConfig(epochs=50, initial_lr=0.1))
        assert res.best.mode == "RETWEET"
        by_mode = {r.mode: r.mean_f1 for r in res.table}
        assert by_mode["RETWEET"] > by_mode["FRIENDS"]

    def test_text_system_table(self):
        data = self.informative_retweets()
        grid = GridSpec(Cs=[1.0, 10.0], gammas=[0.5], folds=2)
        res = grid_search(data.tweets.train, data.retweets, data.friends, grid, "tfidf-svm")
        assert [(r.mode, r.dim, r.C) for r in res.table] == [(None, None, 1.0), (None, None, 10.0)]
        assert "mean_f1" in format_table(res.table)
        assert json.loads(res.to_json())["best"]["system"] == "tfidf-svm"

    def test_reproducible(self):
        data = self.informative_retweets()
        grid = GridSpec(dims=[4], Cs=[1.0], gammas=[1.0], folds=2, modes=[Mode.MIXED], seed=3)
        a = grid_search(data.tweets.train, data.retweets, data.friends, grid, "relemb-svm", TrainConfig(epochs=2))
        b = grid_search(data.tweets.train, data.retweets, data.friends, grid, "relemb-svm", TrainConfig(epochs=2))
        assert a.to_json() == b.to_json()

    def test_tie_break_prefers_small(self):
        from relstance.evaluation import _rank_key
        rows = [CvRow("s", "RETWEET", 20, 1.0, 1.0, [0.5]), CvRow("s", "RETWEET", 10, 10.0, 1.0, [0.5]),
                CvRow("s", "RETWEET", 10, 1.0, 0.1, [0.5]), CvRow("s", "RETWEET", 20, 1.0, 1.0, [0.4])]
        assert min(rows, key=_rank_key) is rows[2]

    def test_invalid_grid(self):
        with pytest.raises(ValueError):
            GridSpec(folds=1).validate()
        with pytest.raises(ValueError):
            GridSpec(dims=[]).validate()
