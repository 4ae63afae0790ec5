import io
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import fd_gradients, intra_inter_cosine, relative_error, sgns_pair_loss
from relstance.data_io import InteractionSet, Kind, Stance, write_embedding
from relstance.relemb import (
    Mode,
    RelationalEmbedding,
    TrainConfig,
    Trainer,
    TrainerState,
    TrainingError,
    build_corpus,
    build_vocab,
    keep_probability,
    mean_loss,
    negative_table,
    pair_loss,
    sgns_step,
    train,
)
from relstance.synth import Community, SynthConfig, generate


def pairs_of(*edges, kind=Kind.RETWEET) -> InteractionSet:
    s = InteractionSet()
    for a, b in edges:
        s.add(a, b, kind)
    return s


def two_cliques(size=8, repeat=2) -> tuple[InteractionSet, dict[str, int]]:
    s = InteractionSet()
    group = {}
    for g in range(2):
        members = [f"g{g}u{i}" for i in range(size)]
        for u in members:
            group[u] = g
        for _ in range(repeat):
            for a in members:
                for b in members:
                    if a != b:
                        s.add(a, b)
    return s, group


def random_state(rng, U, D) -> TrainerState:
    vocab = build_vocab(pairs_of(*[(f"u{i}", f"u{(i + 1) % U}") for i in range(U)]))
    # magnitudes kept away from 0 so relative errors stay meaningful
    def draw():
        return rng.uniform(0.1, 1.0, size=(U, D)) * rng.choice([-1.0, 1.0], size=(U, D))
    return TrainerState(vocab, draw(), draw())


class TestVocab:
    def test_counts(self):
        v = build_vocab(pairs_of(("a", "b"), ("b", "c"), ("a", "b")))
        assert v.U == 3
        tf = dict(zip(v.users, v.target_freq))
        sf = dict(zip(v.users, v.source_freq))
        assert (tf["b"], tf["c"], sf["a"], sf["b"]) == (2, 1, 2, 1)
        assert sorted(v.index.values()) == list(range(3))

    def test_self_loop(self):
        assert build_vocab(pairs_of(("a", "a"))).U == 1

    def test_empty(self):
        with pytest.raises(ValueError):
            build_vocab(InteractionSet())

    def test_every_user_has_positive_freq(self):
        v = build_vocab(pairs_of(("a", "b"), ("c", "b")))
        assert (v.freq >= 1).all()


class TestNegativeTable:
    def test_power_law(self):
        s = pairs_of(("x", "a"), *[("x", "b")] * 16)
        v = build_vocab(s)
        P = dict(zip(v.users, negative_table(v, 0.75)))
        np.testing.assert_allclose([P["a"], P["b"]], [1 / 9, 8 / 9], rtol=1e-12)
        assert P["x"] == 0.0

    def test_uniform_at_zero_power(self):
        v = build_vocab(pairs_of(("a", "b"), ("a", "c"), ("a", "c"), ("b", "c")))
        P = dict(zip(v.users, negative_table(v, 0.0)))
        np.testing.assert_allclose([P["b"], P["c"]], [0.5, 0.5])

    def test_proportional_at_one(self):
        v = build_vocab(pairs_of(("z", "a"), ("z", "a"), ("z", "a"), ("z", "b")))
        assert dict(zip(v.users, negative_table(v, 1.0)))["a"] == pytest.approx(0.75)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.integers(1, 50), min_size=2, max_size=10), st.floats(0.05, 1.0))
    def test_normalized_and_monotone(self, freqs, alpha):
        s = InteractionSet()
        for i, f in enumerate(freqs):
            for _ in range(f):
                s.add("src", f"t{i}")
        v = build_vocab(s)
        P = negative_table(v, alpha)
        assert abs(P.sum() - 1.0) < 1e-12
        order = np.argsort(v.target_freq, kind="stable")
        tf, p = v.target_freq[order], P[order]
        for a in range(len(tf) - 1):
            if tf[a] < tf[a + 1]:
                assert p[a] < p[a + 1]


class TestKeepProbability:
    def test_rare_never_dropped(self):
        v = build_vocab(pairs_of(*[("s", f"t{i}") for i in range(10)]))
        assert keep_probability("t0", v, 0.5) == 1.0

    def test_formula(self):
        # target "a" takes 1 of 100 target slots: f = 1e-2
        v = build_vocab(pairs_of(("s", "a"), *[("s", f"t{i}") for i in range(99)]))
        assert keep_probability("a", v, 1e-4) == pytest.approx(0.11, abs=1e-12)

    def test_disabled_at_one(self):
        v = build_vocab(pairs_of(*[("s", "a")] * 9, ("s", "b")))
        assert all(keep_probability(u, v, 1.0) == 1.0 for u in v.users)


class TestSgnsStep:
    def test_worked_example(self):
        v = build_vocab(pairs_of(("s", "t")))
        W, W_out = np.zeros((2, 1)), np.zeros((2, 1))
        s, t = v.index["s"], v.index["t"]
        W[s], W_out[t] = 1.0, 1.0
        state = TrainerState(v, W, W_out)
        loss = sgns_step(state, (s, t), [], 0.1)
        assert loss == pytest.approx(-math.log(1 / (1 + math.exp(-1))), abs=1e-12)
        assert loss == pytest.approx(0.3133, abs=1e-4)
        assert state.W_out[t, 0] == pytest.approx(1.02689, abs=1e-5)
        assert state.step == 1

    def test_zero_vectors(self):
        v = build_vocab(pairs_of(("a", "b"), ("b", "c")))
        state = TrainerState(v, np.zeros((3, 4)), np.zeros((3, 4)))
        assert sgns_step(state, (0, 1), [2, 2, 0], 0.05) == pytest.approx(4 * math.log(2), abs=1e-12)

    def test_locality(self):
        rng = np.random.default_rng(0)
        state = random_state(rng, 6, 3)
        W0, O0 = state.W.copy(), state.W_out.copy()
        sgns_step(state, (1, 2), [4, 4, 0], 0.5)
        changed_W = np.flatnonzero((state.W != W0).any(axis=1))
        changed_O = np.flatnonzero((state.W_out != O0).any(axis=1))
        assert changed_W.tolist() == [1]
        assert changed_O.tolist() == [0, 2, 4]
        np.testing.assert_array_equal(state.W[[0, 2, 3, 4, 5]], W0[[0, 2, 3, 4, 5]])
        np.testing.assert_array_equal(state.W_out[[1, 3, 5]], O0[[1, 3, 5]])

    def test_loss_matches_oracle(self):
        rng = np.random.default_rng(1)
        state = random_state(rng, 5, 3)
        rows = [3, 0, 4]
        expected = sgns_pair_loss(state.W[2], state.W_out[rows])
        assert pair_loss(state.W[2], state.W_out[rows]) == pytest.approx(expected, rel=1e-12)
        assert sgns_step(state, (2, 3), [0, 4], 0.1) == pytest.approx(expected, rel=1e-12)

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(7)
        worst = 0.0
        for _ in range(100):
            U, D = int(rng.integers(1, 6)), int(rng.integers(1, 4))
            state = random_state(rng, U, D)
            s, t = int(rng.integers(U)), int(rng.integers(U))
            negs = rng.integers(U, size=int(rng.integers(0, 4))).tolist()
            rows = [t, *negs]
            g_src, g_out = fd_gradients(state.W, state.W_out, s, rows)
            W0, O0 = state.W.copy(), state.W_out.copy()
            lr = 1.0
            sgns_step(state, (s, t), negs, lr)
            worst = max(worst, relative_error(-(state.W[s] - W0[s]) / lr, g_src))
            for r, g in g_out.items():
                worst = max(worst, relative_error(-(state.W_out[r] - O0[r]) / lr, g))
        assert worst < 1e-4

    def test_non_finite_raises(self):
        v = build_vocab(pairs_of(("a", "b")))
        W = np.array([[np.inf], [0.0]])
        state = TrainerState(v, W, np.ones((2, 1)))
        with pytest.raises(TrainingError):
            sgns_step(state, (0, 1), [], 0.1)

    def test_bad_arguments(self):
        v = build_vocab(pairs_of(("a", "b")))
        state = TrainerState(v, np.zeros((2, 1)), np.zeros((2, 1)))
        with pytest.raises(ValueError):
            sgns_step(state, (0, 1), [], 0.0)
        with pytest.raises(IndexError):
            sgns_step(state, (0, 5), [], 0.1)


class TestTrainConfig:
    @pytest.mark.parametrize("field, value", [
        ("dim", 0), ("epochs", 0), ("initial_lr", 0.0), ("negatives_k", 0),
        ("subsample_t", 0.0), ("subsample_t", 1.5), ("ns_power", 1.5), ("threads", 0),
        ("subsample_unit", "word"),
    ])
    def test_invalid(self, field, value):
        with pytest.raises(ValueError):
            TrainConfig(**{field: value}).validate()

    def test_defaults(self):
        cfg = TrainConfig()
        assert (cfg.dim, cfg.epochs, cfg.initial_lr, cfg.negatives_k, cfg.ns_power, cfg.min_lr) == \
            (20, 15, 0.025, 5, 0.75, 1e-4)

    def test_dict_roundtrip(self, tmp_path):
        cfg = TrainConfig(dim=10, seed=9)
        p = tmp_path / "c.json"
        p.write_text(json.dumps(cfg.to_dict()))
        assert TrainConfig.from_json(p) == cfg

    def test_unknown_field(self):
        with pytest.raises(ValueError, match="bogus"):
            TrainConfig.from_dict({"bogus": 1})

    def test_train_rejects_zero_epochs(self):
        with pytest.raises(ValueError):
            train(pairs_of(("a", "b")), TrainConfig(epochs=0))


class TestBuildCorpus:
    rt = pairs_of(("a", "b"), ("b", "c"), ("c", "a"))
    fr = pairs_of(("a", "b"), ("c", "b"), kind=Kind.FRIEND)

    def test_mixed_union(self):
        mixed = build_corpus(self.rt, self.fr, Mode.MIXED)
        assert len(mixed) == 5
        assert sum(1 for p in mixed if (p.source, p.target) == ("a", "b")) == 2

    def test_retweet_ignores_friends(self):
        assert build_corpus(self.rt, self.fr, "retweet") == self.rt

    def test_empty_source(self):
        with pytest.raises(ValueError):
            build_corpus(self.rt, InteractionSet(), "FRIENDS")


class TestEmbedding:
    def test_lookup(self):
        emb = RelationalEmbedding(["u1", "u2"], [[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(emb.lookup("u1"), [1.0, 2.0])
        np.testing.assert_array_equal(emb.lookup("ghost"), [0.0, 0.0])
        assert emb.is_known("u2") and not emb.is_known("ghost")

    def test_lookup_does_not_mutate(self):
        emb = RelationalEmbedding(["u1"], [[1.0, 2.0]])
        v = emb.lookup("u1")
        v[:] = 99
        np.testing.assert_array_equal(emb.vectors, [[1.0, 2.0]])
        with pytest.raises(ValueError):
            emb.vectors[0, 0] = 5.0

    def test_lookup_many(self):
        emb = RelationalEmbedding(["u1"], [[1.0, 2.0]])
        np.testing.assert_array_equal(emb.lookup_many(["x", "u1"]), [[0, 0], [1, 2]])

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            RelationalEmbedding(["a", "a"], np.zeros((2, 2)))
        with pytest.raises(ValueError):
            RelationalEmbedding(["a"], [[np.nan]])


class TestTraining:
    def test_initialization(self):
        v = build_vocab(pairs_of(("a", "b"), ("b", "c")))
        st0 = TrainerState.initial(v, 4, np.random.default_rng(0))
        assert np.all(np.abs(st0.W) <= 0.5 / 4)
        assert not st0.W_out.any()

    def test_two_cliques_separate(self):
        pairs, group = two_cliques()
        emb = train(pairs, TrainConfig(dim=2, epochs=50, seed=3))
        intra, inter = intra_inter_cosine(emb.vectors, [group[u] for u in emb.users])
        assert intra > inter

    def test_deterministic(self):
        pairs, _ = two_cliques(size=5)
        cfg = TrainConfig(dim=4, epochs=3, seed=11)
        a, b = io.StringIO(), io.StringIO()
        write_embedding(train(pairs, cfg), a)
        write_embedding(train(pairs, cfg), b)
        assert a.getvalue() == b.getvalue()

    def test_seed_matters(self):
        pairs, _ = two_cliques(size=5)
        a = train(pairs, TrainConfig(dim=4, epochs=2, seed=1))
        b = train(pairs, TrainConfig(dim=4, epochs=2, seed=2))
        assert a != b

    def test_mean_loss_at_start(self):
        pairs, _ = two_cliques(size=4)
        cfg = TrainConfig(dim=3, negatives_k=4)
        t = Trainer(pairs, cfg)
        assert mean_loss(t.state, pairs, cfg) == pytest.approx(5 * math.log(2), rel=1e-12)

    def test_mean_loss_empty(self):
        pairs, _ = two_cliques(size=3)
        t = Trainer(pairs, TrainConfig())
        with pytest.raises(ValueError):
            mean_loss(t.state, InteractionSet(), t.cfg)

    def test_mean_loss_decreases(self):
        pairs, _ = two_cliques()
        cfg = TrainConfig(dim=2, epochs=20, seed=3)
        t = Trainer(pairs, cfg)
        losses = [mean_loss(t.state, pairs, cfg)]
        for _ in range(cfg.epochs):
            t.run_epoch()
            losses.append(mean_loss(t.state, pairs, cfg))
        for prev, cur in zip(losses, losses[1:]):
            assert cur <= prev * 1.05
        assert losses[-1] < losses[0]

    def test_lr_schedule(self):
        pairs, _ = two_cliques(size=3)
        t = Trainer(pairs, TrainConfig(epochs=4))
        assert t.lr_at(0) == pytest.approx(0.025)
        assert t.lr_at(t.total_steps) == pytest.approx(1e-4)
        assert t.lr_at(t.total_steps // 2) == pytest.approx((0.025 + 1e-4) / 2, rel=1e-3)

    def test_epoch_logging(self, caplog):
        pairs, _ = two_cliques(size=3)
        with caplog.at_level("INFO", logger="relstance.relemb"):
            train(pairs, TrainConfig(epochs=2))
        lines = [r.getMessage() for r in caplog.records if "epoch" in r.getMessage()]
        assert len(lines) == 2 and "mean loss" in lines[0] and "lr" in lines[0]

    def test_fully_subsampled_epoch_warns(self, caplog):
        # one target holding every slot has keep = sqrt(t) + t, tiny for small t
        pairs = pairs_of(("a", "b"))
        t = Trainer(pairs, TrainConfig(epochs=1, subsample_t=1e-12, seed=0))
        with caplog.at_level("WARNING", logger="relstance.relemb"):
            assert math.isnan(t.run_epoch())
        assert "subsampling" in caplog.text

    def test_pair_subsampling_unit(self):
        pairs, _ = two_cliques(size=4)
        emb = train(pairs, TrainConfig(dim=3, epochs=2, subsample_unit="pair"))
        assert emb.vectors.shape == (8, 3)

    def test_threads_run(self):
        pairs, _ = two_cliques(size=4)
        emb = train(pairs, TrainConfig(dim=3, epochs=2, threads=2))
        assert np.isfinite(emb.vectors).all()

    def test_negatives_exclude_target(self):
        pairs, _ = two_cliques(size=3)
        t = Trainer(pairs, TrainConfig(negatives_k=5, seed=0))
        targets = t.tgt
        for tgt, row in zip(targets.tolist(), t._negatives(targets)):
            assert tgt not in row


class TestCommunitySeparation:
    def test_planted_partition_margin(self):
        cfg = SynthConfig(communities=[Community(Stance.FAVOR, 50, 1.0), Community(Stance.AGAINST, 50, 1.0)],
                          p_in=0.1, p_out=0.02, pairs_per_user=20, seed=0)
        data = generate(cfg)
        emb = train(data.retweets, TrainConfig(dim=10, epochs=50, initial_lr=0.1, seed=1))
        intra, inter = intra_inter_cosine(emb.vectors, [data.community[u].value for u in emb.users])
        assert intra - inter >= 0.2
