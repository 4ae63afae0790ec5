"""Seeded planted-community datasets: interaction pairs, labeled tweets and a
toy word-vector table.

Each community carries one stance. A user's own stance equals the community
stance with probability ``signal`` (otherwise one of the other two labels,
uniformly) and all of that user's tweets carry it. Interaction targets are
drawn with weight ``p_in`` inside the user's community and ``p_out`` outside.
Tweet texts mix tokens from a pool tied to the tweet's stance with shared
noise tokens at rate ``text_noise``.
"""
from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .data_io import (
    STANCES,
    InteractionPair,
    InteractionSet,
    Kind,
    LabeledTweet,
    Split,
    Stance,
    TweetDataset,
    WordVectorTable,
    serialize_edges,
    write_tweets,
    write_word_vectors,
)


@dataclass
class Community:
    stance: Stance
    size: int
    signal: float = 1.0

    def __post_init__(self):
        self.stance = Stance(self.stance)


@dataclass
class SynthConfig:
    communities: list[Community] = field(default_factory=lambda: [
        Community(s, 100, 0.95) for s in STANCES])
    p_in: float = 0.1
    p_out: float = 0.01
    pairs_per_user: int = 20
    # friend edges default to the retweet mixture
    friend_p_in: float | None = None
    friend_p_out: float | None = None
    friends_per_user: int | None = None
    tweets_per_user: int = 4
    tokens_per_tweet: int = 8
    stance_vocab: int = 150
    noise_vocab: int = 400
    text_noise: float = 0.5
    unknown_user_fraction: float = 0.0
    split: str = "tweet"
    test_fraction: float = 0.2
    wordvec_dim: int = 25
    seed: int = 0
    n_users: int | None = None

    def __post_init__(self):
        self.communities = [c if isinstance(c, Community) else Community(**c) for c in self.communities]
        total = sum(c.size for c in self.communities)
        if self.n_users is None:
            self.n_users = total

    def validate(self) -> None:
        if self.n_users != sum(c.size for c in self.communities):
            raise ValueError("n_users must equal the sum of community sizes")
        if any(c.size < 1 for c in self.communities):
            raise ValueError("community sizes must be positive")
        if any(not 0 <= c.signal <= 1 for c in self.communities):
            raise ValueError("signal must lie in [0, 1]")
        probs = [self.p_in, self.p_out, self.text_noise, self.unknown_user_fraction, self.test_fraction]
        probs += [p for p in (self.friend_p_in, self.friend_p_out) if p is not None]
        if any(not 0 <= p <= 1 for p in probs):
            raise ValueError("probabilities must lie in [0, 1]")
        if self.p_in <= 0:
            raise ValueError("infeasible configuration: p_in must be positive")
        if self.pairs_per_user < 0 or self.tweets_per_user < 1 or self.tokens_per_tweet < 1:
            raise ValueError("pairs_per_user >= 0, tweets_per_user >= 1, tokens_per_tweet >= 1 required")
        if self.split not in ("tweet", "user"):
            raise ValueError("split must be 'tweet' or 'user'")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["communities"] = [{"stance": c.stance.value, "size": c.size, "signal": c.signal}
                            for c in self.communities]
        return d


def preset(name: str, seed: int = 0, **overrides) -> SynthConfig:
    """Fixtures for three regimes of stance/community alignment.

    clean        sharply separated communities, users shared by train and test
    overlap      weaker homophily, noisier labels, some users without relations
    transversal  a small population interacting almost uniformly, with
                 train and test users disjoint
    """
    if name == "clean":
        cfg = SynthConfig(p_in=0.1, p_out=0.01, friend_p_in=0.03, friend_p_out=0.01,
                          text_noise=0.6, seed=seed)
    elif name == "overlap":
        cfg = SynthConfig(communities=[Community(s, 100, 0.85) for s in STANCES],
                          p_in=0.1, p_out=0.03, friend_p_in=0.04, friend_p_out=0.02,
                          text_noise=0.6, unknown_user_fraction=0.1, seed=seed)
    elif name == "transversal":
        cfg = SynthConfig(communities=[Community(s, 40, 0.9) for s in STANCES],
                          p_in=0.05, p_out=0.045, friend_p_in=0.05, friend_p_out=0.045,
                          pairs_per_user=30, text_noise=0.5, split="user", seed=seed)
    else:
        raise ValueError(f"unknown preset {name!r}")
    unknown = sorted(set(overrides) - set(SynthConfig.__dataclass_fields__))
    if unknown:
        raise ValueError(f"unknown SynthConfig field {unknown[0]!r}")
    if not overrides:
        return cfg
    fields = {k: getattr(cfg, k) for k in SynthConfig.__dataclass_fields__}
    if "communities" in overrides and "n_users" not in overrides:
        fields["n_users"] = None
    fields.update(overrides)
    return SynthConfig(**fields)


PRESETS = ("clean", "overlap", "transversal")


class SynthData(NamedTuple):
    retweets: InteractionSet
    friends: InteractionSet
    tweets: TweetDataset
    community: dict[str, Stance]     # planted community of every user
    wordvecs: WordVectorTable


_ONSETS = "b c d f g k l m n p r s t v z".split()
_VOWELS = "a e i o u".split()


def _pseudo_words(rng: np.random.Generator, count: int, taken: set[str]) -> list[str]:
    words = []
    while len(words) < count:
        n_syl = int(rng.integers(2, 4))
        w = "".join(_ONSETS[rng.integers(len(_ONSETS))] + _VOWELS[rng.integers(len(_VOWELS))]
                    for _ in range(n_syl))
        if w not in taken:
            taken.add(w)
            words.append(w)
    return words


def _edges(rng, users, comm_idx, known, p_in, p_out, per_user, kind, replace) -> InteractionSet:
    out = InteractionSet()
    known_idx = np.flatnonzero(known)
    for u in known_idx.tolist():
        cand = known_idx[known_idx != u]
        if len(cand) == 0 or per_user == 0:
            continue
        w = np.where(comm_idx[cand] == comm_idx[u], p_in, p_out)
        if w.sum() <= 0:
            continue
        p = w / w.sum()
        n = per_user if replace else min(per_user, int(np.count_nonzero(w)))
        targets = rng.choice(cand, size=n, replace=replace, p=p)
        for t in targets.tolist():
            out.pairs.append(InteractionPair(users[u], users[t], kind))
    return out


def generate(cfg: SynthConfig) -> SynthData:
    """Draw one dataset. Identical configs (seed included) give identical data."""
    cfg.validate()
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(cfg.seed).spawn(6)]
    rng_label, rng_text, rng_split, rng_rt, rng_fr, rng_vec = streams

    users: list[str] = []
    comm_idx: list[int] = []
    for ci, c in enumerate(cfg.communities):
        for _ in range(c.size):
            users.append(f"u{len(users):04d}")
            comm_idx.append(ci)
    comm = np.array(comm_idx)
    n = len(users)

    user_stance: list[Stance] = []
    for ci in comm_idx:
        c = cfg.communities[ci]
        if rng_label.random() < c.signal:
            user_stance.append(c.stance)
        else:
            others = [s for s in STANCES if s != c.stance]
            user_stance.append(others[int(rng_label.integers(len(others)))])

    taken: set[str] = set()
    pools = {s: _pseudo_words(rng_text, cfg.stance_vocab, taken) for s in STANCES}
    noise = _pseudo_words(rng_text, cfg.noise_vocab, taken)

    raw = []
    for ui, u in enumerate(users):
        for k in range(cfg.tweets_per_user):
            stance = user_stance[ui]
            toks = []
            for _ in range(cfg.tokens_per_tweet):
                pool = noise if rng_text.random() < cfg.text_noise else pools[stance]
                toks.append(pool[int(rng_text.integers(len(pool)))])
            raw.append((f"t{len(raw):05d}", u, " ".join(toks), stance))

    test = np.zeros(len(raw), dtype=bool)
    if cfg.split == "tweet":
        n_test = int(round(cfg.test_fraction * len(raw)))
        test[rng_split.permutation(len(raw))[:n_test]] = True
    else:
        n_test_users = int(round(cfg.test_fraction * n))
        test_users = {users[i] for i in rng_split.permutation(n)[:n_test_users]}
        test[:] = [r[1] in test_users for r in raw]
    records = [LabeledTweet(tid, u, text, stance, Split.TEST if is_test else Split.TRAIN)
               for (tid, u, text, stance), is_test in zip(raw, test)]

    test_authors = sorted({r.author for r in records if r.split == Split.TEST})
    n_unknown = int(round(cfg.unknown_user_fraction * len(test_authors)))
    chosen = rng_split.permutation(len(test_authors))[:n_unknown]
    unknown = {test_authors[i] for i in chosen.tolist()}
    known = np.array([u not in unknown for u in users])

    f_in = cfg.p_in if cfg.friend_p_in is None else cfg.friend_p_in
    f_out = cfg.p_out if cfg.friend_p_out is None else cfg.friend_p_out
    f_per = cfg.pairs_per_user if cfg.friends_per_user is None else cfg.friends_per_user
    retweets = _edges(rng_rt, users, comm, known, cfg.p_in, cfg.p_out, cfg.pairs_per_user, Kind.RETWEET, True)
    friends = _edges(rng_fr, users, comm, known, f_in, f_out, f_per, Kind.FRIEND, False)

    wordvecs = _word_vectors(rng_vec, pools, noise, cfg.wordvec_dim)
    community = {u: cfg.communities[ci].stance for u, ci in zip(users, comm_idx)}
    return SynthData(retweets, friends, TweetDataset(records), community, wordvecs)


def _word_vectors(rng, pools: dict[Stance, list[str]], noise: list[str], dim: int) -> WordVectorTable:
    # stance tokens scatter around a per-stance centroid, noise tokens around the origin
    entries = {}
    for s in STANCES:
        centroid = rng.normal(size=dim)
        for w in pools[s]:
            entries[w] = centroid + rng.normal(scale=0.8, size=dim)
    for w in noise:
        entries[w] = rng.normal(size=dim)
    return WordVectorTable(dim, entries)


def write_dataset(data: SynthData, out_dir: str | os.PathLike) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "retweets": out / "retweets.tsv",
        "friends": out / "friends.tsv",
        "tweets": out / "tweets.tsv",
        "communities": out / "communities.tsv",
        "wordvecs": out / "wordvecs.txt",
    }
    with open(paths["retweets"], "w", encoding="utf-8", newline="\n") as fh:
        serialize_edges(data.retweets, fh)
    with open(paths["friends"], "w", encoding="utf-8", newline="\n") as fh:
        serialize_edges(data.friends, fh)
    with open(paths["tweets"], "w", encoding="utf-8", newline="\n") as fh:
        write_tweets(data.tweets, fh)
    with open(paths["communities"], "w", encoding="utf-8", newline="\n") as fh:
        fh.write("user\tcommunity\n")
        for u, s in data.community.items():
            fh.write(f"{u}\t{s.value}\n")
    with open(paths["wordvecs"], "w", encoding="utf-8", newline="\n") as fh:
        write_word_vectors(data.wordvecs, fh)
    return paths
