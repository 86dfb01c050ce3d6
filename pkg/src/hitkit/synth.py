"""Synthetic task generators for demo scripts and the scaled-down experiments."""

import numpy as np

FILLERS = ["hello", "thanks", "thnks", "good", "day", "food", "nice", "play", "word", "time"]
MARKERS = ["aqzjo", "qzjil", "buqzja"]  # every marker contains the class trigram "qzj"
TRIGRAM = "qzj"

PLAIN_WORDS = ["alpha", "beta", "gamma", "delta", "word", "token", "nice", "play"]
TAG_NAMES = ["O", "B-NUM"]

ZSL_POOLS = {
    "happy mood": ["happy", "joy", "smile", "great", "laugh"],
    "sad mood": ["sad", "cry", "gloom", "tears", "down"],
    "food talk": ["food", "eat", "tasty", "dinner", "cook"],
    "sport talk": ["sport", "game", "match", "team", "score"],
}
ZSL_FILLERS = ["today", "very", "so", "now", "really", "friend"]
ZSL_LABELS = list(ZSL_POOLS)


def classification_records(n=32, seed=0):
    """Binary task: label 1 iff some word contains the marker trigram."""
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n):
        k = int(rng.integers(3, 7))
        words = [FILLERS[rng.integers(len(FILLERS))] for _ in range(k)]
        label = i % 2
        if label == 1:
            words[rng.integers(len(words))] = MARKERS[rng.integers(len(MARKERS))]
        records.append((words, label))
    return records


def mlm_corpus(n=150, seed=1):
    rng = np.random.default_rng(seed)
    pool = FILLERS + MARKERS
    return [[pool[rng.integers(len(pool))] for _ in range(int(rng.integers(3, 8)))]
            for _ in range(n)]


def labeling_records(n=24, seed=7):
    """Tokens containing a digit are tagged B-NUM, everything else O."""
    rng = np.random.default_rng(seed)
    records = []
    for _ in range(n):
        k = int(rng.integers(3, 7))
        tokens, tags = [], []
        for _ in range(k):
            if rng.random() < 0.35:
                tokens.append(chr(97 + rng.integers(26)) + str(rng.integers(10))
                              + chr(97 + rng.integers(26)))
                tags.append(1)
            else:
                tokens.append(PLAIN_WORDS[rng.integers(len(PLAIN_WORDS))])
                tags.append(0)
        records.append((tokens, tags))
    return records


def copy_sequences(n=200, vocab_size=20, max_len=6, seed=1):
    rng = np.random.default_rng(seed)
    tokens = [f"t{i}" for i in range(vocab_size)]
    return [[tokens[rng.integers(vocab_size)] for _ in range(int(rng.integers(1, max_len + 1)))]
            for _ in range(n)]


def zsl_texts(n_per_class, seed):
    """Templated texts: a few class-pool words mixed with shared fillers."""
    rng = np.random.default_rng(seed)
    out = []
    for label, pool in ZSL_POOLS.items():
        for _ in range(n_per_class):
            words = [pool[rng.integers(len(pool))] for _ in range(int(rng.integers(2, 4)))]
            words += [ZSL_FILLERS[rng.integers(len(ZSL_FILLERS))]
                      for _ in range(int(rng.integers(2, 4)))]
            rng.shuffle(words)
            out.append((list(words), ZSL_LABELS.index(label)))
    return out
