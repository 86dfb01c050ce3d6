"""Character- and word-level encoder stacks.

A shared character encoder turns each word's character sequence into a
pooled vector; the word encoder adds that to a word embedding and a
sinusoidal position row, then runs its own stack. Pooling over sequences
uses a learned-context attention (the hierarchical attention operator).
"""

from __future__ import annotations

import numpy as np

from .attention import FameConfig, FameLayer, fame_forward
from .optim import Parameter, normal_init, xavier_uniform
from .tensor import (
    ShapeError,
    Tensor,
    add,
    add_bias,
    concat_vec,
    dropout,
    embedding_lookup,
    layer_norm,
    matmul,
    mean_rows,
    relu,
    reshape,
    softmax,
    stack_rows,
    tanh,
)


def positional_encoding(pos: int, d: int) -> np.ndarray:
    """Sinusoidal position row: sin at even indices, cos at odd, frequency 10000^(-2i/d)."""
    pe = np.zeros(d)
    for i in range(0, d, 2):
        angle = pos / (10000.0 ** (i / d))
        pe[i] = np.sin(angle)
        if i + 1 < d:
            pe[i + 1] = np.cos(angle)
    return pe


def positional_table(max_len: int, d: int) -> np.ndarray:
    return np.stack([positional_encoding(p, d) for p in range(max_len)])


class FeedForward:
    """Position-wise two-layer projection with relu."""

    def __init__(self, d_model: int, d_ff: int, rng: np.random.Generator, name: str):
        self.w1 = Parameter(f"{name}.w1", xavier_uniform(rng, (d_model, d_ff)))
        self.b1 = Parameter(f"{name}.b1", np.zeros(d_ff))
        self.w2 = Parameter(f"{name}.w2", xavier_uniform(rng, (d_ff, d_model)))
        self.b2 = Parameter(f"{name}.b2", np.zeros(d_model))

    def forward(self, x: Tensor) -> Tensor:
        h = relu(add_bias(matmul(x, self.w1.tensor), self.b1.tensor))
        return add_bias(matmul(h, self.w2.tensor), self.b2.tensor)

    def parameters(self):
        return [self.w1, self.b1, self.w2, self.b2]


class EncoderLayer:
    """FAME block and feed-forward, each under dropout, residual, and layer norm."""

    def __init__(self, config: FameConfig, d_ff: int, dropout_rate: float,
                 rng: np.random.Generator, name: str, eps: float = 1e-5):
        d = config.d_model
        self.fame = FameLayer(config, rng, name=f"{name}.fame")
        self.ffn = FeedForward(d, d_ff, rng, name=f"{name}.ffn")
        self.norm1_g = Parameter(f"{name}.norm1.gamma", np.ones(d))
        self.norm1_b = Parameter(f"{name}.norm1.beta", np.zeros(d))
        self.norm2_g = Parameter(f"{name}.norm2.gamma", np.ones(d))
        self.norm2_b = Parameter(f"{name}.norm2.beta", np.zeros(d))
        self.dropout_rate = dropout_rate
        self.eps = eps

    def forward(self, x: Tensor, mask=None, attn_allowed=None,
                training: bool = False, rng=None) -> Tensor:
        h = fame_forward(self.fame, x, mask, attn_allowed)
        h = dropout(h, self.dropout_rate, training, rng)
        y1 = layer_norm(add(x, h), self.norm1_g.tensor, self.norm1_b.tensor, self.eps)
        f = dropout(self.ffn.forward(y1), self.dropout_rate, training, rng)
        return layer_norm(add(y1, f), self.norm2_g.tensor, self.norm2_b.tensor, self.eps)

    def parameters(self):
        return (self.fame.parameters() + self.ffn.parameters()
                + [self.norm1_g, self.norm1_b, self.norm2_g, self.norm2_b])


class HierPool:
    """Learned-context attention pooling: softmax(tanh(HW + b) . u) weighted sum."""

    def __init__(self, d_model: int, rng: np.random.Generator, name: str):
        self.proj_w = Parameter(f"{name}.proj_w", xavier_uniform(rng, (d_model, d_model)))
        self.proj_b = Parameter(f"{name}.proj_b", np.zeros(d_model))
        self.context = Parameter(f"{name}.context", xavier_uniform(rng, (d_model, 1)).reshape(d_model))

    def forward(self, h: Tensor, mask=None, return_weights: bool = False):
        n, d = h.shape
        m = np.ones(n, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
        if not m.any():
            raise ValueError("hier_pool: every position is masked")
        u = tanh(add_bias(matmul(h, self.proj_w.tensor), self.proj_b.tensor))
        scores = reshape(matmul(u, reshape(self.context.tensor, (d, 1))), (n,))
        a = softmax(scores, axis=0, mask=m)
        pooled = reshape(matmul(reshape(a, (1, n)), h), (d,))
        if return_weights:
            return pooled, a.data.copy()
        return pooled

    def parameters(self):
        return [self.proj_w, self.proj_b, self.context]


class CharHit:
    """Character encoder shared by every word slot."""

    def __init__(self, char_vocab_size: int, config: FameConfig, n_layers: int, d_ff: int,
                 dropout_rate: float, max_word_len: int, rng: np.random.Generator,
                 eps: float = 1e-5, name: str = "char_hit"):
        d = config.d_model
        self.emb = Parameter(f"{name}.char_emb", normal_init(rng, (char_vocab_size, d)))
        self.layers = [EncoderLayer(config, d_ff, dropout_rate, rng, f"{name}.layer{i}", eps)
                       for i in range(n_layers)]
        self.pool = HierPool(d, rng, f"{name}.pool")
        self.pos = positional_table(max_word_len, d)
        self.max_word_len = max_word_len

    def encode_word(self, char_ids, training: bool = False, rng=None) -> Tensor:
        ids = list(char_ids)
        if not ids:
            raise ValueError("char_encode_word: empty character sequence")
        if len(ids) > self.max_word_len:
            raise ShapeError(f"word of {len(ids)} characters exceeds cap {self.max_word_len}")
        x = add(embedding_lookup(self.emb.tensor, ids), Tensor(self.pos[:len(ids)]))
        for layer in self.layers:
            x = layer.forward(x, training=training, rng=rng)
        return self.pool.forward(x)

    def parameters(self):
        out = [self.emb]
        for layer in self.layers:
            out.extend(layer.parameters())
        out.extend(self.pool.parameters())
        return out


class WordHit:
    """Word-level encoder stack with sinusoidal positions."""

    def __init__(self, word_vocab_size: int, config: FameConfig, n_layers: int, d_ff: int,
                 dropout_rate: float, rng: np.random.Generator,
                 eps: float = 1e-5, name: str = "word_hit"):
        d = config.d_model
        self.emb = Parameter(f"{name}.word_emb", normal_init(rng, (word_vocab_size, d)))
        self.layers = [EncoderLayer(config, d_ff, dropout_rate, rng, f"{name}.layer{i}", eps)
                       for i in range(n_layers)]
        self.pos = positional_table(config.max_len, d)
        self.max_len = config.max_len

    def parameters(self):
        out = [self.emb]
        for layer in self.layers:
            out.extend(layer.parameters())
        return out


class HitEncoder:
    """Shared character encoder under the word-level stack, plus pooled sentence output."""

    def __init__(self, word_vocab_size: int, char_vocab_size: int, config: FameConfig,
                 l_c: int, l_w: int, d_ff: int, dropout_rate: float, max_word_len: int,
                 rng: np.random.Generator, eps: float = 1e-5):
        self.config = config
        self.char_hit = CharHit(char_vocab_size, config, l_c, d_ff, dropout_rate,
                                max_word_len, rng, eps)
        self.word_hit = WordHit(word_vocab_size, config, l_w, d_ff, dropout_rate, rng, eps)

    def char_cache(self, char_seqs, training: bool = False, rng=None):
        """Encode each distinct character sequence once; returns (matrix, seq -> row index)."""
        index: dict[tuple, int] = {}
        rows = []
        for seq in char_seqs:
            key = tuple(seq)
            if key not in index:
                index[key] = len(rows)
                rows.append(self.char_hit.encode_word(key, training=training, rng=rng))
        return stack_rows(rows), index

    def word_level_forward(self, word_ids, char_rows, mask=None,
                           training: bool = False, rng=None, char_cache=None) -> Tensor:
        n = len(word_ids)
        if n == 0:
            raise ValueError("word_level_forward: empty word sequence")
        if n > self.word_hit.max_len:
            raise ShapeError(f"sequence of {n} words exceeds cap {self.word_hit.max_len}")
        if char_cache is None:
            char_cache = self.char_cache(char_rows, training=training, rng=rng)
        matrix, index = char_cache
        h_char = embedding_lookup(matrix, [index[tuple(seq)] for seq in char_rows])
        h_word = embedding_lookup(self.word_hit.emb.tensor, list(word_ids))
        x = add(add(h_char, h_word), Tensor(self.word_hit.pos[:n]))
        for layer in self.word_hit.layers:
            x = layer.forward(x, mask=mask, training=training, rng=rng)
        return x

    def sentence_embed(self, word_ids, char_rows, mask=None, features=None,
                       training: bool = False, rng=None, char_cache=None) -> Tensor:
        h = self.word_level_forward(word_ids, char_rows, mask=mask,
                                    training=training, rng=rng, char_cache=char_cache)
        pooled = mean_rows(h, mask)
        if features is None:
            return pooled
        return concat_vec([pooled, Tensor(np.asarray(features, dtype=np.float64))])

    def parameters(self):
        return self.char_hit.parameters() + self.word_hit.parameters()
