"""Task heads over the hierarchical encoder.

Classification pools word states (optionally concatenating tf-idf features)
into a dense softmax head; tagging keeps per-token states; generation adds a
causal FAME decoder with cross-attention; masked-token prediction projects
word states onto the vocabulary; the entailment scorer compares sentence
embeddings by cosine.
"""

from __future__ import annotations

import numpy as np

from .attention import FameConfig, FameLayer, fame_forward, multi_head_attention
from .data import CLS_ID, EOS_ID, EncodedExample
from .encoders import FeedForward, HitEncoder, positional_table
from .optim import Parameter, normal_init, xavier_uniform
from .tensor import (
    Tensor,
    add,
    add_bias,
    concat_rows,
    cosine_similarity,
    cross_entropy,
    dropout,
    embedding_lookup,
    layer_norm,
    log,
    matmul,
    no_grad,
    reshape,
    scale,
    sigmoid,
    softmax,
    stack_rows,
    sub,
)


def _batch_char_cache(encoder: HitEncoder, examples, training, rng):
    seqs = []
    for ex in examples:
        seqs.extend(ex.char_tuples())
    return encoder.char_cache(seqs, training=training, rng=rng)


class _TaskModel:
    """Shared parameter bookkeeping for every task head."""

    encoder: HitEncoder

    def head_parameters(self) -> list[Parameter]:
        return []

    def parameters(self) -> list[Parameter]:
        return self.encoder.parameters() + self.head_parameters()

    def named_parameters(self) -> dict[str, Parameter]:
        return {p.name: p for p in self.parameters()}

    def trainable_parameters(self) -> list[Parameter]:
        return [p for p in self.parameters() if p.trainable]

    def parameter_arrays(self) -> dict[str, np.ndarray]:
        return {p.name: p.data.copy() for p in self.parameters()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for p in self.parameters():
            if p.name in arrays:
                p.assign(arrays[p.name])


class ClassificationModel(_TaskModel):
    def __init__(self, encoder: HitEncoder, n_classes: int, rng: np.random.Generator,
                 use_tfidf: bool = False, tfidf_dim: int = 0):
        self.encoder = encoder
        self.n_classes = n_classes
        self.use_tfidf = use_tfidf
        in_dim = encoder.config.d_model + (tfidf_dim if use_tfidf else 0)
        self.in_dim = in_dim
        self.head_w = Parameter("head.w", xavier_uniform(rng, (in_dim, n_classes)))
        self.head_b = Parameter("head.b", np.zeros(n_classes))

    def head_parameters(self):
        return [self.head_w, self.head_b]

    def logits_row(self, ex: EncodedExample, training=False, rng=None, char_cache=None) -> Tensor:
        feats = ex.features if self.use_tfidf else None
        s = self.encoder.sentence_embed(ex.word_ids, ex.char_ids, mask=ex.mask,
                                        features=feats, training=training, rng=rng,
                                        char_cache=char_cache)
        return add_bias(matmul(reshape(s, (1, self.in_dim)), self.head_w.tensor),
                        self.head_b.tensor)

    def predict_probs(self, ex: EncodedExample) -> np.ndarray:
        with no_grad():
            row = self.logits_row(ex)
            return softmax(row, axis=-1).data[0].copy()

    def loss_batch(self, examples, training=False, rng=None) -> Tensor:
        cache = _batch_char_cache(self.encoder, examples, training, rng)
        rows = [reshape(self.logits_row(ex, training, rng, cache), (self.n_classes,))
                for ex in examples]
        return cross_entropy(stack_rows(rows), [ex.target for ex in examples])


class TaggingModel(_TaskModel):
    def __init__(self, encoder: HitEncoder, n_tags: int, rng: np.random.Generator):
        self.encoder = encoder
        self.n_tags = n_tags
        d = encoder.config.d_model
        self.head_w = Parameter("head.w", xavier_uniform(rng, (d, n_tags)))
        self.head_b = Parameter("head.b", np.zeros(n_tags))

    def head_parameters(self):
        return [self.head_w, self.head_b]

    def token_logits(self, ex: EncodedExample, training=False, rng=None, char_cache=None) -> Tensor:
        h = self.encoder.word_level_forward(ex.word_ids, ex.char_ids, mask=ex.mask,
                                            training=training, rng=rng, char_cache=char_cache)
        return add_bias(matmul(h, self.head_w.tensor), self.head_b.tensor)

    def predict_probs(self, ex: EncodedExample) -> np.ndarray:
        """Per-token tag distributions for the unpadded positions."""
        with no_grad():
            probs = softmax(self.token_logits(ex), axis=-1).data
        keep = np.asarray(ex.mask, dtype=bool)
        return probs[keep].copy()

    def predict_tags(self, ex: EncodedExample) -> list[int]:
        return [int(i) for i in self.predict_probs(ex).argmax(axis=1)]

    def loss_batch(self, examples, training=False, rng=None) -> Tensor:
        cache = _batch_char_cache(self.encoder, examples, training, rng)
        blocks, targets = [], []
        for ex in examples:
            tags = list(ex.target)
            n_real = int(np.sum(ex.mask))
            if len(tags) != n_real:
                raise ValueError(f"tag/target length mismatch: {len(tags)} tags "
                                 f"for {n_real} tokens")
            blocks.append(self.token_logits(ex, training, rng, cache))
            targets.extend(tags + [-1] * (ex.n_words - n_real))
        return cross_entropy(concat_rows(blocks), targets, ignore_index=-1)


class MlmModel(_TaskModel):
    def __init__(self, encoder: HitEncoder, vocab_size: int, rng: np.random.Generator):
        self.encoder = encoder
        self.vocab_size = vocab_size
        d = encoder.config.d_model
        self.head_w = Parameter("head.w", xavier_uniform(rng, (d, vocab_size)))
        self.head_b = Parameter("head.b", np.zeros(vocab_size))

    def head_parameters(self):
        return [self.head_w, self.head_b]

    def token_logits(self, ex: EncodedExample, training=False, rng=None, char_cache=None) -> Tensor:
        h = self.encoder.word_level_forward(ex.word_ids, ex.char_ids, mask=ex.mask,
                                            training=training, rng=rng, char_cache=char_cache)
        return add_bias(matmul(h, self.head_w.tensor), self.head_b.tensor)

    def predict_probs(self, ex: EncodedExample) -> np.ndarray:
        with no_grad():
            return softmax(self.token_logits(ex), axis=-1).data.copy()

    def loss_batch(self, examples, training=False, rng=None) -> Tensor:
        cache = _batch_char_cache(self.encoder, examples, training, rng)
        blocks, targets = [], []
        for ex in examples:
            blocks.append(self.token_logits(ex, training, rng, cache))
            targets.extend(ex.target)
        return cross_entropy(concat_rows(blocks), targets, ignore_index=-1)


class CrossAttention:
    """Standard multi-head attention from decoder states over encoder memory."""

    def __init__(self, config: FameConfig, rng: np.random.Generator, name: str):
        d = config.d_model
        self.n_heads = config.n_heads
        mk = lambda suffix: Parameter(f"{name}.{suffix}", xavier_uniform(rng, (d, d)))
        self.wq, self.wk, self.wv, self.wo = mk("wq"), mk("wk"), mk("wv"), mk("wo")

    def forward(self, x_q: Tensor, memory: Tensor, allowed: np.ndarray) -> Tensor:
        return multi_head_attention(self.wq, self.wk, self.wv, self.wo,
                                    self.n_heads, x_q, memory, allowed)

    def parameters(self):
        return [self.wq, self.wk, self.wv, self.wo]


class DecoderLayer:
    """Causal FAME self-attention, cross-attention, feed-forward; residual + norm each."""

    def __init__(self, config: FameConfig, d_ff: int, dropout_rate: float,
                 rng: np.random.Generator, name: str, eps: float = 1e-5):
        d = config.d_model
        self.fame = FameLayer(config, rng, name=f"{name}.fame")
        self.cross = CrossAttention(config, rng, name=f"{name}.cross")
        self.ffn = FeedForward(d, d_ff, rng, name=f"{name}.ffn")
        self.norms = [(Parameter(f"{name}.norm{i}.gamma", np.ones(d)),
                       Parameter(f"{name}.norm{i}.beta", np.zeros(d))) for i in (1, 2, 3)]
        self.dropout_rate = dropout_rate
        self.eps = eps

    def forward(self, x: Tensor, causal_allowed, memory: Tensor, mem_allowed,
                training=False, rng=None) -> Tensor:
        h = dropout(fame_forward(self.fame, x, attn_allowed=causal_allowed),
                    self.dropout_rate, training, rng)
        y = layer_norm(add(x, h), self.norms[0][0].tensor, self.norms[0][1].tensor, self.eps)
        c = dropout(self.cross.forward(y, memory, mem_allowed), self.dropout_rate, training, rng)
        y = layer_norm(add(y, c), self.norms[1][0].tensor, self.norms[1][1].tensor, self.eps)
        f = dropout(self.ffn.forward(y), self.dropout_rate, training, rng)
        return layer_norm(add(y, f), self.norms[2][0].tensor, self.norms[2][1].tensor, self.eps)

    def parameters(self):
        out = self.fame.parameters() + self.cross.parameters() + self.ffn.parameters()
        for g, b in self.norms:
            out.extend([g, b])
        return out


class Seq2SeqModel(_TaskModel):
    """Hierarchical encoder feeding a causal decoder; greedy decoding only."""

    def __init__(self, encoder: HitEncoder, target_vocab_size: int, l_dec: int,
                 rng: np.random.Generator, dropout_rate: float = 0.0, d_ff: int = 0,
                 max_out: int = 40):
        self.encoder = encoder
        config = encoder.config
        d = config.d_model
        self.target_vocab_size = target_vocab_size
        self.max_out = max_out
        self.tgt_emb = Parameter("decoder.tgt_emb", normal_init(rng, (target_vocab_size, d)))
        self.layers = [DecoderLayer(config, d_ff or 4 * d, dropout_rate, rng, f"decoder.layer{i}")
                       for i in range(l_dec)]
        self.out_w = Parameter("decoder.out_w", xavier_uniform(rng, (d, target_vocab_size)))
        self.out_b = Parameter("decoder.out_b", np.zeros(target_vocab_size))
        self.pos = positional_table(config.max_len, d)

    def head_parameters(self):
        out = [self.tgt_emb]
        for layer in self.layers:
            out.extend(layer.parameters())
        out.extend([self.out_w, self.out_b])
        return out

    def decode_logits(self, tgt_ids, memory: Tensor, mem_mask, training=False, rng=None) -> Tensor:
        m = len(tgt_ids)
        x = add(embedding_lookup(self.tgt_emb.tensor, list(tgt_ids)), Tensor(self.pos[:m]))
        causal = np.tril(np.ones((m, m), dtype=bool))
        mem_allowed = np.repeat(np.asarray(mem_mask, dtype=bool)[None, :], m, axis=0)
        for layer in self.layers:
            x = layer.forward(x, causal, memory, mem_allowed, training=training, rng=rng)
        return add_bias(matmul(x, self.out_w.tensor), self.out_b.tensor)

    def loss_batch(self, examples, training=False, rng=None) -> Tensor:
        """Teacher forcing: each example's target is the full [CLS] .. [EOS] id list."""
        cache = _batch_char_cache(self.encoder, examples, training, rng)
        blocks, targets = [], []
        for ex in examples:
            memory = self.encoder.word_level_forward(ex.word_ids, ex.char_ids, mask=ex.mask,
                                                     training=training, rng=rng, char_cache=cache)
            tgt = list(ex.target)
            blocks.append(self.decode_logits(tgt[:-1], memory, ex.mask, training, rng))
            targets.extend(tgt[1:])
        return cross_entropy(concat_rows(blocks), targets)

    def greedy_decode(self, ex: EncodedExample, max_out: int | None = None,
                      return_probs: bool = False):
        """Argmax continuation from [CLS]; returns the ids between [CLS] and [EOS]."""
        limit = self.max_out if max_out is None else max_out
        with no_grad():
            memory = self.encoder.word_level_forward(ex.word_ids, ex.char_ids, mask=ex.mask)
            seq = [CLS_ID]
            out: list[int] = []
            probs: list[float] = []
            while len(out) < limit:
                logits = self.decode_logits(seq, memory, ex.mask)
                row = logits.data[-1]
                nxt = int(np.argmax(row))
                shifted = np.exp(row - row.max())
                prob = float(shifted[nxt] / shifted.sum())
                if nxt == EOS_ID:
                    break
                out.append(nxt)
                probs.append(prob)
                seq.append(nxt)
                if len(seq) >= self.encoder.config.max_len:
                    break
        if return_probs:
            return out, probs
        return out


class ZslModel(_TaskModel):
    """Cosine scorer between text and label-phrase embeddings (neural part only)."""

    def __init__(self, encoder: HitEncoder, temperature: float = 0.2):
        self.encoder = encoder
        self.temperature = temperature

    def embed(self, ex: EncodedExample, training=False, rng=None, char_cache=None) -> Tensor:
        return self.encoder.sentence_embed(ex.word_ids, ex.char_ids, mask=ex.mask,
                                           training=training, rng=rng, char_cache=char_cache)

    def score(self, ex_a: EncodedExample, ex_b: EncodedExample) -> float:
        with no_grad():
            return cosine_similarity(self.embed(ex_a), self.embed(ex_b)).item()

    def pair_loss(self, pairs, training=False, rng=None) -> Tensor:
        """Binary cross-entropy on sigmoid(cosine / temperature) against polarity."""
        examples = [p[0] for p in pairs] + [p[1] for p in pairs]
        cache = _batch_char_cache(self.encoder, examples, training, rng)
        one = Tensor(1.0)
        total = None
        for text_ex, label_ex, entail in pairs:
            s = cosine_similarity(self.embed(text_ex, training, rng, cache),
                                  self.embed(label_ex, training, rng, cache))
            p = sigmoid(scale(s, 1.0 / self.temperature))
            term = log(p) if entail else log(sub(one, p))
            total = term if total is None else add(total, term)
        return scale(total, -1.0 / len(pairs))

    loss_batch = pair_loss

    def classify(self, ex: EncodedExample, label_examples) -> int:
        """Zero-shot inference: index of the closest label phrase by raw cosine."""
        scores = [self.score(ex, lab) for lab in label_examples]
        return int(np.argmax(scores))
