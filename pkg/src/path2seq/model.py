"""Attention encoder-decoder over sampled path contexts.

Each context is encoded independently: the rendered path symbols run
through a bi-directional LSTM, both endpoint tokens are summed subtoken
embeddings, and the concatenation is projected with W_in through tanh into
a combined vector z. The decoder starts from the mean of all z vectors
(zero-padded into the wider decoder state), attends over them with a
bilinear score h W_a z at every step, and predicts the next target
subtoken from softmax(W_s tanh(W_c [context; state])).

A context set is treated as a set: sampled contexts are put into a
canonical order before encoding, so any permutation of the same contexts
produces bitwise-identical results.

Variant switches (`ablation`): no_ast_nodes drops the path encoder and
keeps endpoint tokens; no_tokens keeps only the path encoder;
no_token_split embeds whole tokens instead of summed subtokens;
no_decoder predicts the whole name with one softmax from the start state;
no_attention decodes from the start state alone. no_random is handled by
the trainer (one fixed sample per example instead of fresh samples each
iteration).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .errors import Path2SeqError
from .paths import Example, sample_paths
from .vocab import Vocabularies

ABLATIONS = ("full", "no_ast_nodes", "no_decoder", "no_token_split",
             "no_tokens", "no_attention", "no_random")

TARGET_PAD_ID, TARGET_SOS_ID, TARGET_EOS_ID, TARGET_UNK_ID = 0, 1, 2, 3


class EmptyContexts(Path2SeqError):
    kind = "empty-contexts"


class AllMasked(Path2SeqError):
    kind = "all-masked"


@dataclass
class ModelConfig:
    d_nodes: int = 128
    d_tokens: int = 128
    d_hidden: int = 128
    d_target: int = 128
    d_path: int = 128      # per-direction path encoder width
    d_decoder: int = 320
    k: int = 200           # contexts sampled per example per iteration
    input_dropout: float = 0.25
    recurrent_dropout: float = 0.5
    max_target_len: int = 10

    def __post_init__(self):
        for name in ("d_nodes", "d_tokens", "d_hidden", "d_target", "d_path",
                     "d_decoder", "k", "max_target_len"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        # the start state is zero-padded into the decoder state, so the
        # decoder can be wider than d_hidden but never narrower
        if self.d_decoder < self.d_hidden:
            raise ValueError("d_decoder must be >= d_hidden")

    def to_dict(self) -> dict:
        return dict(self.__dict__)


class ModelParams:
    """Every learned tensor of one model variant, Glorot-initialized from a
    seed. Weight matrices use glorot_uniform_init; LSTM biases start at
    zero except the forget gate's 1.0."""

    def __init__(self, cfg: ModelConfig, vocabs: Vocabularies, ablation: str = "full",
                 seed: int = 0):
        if ablation not in ABLATIONS:
            raise ValueError(f"unknown ablation {ablation!r}, expected one of {ABLATIONS}")
        self.cfg = cfg
        self.vocabs = vocabs
        self.ablation = ablation
        self._ordered: list[nx.Parameter] = []
        rng = np.random.default_rng(seed)

        def param(name, shape):
            p = nx.Parameter(nx.glorot_uniform_init(shape, rng), name)
            self._ordered.append(p)
            return p

        def lstm(name, input_size, hidden_size):
            cell = nx.LstmCellParams(input_size, hidden_size, name, rng)
            self._ordered.extend(cell.parameters())
            return cell

        self.E_nodes = self.path_fwd = self.path_bwd = None
        if self.uses_paths:
            self.E_nodes = param("E_nodes", (len(vocabs.nodes), cfg.d_nodes))
            self.path_fwd = lstm("path_fwd", cfg.d_nodes, cfg.d_path)
            self.path_bwd = lstm("path_bwd", cfg.d_nodes, cfg.d_path)

        self.E_source = None
        if self.uses_tokens:
            table = vocabs.source_full if ablation == "no_token_split" else vocabs.source
            self.E_source = param("E_source", (len(table), cfg.d_tokens))

        self.W_in = param("W_in", (self.combined_input_dim, cfg.d_hidden))

        self.E_target = self.decoder = self.W_a = self.W_c = self.W_s = None
        self.W_name = None
        if ablation == "no_decoder":
            self.W_name = param("W_name", (cfg.d_hidden, len(vocabs.names)))
        else:
            self.E_target = param("E_target", (len(vocabs.target), cfg.d_target))
            self.decoder = lstm("decoder", cfg.d_target, cfg.d_decoder)
            if ablation != "no_attention":
                self.W_a = param("W_a", (cfg.d_decoder, cfg.d_hidden))
                combine_in = cfg.d_hidden + cfg.d_decoder
            else:
                combine_in = cfg.d_decoder
            self.W_c = param("W_c", (combine_in, cfg.d_decoder))
            self.W_s = param("W_s", (cfg.d_decoder, len(vocabs.target)))

    @property
    def uses_paths(self) -> bool:
        return self.ablation != "no_ast_nodes"

    @property
    def uses_tokens(self) -> bool:
        return self.ablation != "no_tokens"

    @property
    def combined_input_dim(self) -> int:
        dim = 0
        if self.uses_paths:
            dim += 2 * self.cfg.d_path
        if self.uses_tokens:
            dim += 2 * self.cfg.d_tokens
        return dim

    def parameters(self) -> list[nx.Parameter]:
        return list(self._ordered)


@dataclass
class ContextIds:
    node_ids: np.ndarray
    left_ids: np.ndarray
    right_ids: np.ndarray
    left_full: int
    right_full: int
    key: str  # canonical ordering key: the rendered context string


@dataclass
class ExampleIds:
    contexts: list[ContextIds]
    target_ids: list[int]
    name_id: int


def ensure_ids(example: Example, vocabs: Vocabularies) -> ExampleIds:
    """Vocabulary-encode an example once and cache the result on it."""
    cached = getattr(example, "_ids", None)
    if cached is not None and getattr(example, "_ids_vocabs", None) is vocabs:
        return cached
    ctxs = []
    for ctx in example.contexts:
        ctxs.append(ContextIds(
            node_ids=np.asarray(vocabs.nodes.ids(ctx.path_symbols), dtype=np.intp),
            left_ids=np.asarray(vocabs.source.ids(ctx.left_subtokens), dtype=np.intp),
            right_ids=np.asarray(vocabs.source.ids(ctx.right_subtokens), dtype=np.intp),
            left_full=vocabs.source_full.id("|".join(ctx.left_subtokens)),
            right_full=vocabs.source_full.id("|".join(ctx.right_subtokens)),
            key=ctx.format(),
        ))
    ids = ExampleIds(
        contexts=ctxs,
        target_ids=vocabs.target.ids(example.target),
        name_id=vocabs.names.id("|".join(example.target)),
    )
    example._ids = ids
    example._ids_vocabs = vocabs
    return ids


@dataclass
class EncodedExample:
    Z: nx.Tensor                 # (k', d_hidden) combined representations
    mask: np.ndarray             # (k',) validity flags for attention
    order: list[int]             # original context index per row of Z
    h0: nx.Tensor                # (d_hidden,) mean of all rows of Z


def choose_context_indices(n_contexts: int, k: int, rng: np.random.Generator,
                           training: bool) -> list[int]:
    """Indices of the contexts one iteration consumes: a fresh uniform
    sample without replacement while training, the first k (in canonical
    enumeration order) at inference."""
    if n_contexts < 1:
        raise EmptyContexts("example has no path contexts")
    if not training:
        return list(range(min(k, n_contexts)))
    return sample_paths(list(range(n_contexts)), k, rng)


def encode_token(params: ModelParams, subtoken_ids: np.ndarray) -> nx.Tensor:
    """Token vector: the sum of its subtoken embedding rows."""
    return nx.sum_rows(nx.embedding(params.E_source, np.asarray(subtoken_ids, dtype=np.intp)))


def encode_path_context(params: ModelParams, ids: ContextIds, cfg: ModelConfig,
                        rng: np.random.Generator, training: bool) -> nx.Tensor:
    """Combined vector of one context: tanh(W_in [path; left; right]) with
    dropout on the concatenation while training."""
    parts = []
    if params.uses_paths:
        seq = [nx.Tensor(params.E_nodes.data[i], (params.E_nodes,),
                         (lambda idx: lambda g: ((params.E_nodes, _one_row(params.E_nodes, idx, g)),))(i))
               for i in ids.node_ids]
        parts.append(nx.bilstm_final_states(params.path_fwd, params.path_bwd, seq))
    if params.uses_tokens:
        if params.ablation == "no_token_split":
            parts.append(encode_token(params, np.array([ids.left_full])))
            parts.append(encode_token(params, np.array([ids.right_full])))
        else:
            parts.append(encode_token(params, ids.left_ids))
            parts.append(encode_token(params, ids.right_ids))
    x = parts[0] if len(parts) == 1 else nx.concat(parts, axis=-1)
    x = nx.dropout(x, cfg.input_dropout, rng, training)
    return nx.tanh(nx.vm(x, params.W_in))


def _one_row(table: nx.Parameter, idx: int, g: np.ndarray) -> np.ndarray:
    acc = np.zeros_like(table.data)
    acc[idx] += g
    return acc


def _padded_ids(id_lists: list[np.ndarray]) -> tuple[np.ndarray, list[np.ndarray]]:
    n = len(id_lists)
    width = max(len(ids) for ids in id_lists)
    mat = np.zeros((n, width), dtype=np.intp)  # pad id 0
    masks = [np.zeros((n, 1)) for _ in range(width)]
    for r, ids in enumerate(id_lists):
        mat[r, : len(ids)] = ids
        for t in range(len(ids)):
            masks[t][r, 0] = 1.0
    return mat, masks


def _recurrent_mask(shape, rate: float, rng: np.random.Generator,
                    training: bool) -> np.ndarray | None:
    if not training or rate == 0.0:
        return None
    return (rng.random(shape) >= rate) / (1.0 - rate)


def _encode_rows(params: ModelParams, chosen: list[ContextIds], cfg: ModelConfig,
                 rng: np.random.Generator, training: bool) -> nx.Tensor:
    """Encode a batch of contexts at once; returns (k', d_hidden)."""
    k = len(chosen)
    parts = []
    if params.uses_paths:
        # one variational dropout mask per direction, fixed across timesteps
        fwd_mask = _recurrent_mask((k, cfg.d_path), cfg.recurrent_dropout, rng, training)
        bwd_mask = _recurrent_mask((k, cfg.d_path), cfg.recurrent_dropout, rng, training)
        fwd_ids, fwd_masks = _padded_ids([c.node_ids for c in chosen])
        bwd_ids, bwd_masks = _padded_ids([c.node_ids[::-1] for c in chosen])
        fwd_in = [nx.embedding(params.E_nodes, fwd_ids[:, t]) for t in range(fwd_ids.shape[1])]
        bwd_in = [nx.embedding(params.E_nodes, bwd_ids[:, t]) for t in range(bwd_ids.shape[1])]
        h_fwd = nx.lstm_final_state(params.path_fwd, fwd_in, fwd_masks, fwd_mask)
        h_bwd = nx.lstm_final_state(params.path_bwd, bwd_in, bwd_masks, bwd_mask)
        parts.extend([h_fwd, h_bwd])
    if params.uses_tokens:
        if params.ablation == "no_token_split":
            left_lists = [np.array([c.left_full], dtype=np.intp) for c in chosen]
            right_lists = [np.array([c.right_full], dtype=np.intp) for c in chosen]
        else:
            left_lists = [c.left_ids for c in chosen]
            right_lists = [c.right_ids for c in chosen]
        for lists in (left_lists, right_lists):
            flat = np.concatenate(lists)
            starts = np.concatenate([[0], np.cumsum([len(x) for x in lists])])
            parts.append(nx.embedding_bag_sum(params.E_source, flat, starts))
    x = parts[0] if len(parts) == 1 else nx.concat(parts, axis=1)
    x = nx.dropout(x, cfg.input_dropout, rng, training)
    return nx.tanh(nx.mm(x, params.W_in))


def encode_example(params: ModelParams, example: Example, cfg: ModelConfig,
                   rng: np.random.Generator, training: bool,
                   context_indices: list[int] | None = None) -> EncodedExample:
    """Sample (or accept) context indices, encode them in canonical order
    and mean-pool the start state."""
    ids = ensure_ids(example, params.vocabs)
    if not ids.contexts:
        raise EmptyContexts("example has no path contexts")
    if context_indices is None:
        context_indices = choose_context_indices(len(ids.contexts), cfg.k, rng, training)
    # canonical order makes the context set order-free: any permutation of
    # the same contexts builds the identical graph
    order = sorted(context_indices, key=lambda i: ids.contexts[i].key)
    chosen = [ids.contexts[i] for i in order]
    Z = _encode_rows(params, chosen, cfg, rng, training)
    h0 = nx.mean_rows(Z)
    return EncodedExample(Z=Z, mask=np.ones(len(chosen), dtype=bool), order=order, h0=h0)


def attention_step(params: ModelParams, h_t: nx.Tensor, Z: nx.Tensor,
                   mask: np.ndarray) -> tuple[nx.Tensor, nx.Tensor]:
    """Bilinear attention: scores h W_a z per row, masked softmax, then the
    weighted average of rows as the context vector."""
    if not np.any(mask):
        raise AllMasked("no valid attention targets")
    scores = nx.mv(Z, nx.vm(h_t, params.W_a))
    alpha = nx.softmax_1d(nx.mask_scores(scores, mask))
    c_t = nx.vm(alpha, Z)
    return alpha, c_t


def decode_step(params: ModelParams, prev_target_id: int, h_prev: nx.Tensor,
                c_prev: nx.Tensor, enc: EncodedExample, training: bool,
                ) -> tuple[nx.Tensor, nx.Tensor, nx.Tensor, nx.Tensor | None]:
    """One decoder step: embed the previous target subtoken, advance the
    LSTM, attend (unless disabled) and produce the next-token distribution.

    Returns (distribution, h_t, c_state_t, alpha); alpha is None without
    attention.
    """
    cfg = params.cfg
    prev = nx.embedding(params.E_target, np.array([prev_target_id], dtype=np.intp))
    h2 = nx.Tensor(h_prev.data.reshape(1, -1), (h_prev,), lambda g: ((h_prev, g[0]),))
    c2 = nx.Tensor(c_prev.data.reshape(1, -1), (c_prev,), lambda g: ((c_prev, g[0]),))
    h_new2, c_new2 = nx.lstm_step(params.decoder, prev, h2, c2)
    h_t = nx.Tensor(h_new2.data[0], (h_new2,), lambda g: ((h_new2, g.reshape(1, -1)),))
    c_state = nx.Tensor(c_new2.data[0], (c_new2,), lambda g: ((c_new2, g.reshape(1, -1)),))
    alpha = None
    if params.ablation != "no_attention":
        alpha, ctx_vec = attention_step(params, h_t, enc.Z, enc.mask)
        combined = nx.concat([ctx_vec, h_t], axis=-1)
    else:
        combined = h_t
    hidden = nx.tanh(nx.vm(combined, params.W_c))
    dist = nx.softmax_1d(nx.vm(hidden, params.W_s))
    return dist, h_t, c_state, alpha


def start_decoder_state(params: ModelParams, enc: EncodedExample) -> tuple[nx.Tensor, nx.Tensor]:
    """Decoder start: h0 is the pooled encoding zero-padded to the decoder
    width; the cell state starts at zero."""
    h = nx.pad_tail(enc.h0, params.cfg.d_decoder)
    c = nx.constant(np.zeros(params.cfg.d_decoder))
    return h, c


def forward_loss(example: Example, params: ModelParams, cfg: ModelConfig,
                 rng: np.random.Generator, training: bool = True,
                 context_indices: list[int] | None = None) -> nx.Tensor:
    """Teacher-forced cross-entropy, averaged over the target subtokens
    plus the closing EOS. The no_decoder variant scores the whole name
    with a single softmax instead."""
    ids = ensure_ids(example, params.vocabs)
    if not example.target:
        raise ValueError("example has an empty target")
    enc = encode_example(params, example, cfg, rng, training, context_indices)
    if params.ablation == "no_decoder":
        dist = nx.softmax_1d(nx.vm(enc.h0, params.W_name))
        return nx.cross_entropy(dist, ids.name_id)
    h, c = start_decoder_state(params, enc)
    losses = []
    prev = TARGET_SOS_ID
    for gold in ids.target_ids + [TARGET_EOS_ID]:
        dist, h, c, _ = decode_step(params, prev, h, c, enc, training)
        losses.append(nx.cross_entropy(dist, gold))
        prev = gold
    return nx.mean_of(losses)
