"""Cross-task nearest-neighbor block.

Three pieces, all differentiable end to end:

* class prototypes: the mean encoding of each class's k supporting
  examples, kept for six classes (entail / neutral / contradiction, for
  the source task and the target task).  A two-class target stores its
  non-entailment prototype in both the neutral and contradiction slots.
* a matching function: the interaction vector [p, q, p*q, p-q] through two
  residual tanh layers, two projecting tanh layers, and a sigmoid scalar.
  One shared set of weights scores a query against all six prototypes.
* score fusion: per-class sigmoid gains on both score triples, a learned
  scalar gate from their concatenation, and a softmax over the gated mix.

Weight matrices are stored (input, output), so application is ``x @ W``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .corpus import EntailLabel, ExampleSet, LabelScheme
from .encoder import Encoder, Mode, ParameterSet
from .errors import NumericError

CLASS_ORDER = (EntailLabel.ENTAILMENT, EntailLabel.NEUTRAL, EntailLabel.CONTRADICTION)


def _as_tensor(x, expect_shape: tuple[int, ...] | None = None, what: str = "input") -> Tensor:
    t = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))
    if expect_shape is not None and t.data.shape != expect_shape:
        raise ValueError(f"{what} has shape {t.data.shape}, expected {expect_shape}")
    return t


@dataclass
class PrototypeBank:
    """Six class representations: (entail, neutral, contradiction) per task.

    For a two-way target, slots 1 and 2 of ``target`` hold the same tensor
    (the non-entailment prototype), so every downstream score derived from
    them is bitwise identical.
    """

    source: tuple[Tensor, Tensor, Tensor]
    target: tuple[Tensor, Tensor, Tensor]
    two_way: bool

    def __post_init__(self):
        d = self.source[0].data.shape[-1]
        for t in (*self.source, *self.target):
            if t.data.shape != (d,):
                raise ValueError("all prototypes must be length-d vectors")
            if not np.all(np.isfinite(t.data)):
                raise NumericError("prototype contains non-finite values")
        if self.two_way and self.target[1] is not self.target[2]:
            raise ValueError("two-way bank must share one non-entailment prototype")

    @property
    def d(self) -> int:
        return self.source[0].data.shape[0]


@dataclass
class MatchParams:
    """Trainable weights of the matching function, plus its dropout rate."""

    W1: Tensor  # (4d, 4d)
    W2: Tensor  # (4d, 4d)
    W3: Tensor  # (4d, 2d)
    W4: Tensor  # (2d, d)
    W5: Tensor  # (d,)
    dropout_rate: float = 0.0

    def __post_init__(self):
        d4 = self.W1.data.shape[0]
        if d4 % 4:
            raise ValueError("W1 first dimension must be 4*d")
        d = d4 // 4
        expected = {"W1": (4 * d, 4 * d), "W2": (4 * d, 4 * d),
                    "W3": (4 * d, 2 * d), "W4": (2 * d, d), "W5": (d,)}
        for name, shape in expected.items():
            t = getattr(self, name)
            if t.data.shape != shape:
                raise ValueError(f"{name} has shape {t.data.shape}, expected {shape}")
            if not np.all(np.isfinite(t.data)):
                raise NumericError(f"{name} contains non-finite values")

    @property
    def d(self) -> int:
        return self.W5.data.shape[0]

    @classmethod
    def create(cls, d: int, seed: int = 0, dropout_rate: float = 0.0,
               params: ParameterSet | None = None) -> "MatchParams":
        """Seeded Glorot-uniform init (+-sqrt(6/(fan_in+fan_out))), which
        keeps the tanh stack responsive to its small-magnitude inputs;
        registers tensors under ``match.*`` when a ParameterSet is given."""
        rng = np.random.default_rng(seed)

        def glorot(fan_in, fan_out, shape):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            return rng.uniform(-limit, limit, shape)

        arrays = {"W1": glorot(4 * d, 4 * d, (4 * d, 4 * d)),
                  "W2": glorot(4 * d, 4 * d, (4 * d, 4 * d)),
                  "W3": glorot(4 * d, 2 * d, (4 * d, 2 * d)),
                  "W4": glorot(2 * d, d, (2 * d, d)),
                  "W5": glorot(d, 1, (d,))}
        return cls._wrap(arrays, dropout_rate, params)

    @classmethod
    def zeros(cls, d: int, dropout_rate: float = 0.0,
              params: ParameterSet | None = None) -> "MatchParams":
        arrays = {"W1": np.zeros((4 * d, 4 * d)), "W2": np.zeros((4 * d, 4 * d)),
                  "W3": np.zeros((4 * d, 2 * d)), "W4": np.zeros((2 * d, d)),
                  "W5": np.zeros(d)}
        return cls._wrap(arrays, dropout_rate, params)

    @classmethod
    def _wrap(cls, arrays, dropout_rate, params: ParameterSet | None):
        if params is not None:
            tensors = {n: params.add(f"match.{n}", a) for n, a in arrays.items()}
        else:
            tensors = {n: Tensor(a, requires_grad=True, name=f"match.{n}")
                       for n, a in arrays.items()}
        return cls(dropout_rate=dropout_rate, **tensors)


@dataclass
class CombineParams:
    """Per-class gains (length 3) and the gate weights (length 6)."""

    W6: Tensor
    W7: Tensor

    def __post_init__(self):
        if self.W6.data.shape != (3,):
            raise ValueError("W6 must have shape (3,)")
        if self.W7.data.shape != (6,):
            raise ValueError("W7 must have shape (6,)")
        if not (np.all(np.isfinite(self.W6.data)) and np.all(np.isfinite(self.W7.data))):
            raise NumericError("combine weights contain non-finite values")

    @classmethod
    def create(cls, params: ParameterSet | None = None) -> "CombineParams":
        """Neutral init: unit gains and a zero (balanced) gate.  Near-zero
        gains would multiplicatively choke the gradient into the whole
        matching stack, so the gains start at identity strength."""
        return cls._wrap({"W6": np.ones(3), "W7": np.zeros(6)}, params)

    @classmethod
    def zeros(cls, params: ParameterSet | None = None) -> "CombineParams":
        return cls._wrap({"W6": np.zeros(3), "W7": np.zeros(6)}, params)

    @classmethod
    def _wrap(cls, arrays, params: ParameterSet | None):
        if params is not None:
            tensors = {n: params.add(f"combine.{n}", a) for n, a in arrays.items()}
        else:
            tensors = {n: Tensor(a, requires_grad=True, name=f"combine.{n}")
                       for n, a in arrays.items()}
        return cls(**tensors)


@dataclass(frozen=True)
class Distribution:
    """A 3-way probability vector over (entail, neutral, contradiction)."""

    g: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.g, dtype=np.float64)
        object.__setattr__(self, "g", g)
        if g.shape != (3,):
            raise ValueError("distribution must have 3 entries")
        if np.any(g < 0) or abs(float(g.sum()) - 1.0) > 1e-6:
            raise ValueError("entries must be non-negative and sum to 1")


# ---------------------------------------------------------------------------
# prototypes

def _class_prototype(encoder: Encoder, pairs, mode: Mode, rng) -> Tensor:
    return ad.tmean(encoder.encode_batch(pairs, mode, rng), axis=0)


def compute_prototypes(encoder: Encoder, source_set: ExampleSet, target_set: ExampleSet,
                       mode: Mode, rng: np.random.Generator | None = None,
                       prototype_gradients: bool = True) -> PrototypeBank:
    """Mean-of-encodings prototype per class for both tasks.

    ``prototype_gradients=False`` detaches the prototypes, so the loss
    only reaches the encoder through the query branch.
    """
    if source_set.scheme is not LabelScheme.THREE_WAY:
        raise ValueError("source example set must be three-way")
    source = tuple(_class_prototype(encoder, source_set.per_class[label], mode, rng)
                   for label in CLASS_ORDER)
    if target_set.scheme is LabelScheme.THREE_WAY:
        target = tuple(_class_prototype(encoder, target_set.per_class[label], mode, rng)
                       for label in CLASS_ORDER)
        two_way = False
    else:
        p_entail = _class_prototype(
            encoder, target_set.per_class[EntailLabel.ENTAILMENT], mode, rng)
        p_non = _class_prototype(
            encoder, target_set.per_class[EntailLabel.NON_ENTAILMENT], mode, rng)
        target = (p_entail, p_non, p_non)
        two_way = True
    if not prototype_gradients:
        source = tuple(ad.detach(t) for t in source)
        if two_way:
            p_non = ad.detach(target[1])
            target = (ad.detach(target[0]), p_non, p_non)
        else:
            target = tuple(ad.detach(t) for t in target)
    return PrototypeBank(source=source, target=target, two_way=two_way)


# ---------------------------------------------------------------------------
# matching function

def match_scores(p, queries, params: MatchParams, mode: Mode = Mode.EVAL,
                 rng: np.random.Generator | None = None,
                 trace: dict | None = None) -> Tensor:
    """Score one prototype against a batch of queries; returns shape (n,).

    Pass a dict as ``trace`` to capture the intermediate stages (eval-mode
    introspection for tests)."""
    d = params.d
    p = _as_tensor(p, (d,), "prototype")
    queries = _as_tensor(queries, None, "queries")
    if queries.data.ndim != 2 or queries.data.shape[1] != d:
        raise ValueError(f"queries must have shape (n, {d}), got {queries.data.shape}")
    n = queries.data.shape[0]
    train = mode is Mode.TRAIN
    rate = params.dropout_rate

    p_rows = ad.broadcast_to(p, (n, d))
    i_vec = ad.concat([p_rows, queries, ad.mul(p_rows, queries),
                       ad.sub(p_rows, queries)], axis=1)
    r1 = ad.add(ad.dropout(ad.tanh(ad.matmul(i_vec, params.W1)), rate, rng, train), i_vec)
    r2 = ad.add(ad.dropout(ad.tanh(ad.matmul(r1, params.W2)), rate, rng, train), r1)
    r3 = ad.dropout(ad.tanh(ad.matmul(r2, params.W3)), rate, rng, train)
    r4 = ad.dropout(ad.tanh(ad.matmul(r3, params.W4)), rate, rng, train)
    s = ad.sigmoid(ad.matmul(r4, params.W5))
    if trace is not None:
        trace.update(i=i_vec, r1=r1, r2=r2, r3=r3, r4=r4, s=s)
    return s


def match_score(p, q, params: MatchParams, mode: Mode = Mode.EVAL,
                rng: np.random.Generator | None = None) -> Tensor:
    """Scalar matching score between one prototype and one query."""
    d = params.d
    q = _as_tensor(q, (d,), "query")
    return ad.reshape(match_scores(p, ad.reshape(q, (1, d)), params, mode, rng), ())


def score_queries(queries, bank: PrototypeBank, params: MatchParams,
                  mode: Mode = Mode.EVAL, rng: np.random.Generator | None = None
                  ) -> tuple[Tensor, Tensor]:
    """Match a batch of queries against all six prototypes.

    Returns (g_S, g_T), each of shape (n, 3) in class order.  For a two-way
    bank the neutral and contradiction columns of g_T are one tensor, so
    they are bitwise equal and gradients flow through both uses.
    """
    queries = _as_tensor(queries)
    g_s = ad.stack([match_scores(p, queries, params, mode, rng)
                    for p in bank.source], axis=1)
    if bank.two_way:
        s_entail = match_scores(bank.target[0], queries, params, mode, rng)
        s_non = match_scores(bank.target[1], queries, params, mode, rng)
        g_t = ad.stack([s_entail, s_non, s_non], axis=1)
    else:
        g_t = ad.stack([match_scores(p, queries, params, mode, rng)
                        for p in bank.target], axis=1)
    return g_s, g_t


def score_query(q, bank: PrototypeBank, params: MatchParams,
                mode: Mode = Mode.EVAL, rng: np.random.Generator | None = None
                ) -> tuple[Tensor, Tensor]:
    """Single-query convenience wrapper; returns two length-3 tensors."""
    q = _as_tensor(q, (bank.d,), "query")
    g_s, g_t = score_queries(ad.reshape(q, (1, bank.d)), bank, params, mode, rng)
    return ad.reshape(g_s, (3,)), ad.reshape(g_t, (3,))


# ---------------------------------------------------------------------------
# probability combination

def combine_rows(g_s, g_t, params: CombineParams) -> Tensor:
    """Row-wise gated fusion of two (n, 3) score arrays into (n, 3)
    distributions (softmax with max subtraction)."""
    g_s = _as_tensor(g_s)
    g_t = _as_tensor(g_t)
    if g_s.data.shape != g_t.data.shape or g_s.data.ndim != 2 or g_s.data.shape[1] != 3:
        raise ValueError("score arrays must both have shape (n, 3)")
    if not (np.all(np.isfinite(g_s.data)) and np.all(np.isfinite(g_t.data))):
        raise NumericError("scores contain non-finite values")
    n = g_s.data.shape[0]
    gain_s = ad.sigmoid(ad.mul(g_s, params.W6))
    gain_t = ad.sigmoid(ad.mul(g_t, params.W6))
    lam = ad.sigmoid(ad.matmul(ad.concat([g_s, g_t], axis=1), params.W7))
    lam = ad.reshape(lam, (n, 1))
    mixed = ad.add(ad.mul(lam, gain_s), ad.mul(ad.sub(1.0, lam), gain_t))
    return ad.softmax_rows(mixed)


def combine_distributions(g_s, g_t, params: CombineParams) -> Tensor:
    """Fuse one query's source and target score triples; returns a length-3
    tensor that sums to 1."""
    g_s = _as_tensor(g_s, (3,), "g_s")
    g_t = _as_tensor(g_t, (3,), "g_t")
    out = combine_rows(ad.reshape(g_s, (1, 3)), ad.reshape(g_t, (1, 3)), params)
    return ad.reshape(out, (3,))


def collapse_two_way(g) -> tuple[float, float]:
    """(entail, non-entail) mass: first entry vs the sum of the other two."""
    arr = g.g if isinstance(g, Distribution) else np.asarray(
        g.data if isinstance(g, Tensor) else g, dtype=np.float64)
    if arr.shape != (3,):
        raise ValueError("expected a 3-way distribution")
    return float(arr[0]), float(arr[1] + arr[2])
