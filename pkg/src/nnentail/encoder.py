"""Pluggable pair encoder with a desk-scale reference implementation.

The reference encoder is deliberately small: whitespace tokenization over a
lowercased vocabulary, a learned embedding table, mean pooling of premise
and hypothesis into u and v, the interaction feature [u, v, u*v, |u-v|],
and one tanh dense layer down to width d.  It trains in seconds while
exercising every contract the downstream matching block needs: determinism
in eval mode, dropout in train mode, gradients for every parameter, and
partial freezing.

Each pair is encoded independently (no batched BLAS reductions), so
``encode_batch`` is exactly the elementwise map of ``encode``.
"""

from __future__ import annotations

import fnmatch
import json
import warnings
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .corpus import EntailmentPair


class Mode(Enum):
    TRAIN = "train"
    EVAL = "eval"


class ParameterSet:
    """Named float64 parameter tensors.

    The trainable flag lives on each tensor, so merged views over shared
    tensors always agree about what is frozen.
    """

    def __init__(self):
        self._tensors: dict[str, Tensor] = {}

    def add(self, name: str, values: np.ndarray, trainable: bool = True) -> Tensor:
        if name in self._tensors:
            raise ValueError(f"duplicate parameter name {name!r}")
        t = Tensor(np.array(values, dtype=np.float64), requires_grad=True,
                   name=name, trainable=trainable)
        self._tensors[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __len__(self) -> int:
        return len(self._tensors)

    def names(self) -> list[str]:
        return list(self._tensors)

    def items(self):
        return self._tensors.items()

    def is_trainable(self, name: str) -> bool:
        return self._tensors[name].trainable

    def trainable_items(self) -> list[tuple[str, Tensor]]:
        return [(n, t) for n, t in self._tensors.items() if t.trainable]

    def merge(self, other: "ParameterSet") -> "ParameterSet":
        """Share the other set's tensors under this set (no copies)."""
        for name, t in other.items():
            if name in self._tensors:
                raise ValueError(f"duplicate parameter name {name!r}")
            self._tensors[name] = t
        return self

    def freeze(self, pattern: str) -> int:
        """Mark parameters whose name matches the glob pattern non-trainable."""
        matched = fnmatch.filter(self._tensors, pattern)
        if not matched:
            warnings.warn(f"freeze pattern {pattern!r} matched no parameters")
        for name in matched:
            self._tensors[name].trainable = False
        return len(matched)

    def zero_grads(self) -> None:
        for t in self._tensors.values():
            t.grad = None

    def to_manifest(self) -> list[dict]:
        return [{"name": n, "shape": list(t.data.shape),
                 "trainable": t.trainable,
                 "values": t.data.reshape(-1).tolist()}
                for n, t in self._tensors.items()]

    @classmethod
    def from_manifest(cls, manifest: Iterable[dict]) -> "ParameterSet":
        ps = cls()
        for entry in manifest:
            values = np.asarray(entry["values"], dtype=np.float64).reshape(entry["shape"])
            ps.add(entry["name"], values, trainable=bool(entry.get("trainable", True)))
        return ps


def freeze(params: ParameterSet, selector: str) -> ParameterSet:
    """Freeze all parameters matching the glob selector; no-op with a warning
    when nothing matches."""
    params.freeze(selector)
    return params


def save_params_json(params: ParameterSet, path: str | Path, meta: dict | None = None) -> None:
    """JSON manifest checkpoint; float values round-trip bit-exactly."""
    payload = {"meta": meta or {}, "tensors": params.to_manifest()}
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")


def load_params_json(path: str | Path) -> tuple[ParameterSet, dict]:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    return ParameterSet.from_manifest(payload["tensors"]), payload.get("meta", {})


class Vocabulary:
    """Lowercased whitespace tokens; id 0 is the reserved unknown token."""

    UNK = "<unk>"

    def __init__(self, tokens: Sequence[str]):
        self._id_to_token = [self.UNK, *tokens]
        self._token_to_id = {tok: i for i, tok in enumerate(self._id_to_token)}
        if len(self._token_to_id) != len(self._id_to_token):
            raise ValueError("vocabulary tokens must be unique")

    @staticmethod
    def tokenize(text: str) -> list[str]:
        return text.lower().split()

    @classmethod
    def fit(cls, texts: Iterable[str], max_size: int) -> "Vocabulary":
        """Keep the most frequent tokens (ties by first appearance); slot 0
        stays reserved for unknowns."""
        counts: Counter[str] = Counter()
        first_seen: dict[str, int] = {}
        for text in texts:
            for tok in cls.tokenize(text):
                counts[tok] += 1
                first_seen.setdefault(tok, len(first_seen))
        ranked = sorted(counts, key=lambda t: (-counts[t], first_seen[t]))
        return cls(ranked[:max_size - 1])

    def encode(self, text: str) -> list[int]:
        return [self._token_to_id.get(tok, 0) for tok in self.tokenize(text)]

    def __len__(self) -> int:
        return len(self._id_to_token)

    @property
    def tokens(self) -> list[str]:
        """All tokens except the reserved unknown, in id order."""
        return self._id_to_token[1:]


class Encoder(Protocol):
    """Anything that maps an entailment pair to a length-d representation."""

    params: ParameterSet

    @property
    def d(self) -> int: ...

    def encode(self, pair: EntailmentPair, mode: Mode,
               rng: np.random.Generator | None = None) -> Tensor: ...

    def encode_batch(self, pairs: Sequence[EntailmentPair], mode: Mode,
                     rng: np.random.Generator | None = None) -> Tensor: ...


@dataclass(frozen=True)
class EncoderConfig:
    d: int = 32
    vocab_size: int = 2000
    embed_dim: int = 32
    dropout_rate: float = 0.1
    freeze_embedding: bool = False

    def __post_init__(self):
        if self.d < 2:
            raise ValueError("representation width d must be >= 2")
        if self.vocab_size < 2:
            raise ValueError("vocab_size must be >= 2")
        if self.embed_dim < 1:
            raise ValueError("embed_dim must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")


class DeskEncoder:
    """The reference trainable encoder (see module docstring)."""

    def __init__(self, config: EncoderConfig, vocab: Vocabulary, seed: int = 0):
        self.config = config
        self.vocab = vocab
        self.params = ParameterSet()
        rng = np.random.default_rng(seed)
        e = config.embed_dim
        self.params.add("embedding.weight",
                        rng.uniform(-0.05, 0.05, size=(len(vocab), e)))
        self.params.add("hidden.weight",
                        rng.uniform(-0.05, 0.05, size=(4 * e, config.d)))
        self.params.add("hidden.bias", np.zeros(config.d))
        if config.freeze_embedding:
            self.params.freeze("embedding.*")

    @classmethod
    def build(cls, config: EncoderConfig, texts: Iterable[str], seed: int = 0) -> "DeskEncoder":
        return cls(config, Vocabulary.fit(texts, config.vocab_size), seed=seed)

    @property
    def d(self) -> int:
        return self.config.d

    def _pool(self, text: str, kind: str) -> Tensor:
        ids = self.vocab.encode(text)
        if not ids:
            raise ValueError(f"{kind} has no tokens")
        return ad.tmean(ad.gather_rows(self.params["embedding.weight"], ids), axis=0)

    def encode(self, pair: EntailmentPair, mode: Mode,
               rng: np.random.Generator | None = None) -> Tensor:
        if not pair.premise.strip() or not pair.hypothesis.strip():
            raise ValueError("cannot encode a pair with an empty side")
        u = self._pool(pair.premise, "premise")
        v = self._pool(pair.hypothesis, "hypothesis")
        feat = ad.concat([u, v, ad.mul(u, v), ad.absolute(ad.sub(u, v))])
        feat = ad.dropout(feat, self.config.dropout_rate, rng, train=(mode is Mode.TRAIN))
        return ad.tanh(ad.add(ad.matmul(feat, self.params["hidden.weight"]),
                              self.params["hidden.bias"]))

    def encode_batch(self, pairs: Sequence[EntailmentPair], mode: Mode,
                     rng: np.random.Generator | None = None) -> Tensor:
        if len(pairs) == 0:
            return Tensor(np.zeros((0, self.config.d)))
        return ad.stack([self.encode(p, mode, rng) for p in pairs], axis=0)
