"""Next-token distribution providers.

A provider answers one question: given a text prefix, what is the
model's distribution over next tokens?  Three implementations share
that interface:

* :class:`ToyProvider` -- an offline, exactly enumerable model loaded
  from a JSON document.
* :class:`RemoteProvider` -- an HTTP adapter for a logprob-exposing
  endpoint (``POST /v1/next_token_distribution``).
* :class:`ReplayProvider` / :class:`RecordingProvider` -- record and
  replay wrappers so remote interactions can run offline.

Every distribution leaving this module is normalized within 1e-9,
contains no empty token, and represents end-of-sequence as a token
consisting of the single reserved EOS atom.
"""

from __future__ import annotations

import json
import math
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Protocol

import requests

from .core import (
    CHAR_MODE,
    EOS_ATOM,
    EOS_LITERAL,
    NORMALIZATION_TOL,
    RESERVED_ATOMS,
    ResidualTable,
    TableOrigin,
    text_to_atoms,
)
from .errors import (
    LoadError,
    MalformedResponse,
    ProviderUnavailable,
    ReplayMiss,
    UnknownContext,
)

DEFAULT_TOP_K = 100
DEFAULT_HTTP_TIMEOUT_MS = 30_000
HTTP_TIMEOUT_ENV = "CHARED_HTTP_TIMEOUT_MS"


@dataclass(frozen=True)
class TokenDistribution:
    """A normalized distribution over nonempty token strings (plus EOS)."""

    entries: Mapping[str, float]
    truncated_to_k: int | None = None

    def validate(self, where: str = "distribution") -> "TokenDistribution":
        total = 0.0
        for token, p in self.entries.items():
            if token == "":
                raise LoadError(f"{where}: empty token not allowed")
            if any(c in RESERVED_ATOMS for c in token) and token != EOS_ATOM:
                raise LoadError(f"{where}: token {token!r} contains a reserved atom")
            if not (p >= 0.0) or math.isnan(p) or math.isinf(p):
                raise LoadError(f"{where}: bad probability {p!r} for token {token!r}")
            total += p
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise LoadError(f"{where}: probabilities sum to {total}, not 1")
        return self

    def truncated(self, k: int | None) -> "TokenDistribution":
        """Keep the k most probable text tokens (EOS is always kept), renormalize."""
        if k is None:
            return self
        text_tokens = [(t, p) for t, p in self.entries.items() if t != EOS_ATOM]
        if len(text_tokens) <= k:
            return self
        text_tokens.sort(key=lambda item: (-item[1], item[0]))
        kept = dict(text_tokens[:k])
        if EOS_ATOM in self.entries:
            kept[EOS_ATOM] = self.entries[EOS_ATOM]
        total = sum(kept.values())
        return TokenDistribution({t: p / total for t, p in kept.items()}, truncated_to_k=k)

    def as_residual_table(self, origin: TableOrigin | None = None) -> ResidualTable:
        return ResidualTable(dict(self.entries), origin)


def _parse_dist_array(items, where: str) -> dict[str, float]:
    entries: dict[str, float] = {}
    if not isinstance(items, list):
        raise LoadError(f"{where}: dist must be an array")
    for obj in items:
        if not isinstance(obj, dict) or "token" not in obj or "p" not in obj:
            raise LoadError(f"{where}: each dist item needs 'token' and 'p'")
        token = obj["token"]
        if token == EOS_LITERAL:
            token = EOS_ATOM
        if token in entries:
            raise LoadError(f"{where}: duplicate token {obj['token']!r}")
        entries[token] = float(obj["p"])
    return entries


def _dump_dist_array(entries: Mapping[str, float]) -> list[dict]:
    out = []
    for token in sorted(entries):
        rendered = EOS_LITERAL if token == EOS_ATOM else token
        out.append({"token": rendered, "p": entries[token]})
    return out


@dataclass(frozen=True)
class ToyLanguageModel:
    """An offline token-level model conditioned on the full query prefix.

    Context keys are whole prefixes (prompt plus output so far), so one
    document can answer several prompts.  ``default`` backs any context
    not listed; without it an unknown context raises UnknownContext.
    """

    alphabet: frozenset[str]
    vocab: frozenset[str]
    contexts: Mapping[str, TokenDistribution]
    default: TokenDistribution | None = None

    def conditional(self, context: str) -> TokenDistribution:
        dist = self.contexts.get(context)
        if dist is not None:
            return dist
        if self.default is not None:
            return self.default
        raise UnknownContext(f"no conditional for context {context!r}")

    def tokens(self) -> frozenset[str]:
        return self.vocab

    @classmethod
    def from_document(cls, doc: dict) -> "ToyLanguageModel":
        for key in ("alphabet", "vocab", "contexts"):
            if key not in doc:
                raise LoadError(f"toy model document missing {key!r}")
        alphabet = frozenset(doc["alphabet"])
        if alphabet & RESERVED_ATOMS:
            raise LoadError("alphabet may not contain reserved atoms")
        vocab: set[str] = set()
        for raw in doc["vocab"]:
            token = EOS_ATOM if raw == EOS_LITERAL else raw
            if token == "":
                raise LoadError("vocab: empty token not allowed")
            if token != EOS_ATOM and not set(token) <= alphabet:
                raise LoadError(f"vocab: token {raw!r} not over the alphabet")
            vocab.add(token)
        contexts: dict[str, TokenDistribution] = {}
        for entry in doc["contexts"]:
            if not isinstance(entry, dict) or "text" not in entry or "dist" not in entry:
                raise LoadError("contexts: each entry needs 'text' and 'dist'")
            text = entry["text"]
            if not set(text) <= alphabet:
                raise LoadError(f"context {text!r} not over the alphabet")
            if text in contexts:
                raise LoadError(f"duplicate context {text!r}")
            where = f"context {text!r}"
            entries = _parse_dist_array(entry["dist"], where)
            for token in entries:
                if token not in vocab:
                    raise LoadError(f"{where}: token not in vocab")
            contexts[text] = TokenDistribution(entries).validate(where)
        default = None
        if doc.get("default") is not None:
            entries = _parse_dist_array(doc["default"], "default")
            for token in entries:
                if token not in vocab:
                    raise LoadError("default: token not in vocab")
            default = TokenDistribution(entries).validate("default")
        return cls(alphabet, frozenset(vocab), contexts, default)

    def to_document(self) -> dict:
        doc: dict = {
            "alphabet": "".join(sorted(self.alphabet)),
            "vocab": sorted(EOS_LITERAL if t == EOS_ATOM else t for t in self.vocab),
            "contexts": [
                {"text": text, "dist": _dump_dist_array(dist.entries)}
                for text, dist in sorted(self.contexts.items())
            ],
        }
        if self.default is not None:
            doc["default"] = _dump_dist_array(self.default.entries)
        return doc


def load_toy_model(document: bytes) -> ToyLanguageModel:
    """Parse and validate a toy-model JSON document (UTF-8 bytes)."""
    try:
        doc = json.loads(document.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise LoadError(f"toy model document is not valid UTF-8 JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise LoadError("toy model document must be a JSON object")
    return ToyLanguageModel.from_document(doc)


def load_toy_model_file(path: str | Path) -> ToyLanguageModel:
    return load_toy_model(Path(path).read_bytes())


@dataclass(frozen=True)
class ProviderDescriptor:
    """How to construct a provider: implementation kind plus its knobs."""

    kind: str  # "toy" | "remote" | "replay"
    location: str  # file path or URL
    prompt: str = ""
    top_k: int | None = DEFAULT_TOP_K
    atom_mode: str = CHAR_MODE

    def __post_init__(self):
        if self.kind not in ("toy", "remote", "replay"):
            raise ValueError(f"unknown provider kind {self.kind!r}")
        if self.top_k is not None and self.top_k < 1:
            raise ValueError("top_k must be at least 1")


class TokenProvider(Protocol):
    prompt: str

    def next_token_distribution(self, prefix: str) -> TokenDistribution: ...


def _to_atom_space(model: ToyLanguageModel, atom_mode: str) -> ToyLanguageModel:
    if atom_mode == CHAR_MODE:
        return model
    conv = lambda s: text_to_atoms(s, atom_mode)  # noqa: E731

    def conv_dist(dist: TokenDistribution) -> TokenDistribution:
        return TokenDistribution(
            {(t if t == EOS_ATOM else conv(t)): p for t, p in dist.entries.items()},
            dist.truncated_to_k,
        )

    return ToyLanguageModel(
        alphabet=frozenset(conv("".join(sorted(model.alphabet)))),
        vocab=frozenset(t if t == EOS_ATOM else conv(t) for t in model.vocab),
        contexts={conv(c): conv_dist(d) for c, d in model.contexts.items()},
        default=conv_dist(model.default) if model.default is not None else None,
    )


class ToyProvider:
    """Serves stored conditionals; referentially transparent and thread-safe."""

    def __init__(
        self,
        model: ToyLanguageModel,
        prompt: str = "",
        top_k: int | None = None,
        atom_mode: str = CHAR_MODE,
    ):
        self._model = _to_atom_space(model, atom_mode)
        self.atom_mode = atom_mode
        self.prompt = text_to_atoms(prompt, atom_mode)
        self.top_k = top_k

    def next_token_distribution(self, prefix: str) -> TokenDistribution:
        return self._model.conditional(prefix).truncated(self.top_k)


class RemoteProvider:
    """HTTP adapter for ``POST /v1/next_token_distribution``.

    The endpoint takes ``{"prompt": str, "top_k": int}`` and returns
    ``{"tokens": [{"text": str, "logprob": float}], "eos_logprob": float?}``.
    Logprobs are exponentiated, empty tokens dropped, the list truncated
    to the k most probable (EOS rides along outside the k), and the
    result renormalized.  Transport failures are retried with
    exponential backoff before surfacing as ProviderUnavailable.
    """

    def __init__(
        self,
        url: str,
        prompt: str = "",
        top_k: int | None = DEFAULT_TOP_K,
        atom_mode: str = CHAR_MODE,
        timeout_ms: int | None = None,
        retries: int = 3,
        backoff_s: float = 0.25,
    ):
        self.url = url.rstrip("/")
        self.atom_mode = atom_mode
        self.prompt = text_to_atoms(prompt, atom_mode)
        self._prompt_text = prompt
        self.top_k = top_k
        if timeout_ms is None:
            timeout_ms = int(os.environ.get(HTTP_TIMEOUT_ENV, DEFAULT_HTTP_TIMEOUT_MS))
        self.timeout_s = timeout_ms / 1000.0
        self.retries = retries
        self.backoff_s = backoff_s

    def _endpoint(self) -> str:
        if self.url.endswith("/v1/next_token_distribution"):
            return self.url
        return self.url + "/v1/next_token_distribution"

    def _prefix_text(self, prefix: str) -> str:
        if self.atom_mode == CHAR_MODE:
            return prefix
        try:
            return prefix.encode("latin-1").decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedResponse(
                "byte-mode prefix ends mid-character and cannot be re-queried as text"
            ) from exc

    def next_token_distribution(self, prefix: str) -> TokenDistribution:
        body = {"prompt": self._prefix_text(prefix), "top_k": self.top_k or 0}
        last_exc: Exception | None = None
        for attempt in range(self.retries):
            try:
                resp = requests.post(self._endpoint(), json=body, timeout=self.timeout_s)
            except requests.RequestException as exc:
                last_exc = exc
                if attempt + 1 < self.retries:
                    time.sleep(self.backoff_s * (2**attempt))
                continue
            if resp.status_code >= 500:
                last_exc = MalformedResponse(f"server error {resp.status_code}")
                if attempt + 1 < self.retries:
                    time.sleep(self.backoff_s * (2**attempt))
                continue
            if resp.status_code != 200:
                raise MalformedResponse(f"unexpected status {resp.status_code}")
            return self._parse(resp)
        raise ProviderUnavailable(
            f"{self._endpoint()} unreachable after {self.retries} attempts: {last_exc}",
            retries=self.retries,
        )

    def _parse(self, resp) -> TokenDistribution:
        try:
            payload = resp.json()
        except ValueError as exc:
            raise MalformedResponse(f"response is not JSON: {exc}") from exc
        if not isinstance(payload, dict) or "tokens" not in payload:
            raise MalformedResponse("response missing 'tokens'")
        raw: dict[str, float] = {}
        for item in payload["tokens"]:
            if not isinstance(item, dict) or "text" not in item or "logprob" not in item:
                raise MalformedResponse("each token needs 'text' and 'logprob'")
            text = item["text"]
            lp = float(item["logprob"])
            if math.isnan(lp):
                raise MalformedResponse("NaN logprob")
            if text == "":
                continue  # an empty token is meaningless here; its mass renormalizes away
            atoms = text if self.atom_mode == CHAR_MODE else text_to_atoms(text, self.atom_mode)
            if any(c in RESERVED_ATOMS for c in atoms):
                raise MalformedResponse(f"token {text!r} collides with a reserved atom")
            raw[atoms] = raw.get(atoms, 0.0) + math.exp(lp)
        if payload.get("eos_logprob") is not None:
            raw[EOS_ATOM] = raw.get(EOS_ATOM, 0.0) + math.exp(float(payload["eos_logprob"]))
        total = sum(raw.values())
        if not raw or total <= 0.0 or math.isinf(total):
            raise MalformedResponse("response mass cannot be normalized")
        dist = TokenDistribution({t: p / total for t, p in raw.items()})
        return dist.truncated(self.top_k)


class ReplayProvider:
    """Serves previously recorded (prefix -> distribution) pairs; no network."""

    def __init__(self, store: str | Path, prompt: str = ""):
        self.prompt = prompt
        self._table: dict[str, TokenDistribution] = {}
        path = Path(store)
        try:
            lines = path.read_text(encoding="utf-8").splitlines()
        except OSError as exc:
            raise LoadError(f"cannot read record store {store}: {exc}") from exc
        for n, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                prefix = obj["prefix"]
                entries = _parse_dist_array(obj["dist"], f"{store}:{n}")
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise LoadError(f"corrupt record store {store} at line {n}: {exc}") from exc
            self._table[prefix] = TokenDistribution(entries).validate(f"{store}:{n}")

    def __len__(self) -> int:
        return len(self._table)

    def next_token_distribution(self, prefix: str) -> TokenDistribution:
        try:
            return self._table[prefix]
        except KeyError:
            raise ReplayMiss(f"prefix {prefix!r} was never recorded") from None


class RecordingProvider:
    """Passes queries through and appends (prefix, distribution) pairs to a store."""

    def __init__(self, inner: TokenProvider, store: str | Path):
        self.inner = inner
        self.prompt = inner.prompt
        self.store = Path(store)
        self._lock = threading.Lock()

    def next_token_distribution(self, prefix: str) -> TokenDistribution:
        dist = self.inner.next_token_distribution(prefix)
        line = json.dumps(
            {"prefix": prefix, "dist": _dump_dist_array(dist.entries)},
            ensure_ascii=False,
            sort_keys=True,
        )
        with self._lock:
            with open(self.store, "a", encoding="utf-8", newline="\n") as fh:
                fh.write(line + "\n")
        return dist


def record_replay(inner: TokenProvider | None, store: str | Path, mode: str):
    """Wrap a provider for recording, or build a replay provider from a store."""
    if mode == "record":
        if inner is None:
            raise ValueError("record mode needs an inner provider")
        return RecordingProvider(inner, store)
    if mode == "replay":
        return ReplayProvider(store, prompt=inner.prompt if inner is not None else "")
    raise ValueError(f"unknown record/replay mode {mode!r}")


def build_provider(descriptor: ProviderDescriptor) -> TokenProvider:
    """Construct the provider implementation a descriptor names."""
    if descriptor.kind == "toy":
        model = load_toy_model_file(descriptor.location)
        return ToyProvider(
            model,
            prompt=descriptor.prompt,
            top_k=descriptor.top_k,
            atom_mode=descriptor.atom_mode,
        )
    if descriptor.kind == "remote":
        return RemoteProvider(
            descriptor.location,
            prompt=descriptor.prompt,
            top_k=descriptor.top_k,
            atom_mode=descriptor.atom_mode,
        )
    if descriptor.kind == "replay":
        return ReplayProvider(
            descriptor.location,
            prompt=text_to_atoms(descriptor.prompt, descriptor.atom_mode),
        )
    raise ValueError(f"unknown provider kind {descriptor.kind!r}")


def next_token_distribution(p: ProviderDescriptor, prefix: str) -> TokenDistribution:
    """One-shot query through a descriptor (builds the provider each call)."""
    return build_provider(p).next_token_distribution(prefix)
