"""Degradation prompts and the embedding providers that turn them into vectors.

A real deployment would feed the rendered sentences through a frozen text
encoder. Here the encoder sits behind :class:`EmbeddingProvider`; the
:class:`StubProvider` gives reproducible pseudo-embeddings with no model
dependency, and :class:`FileProvider` reads vectors produced offline.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import torch

from ._validation import PromptLookupError

DEFAULT_PROMPT_DIM = 512

MODALITIES = ("infrared", "visible")
MODALITY_DEGRADATIONS = {
    "infrared": ("low_contrast", "noise"),
    "visible": ("low_light", "overexposure"),
}
NONE = "none"

_PHRASES = {
    "low_light": "low light",
    "overexposure": "overexposure",
    "low_contrast": "low contrast",
    "noise": "noise",
    NONE: "no degradation",
}
_ARTICLES = {"infrared": "an", "visible": "a"}


@dataclass(frozen=True)
class PromptSpec:
    modality: str
    degradations: tuple[str, ...]

    def __post_init__(self):
        if self.modality not in MODALITIES:
            raise ValueError(f"unknown modality {self.modality!r}; expected one of {MODALITIES}")
        degs = tuple(self.degradations)
        if not degs:
            raise ValueError("a prompt needs at least one degradation (use 'none' for clean input)")
        allowed = MODALITY_DEGRADATIONS[self.modality]
        for deg in degs:
            if deg != NONE and deg not in allowed:
                raise ValueError(f"degradation {deg!r} is not valid for {self.modality} images; allowed: {allowed + (NONE,)}")
        if NONE in degs and len(degs) > 1:
            raise ValueError("'none' cannot be combined with other degradations")
        if len(set(degs)) != len(degs):
            raise ValueError(f"duplicate degradation in {degs}")
        object.__setattr__(self, "degradations", degs)

    def __str__(self) -> str:
        return format_spec(self)


def render_prompt(spec: PromptSpec) -> str:
    """Canonical sentence for ``spec``, e.g. ``"an infrared image with low contrast"``."""
    phrases = ", ".join(_PHRASES[d] for d in spec.degradations)
    return f"{_ARTICLES[spec.modality]} {spec.modality} image with {phrases}"


def parse_spec(text: str) -> PromptSpec:
    """Parse the ``modality:deg[,deg]`` command-line form."""
    modality, sep, rest = text.strip().partition(":")
    if not sep or not rest:
        raise ValueError(f"prompt spec {text!r} must look like 'modality:deg[,deg]'")
    return PromptSpec(modality.strip(), tuple(d.strip() for d in rest.split(",")))


def format_spec(spec: PromptSpec) -> str:
    return f"{spec.modality}:{','.join(spec.degradations)}"


def canonical_specs() -> list[PromptSpec]:
    """All eight valid specs: each single degradation, both pairs, and clean input."""
    specs = []
    for modality in MODALITIES:
        degs = MODALITY_DEGRADATIONS[modality]
        specs.extend(PromptSpec(modality, (d,)) for d in degs)
        specs.append(PromptSpec(modality, degs))
        specs.append(PromptSpec(modality, (NONE,)))
    return specs


class EmbeddingProvider:
    """Maps prompt text to a raw embedding vector of width ``dim``."""

    dim: int

    def embed(self, text: str) -> np.ndarray:
        raise NotImplementedError

    def describe(self) -> str:
        raise NotImplementedError


class StubProvider(EmbeddingProvider):
    """Hash-seeded Gaussian vectors: a pure function of ``(text, dim)``.

    The SHA-256 digest of the text keys a Philox counter-based generator,
    which makes the vectors identical across processes and platforms.
    """

    def __init__(self, dim: int = DEFAULT_PROMPT_DIM):
        if dim < 1:
            raise ValueError("embedding width must be positive")
        self.dim = int(dim)

    def embed(self, text: str) -> np.ndarray:
        digest = hashlib.sha256(text.encode("utf-8")).digest()
        key = np.frombuffer(digest[:16], dtype="<u8")
        gen = np.random.Generator(np.random.Philox(key=key))
        return gen.standard_normal(self.dim)

    def describe(self) -> str:
        return "stub"


class FileProvider(EmbeddingProvider):
    """Embeddings loaded from a JSON object ``{prompt text: [floats]}``."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        with open(self.path, encoding="utf-8") as fh:
            raw = json.load(fh)
        if not isinstance(raw, dict) or not raw:
            raise ValueError(f"{self.path}: embedding file must be a non-empty JSON object")
        table = {}
        dims = set()
        for key, vec in raw.items():
            arr = np.asarray(vec, dtype=np.float64)
            if arr.ndim != 1 or not np.all(np.isfinite(arr)):
                raise ValueError(f"{self.path}: entry {key!r} is not a finite 1-D vector")
            table[key] = arr
            dims.add(arr.shape[0])
        if len(dims) != 1:
            raise ValueError(f"{self.path}: embeddings have mixed widths {sorted(dims)}")
        self._table = table
        self.dim = dims.pop()

    def embed(self, text: str) -> np.ndarray:
        try:
            return self._table[text]
        except KeyError:
            raise PromptLookupError(text) from None

    def describe(self) -> str:
        return f"file:{self.path}"


def make_provider(selection: str = "stub", dim: int = DEFAULT_PROMPT_DIM) -> EmbeddingProvider:
    """Build a provider from ``"stub"`` or ``"file:PATH"``."""
    if selection == "stub":
        return StubProvider(dim)
    if selection.startswith("file:"):
        provider = FileProvider(selection[len("file:"):])
        if provider.dim != dim:
            raise ValueError(f"embedding file width {provider.dim} does not match prompt width {dim}")
        return provider
    raise ValueError(f"unknown provider {selection!r}; expected 'stub' or 'file:PATH'")


def encode(texts: Sequence[str], provider: EmbeddingProvider) -> torch.Tensor:
    """Embed ``texts`` and L2-normalize each row; returns a float32 (len(texts), dim) tensor."""
    if len(texts) == 0:
        raise ValueError("encode needs at least one text")
    cache: dict[str, np.ndarray] = {}
    rows = []
    for text in texts:
        if text not in cache:
            vec = np.asarray(provider.embed(text), dtype=np.float64)
            norm = np.linalg.norm(vec)
            if norm == 0:
                raise ValueError(f"embedding for {text!r} has zero norm")
            cache[text] = vec / norm
        rows.append(cache[text])
    return torch.from_numpy(np.stack(rows)).float()


def encode_specs(specs: Iterable[PromptSpec], provider: EmbeddingProvider) -> torch.Tensor:
    return encode([render_prompt(s) for s in specs], provider)
