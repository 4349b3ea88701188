"""Export job description and validation."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .stopwords import DEFAULT_LIST, STOPWORD_LISTS

LANGUAGES = ("en", "ar")

ANNOTATION_BACKENDS = ("rulebased-v1",)
EMBEDDING_BACKENDS = {"hashrand-v1": {"depth": 12, "dim": 16}}


class ExportError(ValueError):
    pass


@dataclass
class ExportJob:
    input_path: Path
    language: str = "en"
    annotation_backend: str = "rulebased-v1"
    embedding_backend: str = "hashrand-v1"
    layers: tuple[int, ...] = (9, 10, 11, 12)
    stopword_list: str = ""
    output_path: Path | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.input_path = Path(self.input_path)
        if self.language not in LANGUAGES:
            raise ExportError(f"invalid language {self.language!r}; "
                              f"expected one of {LANGUAGES}")
        if self.annotation_backend not in ANNOTATION_BACKENDS:
            raise ExportError(f"unknown annotation backend "
                              f"{self.annotation_backend!r}")
        spec = EMBEDDING_BACKENDS.get(self.embedding_backend)
        if spec is None:
            raise ExportError(f"unknown embedding backend "
                              f"{self.embedding_backend!r}")
        self.layers = tuple(int(x) for x in self.layers)
        if not self.layers:
            raise ExportError("at least one layer must be selected")
        depth = spec["depth"]
        for layer in self.layers:
            if not 1 <= layer <= depth:
                raise ExportError(f"layer {layer} out of range for backend "
                                  f"{self.embedding_backend!r} (depth {depth})")
        if not self.stopword_list:
            self.stopword_list = DEFAULT_LIST[self.language]
        if self.stopword_list not in STOPWORD_LISTS:
            raise ExportError(f"unknown stopword list {self.stopword_list!r}")

    @property
    def embedding_dim(self) -> int:
        return EMBEDDING_BACKENDS[self.embedding_backend]["dim"]
