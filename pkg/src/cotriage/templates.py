"""Incident-title template mining.

Titles are lowercased and tokenized; multi-word location phrases from a
lexicon collapse to ``<location>``; words outside a frequency vocabulary
(and anything that looks like a number or hex id) become ``<variable>``.
A template is scoped by its owning service and maps to a dense meta-incident
ID through a :class:`TemplateRegistry`.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

WORD = "word"
LOCATION = "location"
VARIABLE = "variable"

LOCATION_TEXT = "<location>"
VARIABLE_TEXT = "<variable>"

REGISTRY_HEADER = "# cotriage-registry v1"
VOCAB_HEADER = "# cotriage-vocabulary v1 threshold="

# Placeholders are matched first so rendered templates re-tokenize to themselves.
_TOKEN_RE = re.compile(r"<location>|<variable>|\w+|[^\w\s]", re.UNICODE)
_NUMERIC_RE = re.compile(r"(?:0x)?[0-9a-f]*[0-9][0-9a-f]*")


class EmptyTitleError(ValueError):
    pass


@dataclass(frozen=True)
class Token:
    kind: str
    text: str = ""

    def render(self) -> str:
        if self.kind == LOCATION:
            return LOCATION_TEXT
        if self.kind == VARIABLE:
            return VARIABLE_TEXT
        return self.text


_LOC = Token(LOCATION)
_VAR = Token(VARIABLE)


def is_numeric(word: str) -> bool:
    return _NUMERIC_RE.fullmatch(word) is not None


@dataclass(frozen=True)
class Template:
    owning_service: str
    tokens: tuple[Token, ...]

    def __post_init__(self):
        if not self.tokens:
            raise ValueError("template needs at least one token")

    def render(self) -> str:
        return " ".join(t.render() for t in self.tokens)


class LocationLexicon:
    """Multi-word location phrases, matched greedily longest-first."""

    def __init__(self, phrases: Iterable[str] = ()):
        seqs = set()
        for phrase in phrases:
            words = tuple(_TOKEN_RE.findall(phrase.lower()))
            if words:
                seqs.add(words)
        self.phrases = frozenset(seqs)
        self._max_len = max((len(s) for s in seqs), default=0)
        self._firsts = {s[0] for s in seqs}

    @classmethod
    def load(cls, path) -> "LocationLexicon":
        with Path(path).open(encoding="utf-8") as fh:
            return cls(line.strip() for line in fh if line.strip() and not line.startswith("#"))

    def match(self, words: Sequence[str], start: int) -> int:
        """Length of the longest phrase at ``words[start:]``, or 0."""
        if words[start] not in self._firsts:
            return 0
        for n in range(min(self._max_len, len(words) - start), 0, -1):
            if tuple(words[start:start + n]) in self.phrases:
                return n
        return 0

    def __len__(self) -> int:
        return len(self.phrases)


_WORD_TOKENS: dict[str, Token] = {}
_WORD_CACHE_MAX = 1 << 20


def _word(w: str) -> Token:
    tok = _WORD_TOKENS.get(w)
    if tok is None:
        tok = Token(WORD, w)
        if len(_WORD_TOKENS) < _WORD_CACHE_MAX:
            _WORD_TOKENS[w] = tok
    return tok


def tokenize(title: str, lexicon: LocationLexicon | None = None) -> list[Token]:
    words = _TOKEN_RE.findall(title.lower())
    if not words:
        raise EmptyTitleError(f"title {title!r} has no tokens")
    out = []
    i = 0
    while i < len(words):
        n = lexicon.match(words, i) if lexicon else 0
        if n:
            out.append(_LOC)
            i += n
            continue
        w = words[i]
        if w == LOCATION_TEXT:
            out.append(_LOC)
        elif w == VARIABLE_TEXT:
            out.append(_VAR)
        else:
            out.append(_word(w))
        i += 1
    return out


@dataclass(frozen=True)
class Vocabulary:
    counts: dict
    support_threshold: int

    def __contains__(self, word) -> bool:
        return word in self.counts

    def __len__(self) -> int:
        return len(self.counts)

    @property
    def words(self) -> frozenset:
        return frozenset(self.counts)

    def dump(self, path) -> None:
        with Path(path).open("w", encoding="utf-8") as fh:
            fh.write(f"{VOCAB_HEADER}{self.support_threshold}\n")
            for word in sorted(self.counts):
                fh.write(f"{word}\t{self.counts[word]}\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with Path(path).open(encoding="utf-8") as fh:
            header = fh.readline().rstrip("\n")
            if not header.startswith(VOCAB_HEADER):
                raise ValueError(f"{path}: not a vocabulary file")
            threshold = int(header[len(VOCAB_HEADER):])
            counts = {}
            for line in fh:
                word, count = line.rstrip("\n").split("\t")
                counts[word] = int(count)
        return cls(counts, threshold)


def _count_words(token_seqs: Iterable[Sequence[Token]]) -> Counter:
    counter = Counter()
    for toks in token_seqs:
        counter.update(t.text for t in toks if t.kind == WORD)
    return counter


def build_vocabulary(
    titles: Iterable[str], support_threshold: int = 2, lexicon: LocationLexicon | None = None
) -> Vocabulary:
    if support_threshold < 1:
        raise ValueError("support_threshold must be >= 1")
    counter = _count_words(tokenize(t, lexicon) for t in titles)
    return _vocab_from_counts(counter, support_threshold)


def _vocab_from_counts(counter: Counter, threshold: int) -> Vocabulary:
    return Vocabulary({w: c for w, c in counter.items() if c >= threshold}, threshold)


def templatize(tokens: Sequence[Token], vocab: Vocabulary, owning_service: str) -> Template:
    out = []
    for t in tokens:
        if t.kind == WORD and (t.text not in vocab or is_numeric(t.text)):
            out.append(_VAR)
        else:
            out.append(t)
    return Template(owning_service, tuple(out))


def parse(title: str, vocab: Vocabulary, lexicon: LocationLexicon | None, owning_service: str) -> Template:
    return templatize(tokenize(title, lexicon), vocab, owning_service)


class UnknownTemplate:
    """Sentinel returned by a frozen registry for unseen templates. Falsy."""

    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __bool__(self):
        return False

    def __repr__(self):
        return "UNKNOWN_TEMPLATE"


UNKNOWN_TEMPLATE = UnknownTemplate()


class TemplateRegistry:
    """Template -> dense meta-incident ID. ``mode`` is "mining" or "frozen"."""

    def __init__(self, mode: str = "mining"):
        if mode not in ("mining", "frozen"):
            raise ValueError(f"bad registry mode {mode!r}")
        self.mode = mode
        self._ids: dict[Template, int] = {}
        self._templates: list[Template] = []

    def assign(self, template: Template):
        """ID for ``template``; registers it in mining mode. A frozen registry
        returns :data:`UNKNOWN_TEMPLATE` for unseen templates."""
        mid = self._ids.get(template)
        if mid is not None:
            return mid
        if self.mode == "frozen":
            return UNKNOWN_TEMPLATE
        mid = len(self._templates)
        self._ids[template] = mid
        self._templates.append(template)
        return mid

    def lookup(self, template: Template) -> int | None:
        return self._ids.get(template)

    def template(self, meta_id: int) -> Template:
        return self._templates[meta_id]

    def freeze(self) -> "TemplateRegistry":
        self.mode = "frozen"
        return self

    def __len__(self) -> int:
        return len(self._templates)

    def __iter__(self) -> Iterator[tuple[int, Template]]:
        return iter(enumerate(self._templates))

    def __eq__(self, other) -> bool:
        return isinstance(other, TemplateRegistry) and self._templates == other._templates

    def dumps(self) -> str:
        lines = [REGISTRY_HEADER]
        for mid, tpl in enumerate(self._templates):
            if "\t" in tpl.owning_service or "\n" in tpl.owning_service:
                raise ValueError(f"service name {tpl.owning_service!r} contains a tab or newline")
            lines.append(f"{mid}\t{tpl.owning_service}\t{tpl.render()}")
        return "\n".join(lines) + "\n"

    def dump(self, path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def load(cls, path, mode: str = "frozen") -> "TemplateRegistry":
        reg = cls("mining")
        with Path(path).open(encoding="utf-8") as fh:
            if fh.readline().rstrip("\n") != REGISTRY_HEADER:
                raise ValueError(f"{path}: not a v1 registry file")
            for lineno, line in enumerate(fh, 2):
                parts = line.rstrip("\n").split("\t")
                if len(parts) != 3:
                    raise ValueError(f"{path}:{lineno}: expected id<TAB>service<TAB>template")
                mid, service, rendered = int(parts[0]), parts[1], parts[2]
                tpl = Template(service, tuple(tokenize(rendered)))
                if reg.assign(tpl) != mid:
                    raise ValueError(f"{path}:{lineno}: ids must be dense and in order")
        reg.mode = mode
        return reg


def mine(
    records: Iterable[tuple[str, str]],
    lexicon: LocationLexicon | None = None,
    support_threshold: int = 2,
) -> tuple[Vocabulary, TemplateRegistry, list[int]]:
    """Build vocabulary and registry from ``(title, owning_service)`` pairs.

    Returns the meta-ID of every input in input order as the third element.
    """
    rows = [(tokenize(title, lexicon), service) for title, service in records]
    vocab = _vocab_from_counts(_count_words(toks for toks, _ in rows), support_threshold)
    registry = TemplateRegistry("mining")
    ids = [registry.assign(templatize(toks, vocab, service)) for toks, service in rows]
    return vocab, registry, ids


class TemplateParser:
    """Title -> meta-ID against a fixed vocabulary, lexicon and registry."""

    def __init__(self, vocab: Vocabulary, lexicon: LocationLexicon | None, registry: TemplateRegistry):
        self.vocab = vocab
        self.lexicon = lexicon
        self.registry = registry

    def template(self, title: str, owning_service: str) -> Template:
        return parse(title, self.vocab, self.lexicon, owning_service)

    def meta_id(self, title: str, owning_service: str):
        return self.registry.assign(self.template(title, owning_service))
