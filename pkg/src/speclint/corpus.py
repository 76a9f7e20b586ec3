"""Document ingestion and segment quantization.

Takes plain-text specification documents, strips non-prose artifacts
(tables, captions, code, reference-only lines), restricts to a section
range, and quantizes the surviving prose into context-preserving segments:
a short section stays whole, a long section splits per paragraph, and an
oversized paragraph splits at sentence boundaries.
"""

from __future__ import annotations

import hashlib
import logging
import re
from dataclasses import dataclass, field

from .errors import EmptyAfterCleaning, MalformedHeadings

logger = logging.getLogger(__name__)

DEFAULT_MAX_SEGMENT_TOKENS = 320
DEFAULT_MIN_SEGMENT_TOKENS = 8
# Directive/modal cues standing in for part-of-speech filtering: a segment
# must contain at least one to count as describing a behavior.
DEFAULT_CUE_TERMS = ("shall", "should", "may", "must", "is", "are")

_HEADING_RE = re.compile(r"^(\d+(?:\.\d+)*)\s+([A-Z].*)$")
_CAPTION_RE = re.compile(r"^(?:Figure|Table)\s+\S*\d")
_REFERENCE_LINE_RE = re.compile(
    r"^\[\d+\](?:$|\s)|^(?:see\s+)?(?:3GPP\s+)?TS\s+\d+(?:\.\d+)+(?:\s*\[\d+\])?\s*[.;]?$",
    re.IGNORECASE,
)
_SENTENCE_SPLIT_RE = re.compile(r"(?<=[.!?])\s+")


@dataclass(frozen=True)
class CorpusProfile:
    """Per-corpus ingestion settings.

    section_range lists the top-level section numbers to retain (inclusive
    list, e.g. [4, 5, 6, 7, 8]). Token budgets are whitespace-token counts.
    An empty cue_terms tuple disables the directive-cue segment filter.
    """

    corpus_id: str
    section_range: tuple[int, ...] = (4, 5, 6, 7, 8)
    max_segment_tokens: int = DEFAULT_MAX_SEGMENT_TOKENS
    min_segment_tokens: int = DEFAULT_MIN_SEGMENT_TOKENS
    cue_terms: tuple[str, ...] = DEFAULT_CUE_TERMS

    def __post_init__(self):
        if not self.corpus_id:
            raise ValueError("corpus_id must be nonempty")
        if self.min_segment_tokens < 1:
            raise ValueError("min_segment_tokens must be >= 1")
        if self.min_segment_tokens >= self.max_segment_tokens:
            raise ValueError("min_segment_tokens must be < max_segment_tokens")
        object.__setattr__(self, "section_range", tuple(self.section_range))
        object.__setattr__(self, "cue_terms", tuple(t.lower() for t in self.cue_terms))

    def to_dict(self) -> dict:
        return {
            "corpus_id": self.corpus_id,
            "section_range": list(self.section_range),
            "max_segment_tokens": self.max_segment_tokens,
            "min_segment_tokens": self.min_segment_tokens,
            "cue_terms": list(self.cue_terms),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CorpusProfile":
        return cls(
            corpus_id=d["corpus_id"],
            section_range=tuple(d.get("section_range", (4, 5, 6, 7, 8))),
            max_segment_tokens=d.get("max_segment_tokens", DEFAULT_MAX_SEGMENT_TOKENS),
            min_segment_tokens=d.get("min_segment_tokens", DEFAULT_MIN_SEGMENT_TOKENS),
            cue_terms=tuple(d.get("cue_terms", DEFAULT_CUE_TERMS)),
        )


@dataclass(frozen=True)
class Segment:
    """An atomic quantum of specification prose with section provenance."""

    segment_id: str
    section_path: str
    paragraph_index: int
    text: str
    token_count: int

    def to_dict(self) -> dict:
        return {
            "segment_id": self.segment_id,
            "section_path": self.section_path,
            "paragraph_index": self.paragraph_index,
            "text": self.text,
            "token_count": self.token_count,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Segment":
        return cls(
            segment_id=d["segment_id"],
            section_path=d["section_path"],
            paragraph_index=d["paragraph_index"],
            text=d["text"],
            token_count=d["token_count"],
        )


@dataclass
class SectionNode:
    """One section of the cleaned document tree.

    paragraphs holds only this node's own prose; subsections are children.
    """

    path: str
    title: str
    paragraphs: list[str] = field(default_factory=list)
    children: list["SectionNode"] = field(default_factory=list)

    def walk(self):
        yield self
        for child in self.children:
            yield from child.walk()


@dataclass
class SectionTree:
    roots: list[SectionNode]

    def sections(self):
        for root in self.roots:
            yield from root.walk()

    def prose(self) -> str:
        return "\n\n".join(p for node in self.sections() for p in node.paragraphs)

    def render(self) -> str:
        """Canonical text form; re-ingesting it reproduces the same tree."""
        lines = []
        for node in self.sections():
            lines.append(f"{node.path} {node.title}")
            lines.append("")
            for para in node.paragraphs:
                lines.append(para)
                lines.append("")
        return "\n".join(lines)


@dataclass
class Corpus:
    profile: CorpusProfile
    segments: list[Segment]
    source_digest: str


def is_table_row(line: str) -> bool:
    # >=3 runs of >=2 consecutive spaces, or >=2 tab/pipe separators.
    wide_gaps = len(re.findall(r"[ ]{2,}", line))
    separators = line.count("\t") + line.count("|")
    return wide_gaps >= 3 or separators >= 2


def is_caption_line(line: str) -> bool:
    return bool(_CAPTION_RE.match(line))


def is_code_line(line: str) -> bool:
    marks = line.count("{") + line.count("}") + line.count(";")
    if marks >= 2:
        return True
    return marks >= 1 and line.rstrip().endswith((";", "{", "}"))


def is_reference_only_line(line: str) -> bool:
    return bool(_REFERENCE_LINE_RE.match(line.strip()))


def _is_prose(line: str) -> bool:
    return not (
        is_table_row(line)
        or is_caption_line(line)
        or is_code_line(line)
        or is_reference_only_line(line)
    )


def token_count(text: str) -> int:
    return len(text.split())


def ingest_document(raw_text: str, profile: CorpusProfile) -> SectionTree:
    """Parse raw document text into a cleaned section tree.

    Headings must match ``^\\d+(\\.\\d+)*\\s+Title``. Only sections whose
    top-level number is in profile.section_range are kept. Non-prose lines
    are removed; editor's notes are ordinary prose and stay.
    """
    nodes: list[tuple[str, str, list[str]]] = []  # (path, title, raw lines)
    current_lines: list[str] | None = None
    saw_heading = False

    for raw_line in raw_text.splitlines():
        line = raw_line.rstrip()
        m = _HEADING_RE.match(line)
        if m and not is_caption_line(line):
            saw_heading = True
            current_lines = []
            nodes.append((m.group(1), m.group(2).strip(), current_lines))
            continue
        if current_lines is not None:
            current_lines.append(line)

    if not saw_heading:
        raise MalformedHeadings("no section heading found in document")

    wanted = set(profile.section_range)
    by_path: dict[str, SectionNode] = {}
    roots: list[SectionNode] = []
    for path, title, lines in nodes:
        top_level = int(path.split(".")[0])
        if top_level not in wanted:
            continue
        node = SectionNode(path=path, title=title, paragraphs=_assemble_paragraphs(lines))
        by_path[path] = node
        parent_path = ".".join(path.split(".")[:-1])
        parent = by_path.get(parent_path)
        if parent is not None:
            parent.children.append(node)
        else:
            roots.append(node)

    tree = SectionTree(roots=roots)
    if not any(node.paragraphs for node in tree.sections()):
        raise EmptyAfterCleaning(
            f"section range {sorted(wanted)} yields no prose for corpus "
            f"{profile.corpus_id!r}"
        )
    return tree


def _assemble_paragraphs(lines: list[str]) -> list[str]:
    """Group cleaned lines into paragraphs at blank-line boundaries.

    The prose predicate runs twice: per raw line, and again on each
    assembled paragraph, so that cleaning is a fixpoint (a paragraph that
    accumulates e.g. two pipes from separate lines is still removed).
    """
    paragraphs: list[str] = []
    buffer: list[str] = []

    def flush():
        if buffer:
            paragraph = re.sub(r"\s+", " ", " ".join(buffer)).strip()
            if paragraph and _is_prose(paragraph):
                paragraphs.append(paragraph)
            buffer.clear()

    for line in lines:
        if not line.strip():
            flush()
            continue
        if _is_prose(line):
            buffer.append(line.strip())
        # a dropped artifact line does not break the surrounding paragraph
    flush()
    return paragraphs


def split_sentences(text: str) -> list[str]:
    return [s for s in _SENTENCE_SPLIT_RE.split(text) if s.strip()]


def _chunk_units(units: list[str], max_tokens: int, min_tokens: int) -> list[str]:
    """Greedy left-to-right packing of units into chunks <= max_tokens.

    A trailing chunk below min_tokens is repaired by pulling units back
    from its predecessor while the predecessor stays >= min_tokens.
    """
    chunks: list[list[str]] = []
    current: list[str] = []
    current_tokens = 0
    for unit in units:
        unit_tokens = token_count(unit)
        if current and current_tokens + unit_tokens > max_tokens:
            chunks.append(current)
            current = []
            current_tokens = 0
        current.append(unit)
        current_tokens += unit_tokens
    if current:
        chunks.append(current)

    def tokens_of(chunk: list[str]) -> int:
        return sum(token_count(u) for u in chunk)

    while (
        len(chunks) >= 2
        and tokens_of(chunks[-1]) < min_tokens
        and len(chunks[-2]) >= 2
        and tokens_of(chunks[-2]) - token_count(chunks[-2][-1]) >= min_tokens
    ):
        chunks[-1].insert(0, chunks[-2].pop())
    if len(chunks) >= 2 and tokens_of(chunks[-1]) < min_tokens:
        # no whole unit can move without starving the predecessor: give up the
        # sentence boundary for this one seam and move bare words instead
        prev_words = " ".join(chunks[-2]).split()
        tail_words = " ".join(chunks[-1]).split()
        need = min_tokens - len(tail_words)
        if len(prev_words) - need >= min_tokens:
            chunks[-2] = [" ".join(prev_words[:-need])]
            chunks[-1] = [" ".join(prev_words[-need:] + tail_words)]
            logger.info("rebalanced a sub-minimum tail chunk across a sentence boundary")
        else:
            tail = chunks.pop()
            chunks[-1].extend(tail)
            logger.warning("merged sub-minimum tail chunk; chunk exceeds token budget")

    return [" ".join(chunk) for chunk in chunks]


def _split_paragraph(paragraph: str, profile: CorpusProfile) -> list[str]:
    sentences = split_sentences(paragraph)
    # balanced hard word-split for any single sentence over budget, so it
    # never leaves a sub-minimum remainder of its own
    units: list[str] = []
    for sentence in sentences:
        words = sentence.split()
        if len(words) <= profile.max_segment_tokens:
            units.append(sentence)
        else:
            pieces = -(-len(words) // profile.max_segment_tokens)
            size = -(-len(words) // pieces)
            for i in range(0, len(words), size):
                units.append(" ".join(words[i : i + size]))
    return _chunk_units(units, profile.max_segment_tokens, profile.min_segment_tokens)


def quantize_segments(tree: SectionTree, profile: CorpusProfile) -> list[Segment]:
    """Quantize a cleaned tree into segments.

    Whole section if it fits the budget; otherwise one segment per
    paragraph, with over-budget paragraphs split at sentence boundaries.
    Sub-minimum segments merge into their section neighbor; a lone
    sub-minimum section is dropped (logged).
    """
    ordinal = 0
    segments: list[Segment] = []
    for node in tree.sections():
        if not node.paragraphs:
            continue
        section_pieces: list[tuple[int, str]] = []  # (paragraph_index, text)
        total = sum(token_count(p) for p in node.paragraphs)
        if total <= profile.max_segment_tokens:
            section_pieces.append((0, " ".join(node.paragraphs)))
        else:
            for idx, paragraph in enumerate(node.paragraphs):
                if token_count(paragraph) <= profile.max_segment_tokens:
                    section_pieces.append((idx, paragraph))
                else:
                    for chunk in _split_paragraph(paragraph, profile):
                        section_pieces.append((idx, chunk))

        section_pieces = _merge_small_pieces(section_pieces, profile, node.path)
        for idx, text in section_pieces:
            ordinal += 1
            segments.append(
                Segment(
                    segment_id=f"{profile.corpus_id}:{ordinal:05d}",
                    section_path=node.path,
                    paragraph_index=idx,
                    text=text,
                    token_count=token_count(text),
                )
            )

    if profile.cue_terms:
        segments = _filter_by_cues(segments, profile)
    return segments


def _merge_small_pieces(
    pieces: list[tuple[int, str]], profile: CorpusProfile, section_path: str
) -> list[tuple[int, str]]:
    out: list[tuple[int, str]] = []
    pending_first: tuple[int, str] | None = None
    for idx, text in pieces:
        if token_count(text) >= profile.min_segment_tokens:
            if pending_first is not None:
                text = pending_first[1] + " " + text
                idx = pending_first[0]
                pending_first = None
            out.append((idx, text))
        elif out:
            prev_idx, prev_text = out[-1]
            out[-1] = (prev_idx, prev_text + " " + text)
        else:
            pending_first = (idx, text)  # sub-min section opener: merge forward
    if pending_first is not None:
        logger.info(
            "dropping lone sub-minimum segment in section %s (%d tokens)",
            section_path,
            token_count(pending_first[1]),
        )
    # merging may push a piece over budget; re-split those
    resplit: list[tuple[int, str]] = []
    for idx, text in out:
        if token_count(text) > profile.max_segment_tokens:
            for chunk in _split_paragraph(text, profile):
                resplit.append((idx, chunk))
        else:
            resplit.append((idx, text))
    return resplit


def _filter_by_cues(segments: list[Segment], profile: CorpusProfile) -> list[Segment]:
    cues = set(profile.cue_terms)
    kept = []
    dropped = 0
    for segment in segments:
        words = {w.strip(".,;:()\"'").lower() for w in segment.text.split()}
        if words & cues:
            kept.append(segment)
        else:
            dropped += 1
    if dropped:
        logger.info("cue filter dropped %d segment(s) without directive cues", dropped)
    return kept


def normalize_for_dedup(text: str) -> str:
    return re.sub(r"\s+", " ", text.lower()).strip()


def dedupe_segments(segments: list[Segment]) -> list[Segment]:
    """Remove exact duplicates after normalization; first occurrence wins."""
    seen: set[str] = set()
    out = []
    for segment in segments:
        key = normalize_for_dedup(segment.text)
        if key in seen:
            continue
        seen.add(key)
        out.append(segment)
    return out


def build_corpus(raw_text: str, profile: CorpusProfile) -> Corpus:
    """ingest -> quantize -> dedupe, with a digest of the cleaned text."""
    tree = ingest_document(raw_text, profile)
    segments = dedupe_segments(quantize_segments(tree, profile))
    digest = hashlib.sha256(tree.render().encode("utf-8")).hexdigest()
    return Corpus(profile=profile, segments=segments, source_digest=digest)
