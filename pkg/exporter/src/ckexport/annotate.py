"""Deterministic rule-based linguistic annotation.

The "rulebased-v1" backend is a self-contained stand-in for a model-backed
tagger/parser: surface heuristics assign universal POS tags, a flat
root-attachment scheme provides the dependency arcs, and small gazetteers
drive named-entity tags. It exists so exports are reproducible offline;
the output schema is what matters, not tagging accuracy.
"""

from __future__ import annotations

import json
import logging
import re

from .job import ExportJob, ExportError
from .stopwords import get_stopwords

log = logging.getLogger("ckexport")

_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)

_PRONOUNS = frozenset("i you he she it we they me him her us them this that "
                      "these those who whom which what".split())
_DETERMINERS = frozenset("a an the his her its my our their your no every "
                         "some any".split())
_ADPOSITIONS = frozenset("of in on at by for with from to as about into over "
                         "after before between against during without under "
                         "through".split())
_CONJUNCTIONS = frozenset("and or but nor so yet".split())
_AUXILIARIES = frozenset("is am are was were be been being do does did have "
                         "has had will would shall should can could may might "
                         "must".split())
_GAZETTEER = {
    "london": "LOC", "paris": "LOC", "cairo": "LOC", "wuhan": "LOC",
    "america": "GPE", "china": "GPE", "egypt": "GPE", "france": "GPE",
    "who": "ORG", "un": "ORG", "nasa": "ORG", "twitter": "ORG",
    "monday": "DATE", "tuesday": "DATE", "january": "DATE", "march": "DATE",
}

_CONTENT = frozenset({"VERB", "NOUN", "PROPN", "ADJ", "ADV", "NUM"})


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text)


def _tag(token: str, position: int) -> str:
    low = token.lower()
    if not token[0].isalnum():
        return "PUNCT"
    if token.replace(",", "").replace(".", "").isdigit():
        return "NUM"
    if low in _PRONOUNS:
        return "PRON"
    if low in _DETERMINERS:
        return "DET"
    if low in _ADPOSITIONS:
        return "ADP"
    if low in _CONJUNCTIONS:
        return "CCONJ"
    if low in _AUXILIARIES:
        return "AUX"
    if position > 0 and token[0].isupper():
        return "PROPN"
    if low.endswith("ly"):
        return "ADV"
    if low.endswith(("ing", "ed", "ise", "ize")):
        return "VERB"
    if low.endswith(("ous", "ful", "ive", "ible", "able", "ic")):
        return "ADJ"
    return "NOUN"


_REL_BY_POS = {"PUNCT": "punct", "PRON": "nsubj", "ADP": "case",
               "DET": "det", "ADV": "advmod", "ADJ": "amod", "NUM": "nummod",
               "AUX": "aux", "CCONJ": "cc", "PROPN": "nmod", "VERB": "conj"}


def _named_entity(token: str, upos: str, position: int) -> str | None:
    low = token.lower()
    if low in _GAZETTEER:
        return _GAZETTEER[low]
    if upos == "NUM" and len(token) == 4 and token.isdigit():
        return "DATE"
    if token.isupper() and len(token) >= 2 and token.isalpha():
        return "ORG"
    if upos == "PROPN":
        return "PER"
    return None


def annotate_tweet(tweet_id: str, text: str, job: ExportJob) -> dict:
    """One annotation JSONL row: token surfaces with POS, NE, dependency head
    and relation, and the versioned stopword flag."""
    stopwords = get_stopwords(job.stopword_list)
    surfaces = tokenize(text)
    if not surfaces:
        raise ExportError(f"tweet {tweet_id!r} produced no tokens")
    tags = [_tag(s, i) for i, s in enumerate(surfaces)]
    root = next((i for i, t in enumerate(tags) if t in _CONTENT), 0)
    tokens = []
    for i, (surface, upos) in enumerate(zip(surfaces, tags)):
        tokens.append({
            "surface": surface,
            "lemma": surface.lower(),
            "upos": upos,
            "head": -1 if i == root else root,
            "dep_rel": "root" if i == root else _REL_BY_POS.get(upos, "dep"),
            "ne_type": _named_entity(surface, upos, i),
            "is_stopword": surface.lower() in stopwords,
        })
    return {"tweet_id": tweet_id, "tokens": tokens}


def read_input_rows(path):
    """Input rows need only "id"/"text" ("claim_id" accepted for claims)."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            obj = json.loads(line)
            uid = obj.get("id", obj.get("tweet_id", obj.get("claim_id")))
            if uid is None:
                raise ExportError(f"{path}:{lineno}: no id field")
            rows.append((str(uid), obj))
    if not rows:
        raise ExportError(f"no input rows in {path}")
    return rows


def export_annotations(job: ExportJob) -> tuple[list[dict], int]:
    """Annotate every input tweet; per-tweet failures are skipped and logged,
    and a skip rate above 1% aborts the job."""
    rows = read_input_rows(job.input_path)
    out = []
    skipped = 0
    for uid, obj in rows:
        try:
            out.append(annotate_tweet(uid, str(obj.get("text", "")), job))
        except ExportError as exc:
            skipped += 1
            log.warning("skipping %s: %s", uid, exc)
    if skipped > 0.01 * len(rows):
        raise ExportError(f"{skipped}/{len(rows)} inputs failed annotation; "
                          "aborting (skip rate above 1%)")
    return out, skipped
