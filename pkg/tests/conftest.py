import json

import numpy as np
import pytest

from claimcheck.corpus import AnnotatedTweet, TokenAnnotation

POS_CYCLE = ("NOUN", "VERB", "PROPN", "ADJ", "ADV", "NUM", "ADP", "PRON",
             "DET", "CCONJ")


def make_token(surface="word", upos="NOUN", head=-1, dep_rel="root",
               ne_type=None, is_stopword=False, lemma=None):
    return TokenAnnotation(surface=surface, lemma=lemma or surface, upos=upos,
                           head=head, dep_rel=dep_rel, ne_type=ne_type,
                           is_stopword=is_stopword)


def make_tweet(tweet_id, upos_list, dep=None, ne=None, stop=None):
    """Build an AnnotatedTweet from a POS list; token 0 is the root and every
    other token attaches to it unless `dep` overrides (head, rel) per index."""
    tokens = []
    for i, upos in enumerate(upos_list):
        head, rel = (-1, "root") if i == 0 else (0, "dep")
        if dep and i in dep:
            head, rel = dep[i]
        tokens.append(make_token(
            surface=f"w{i}", upos=upos, head=head, dep_rel=rel,
            ne_type=ne.get(i) if ne else None,
            is_stopword=bool(stop and i in stop)))
    return AnnotatedTweet(tweet_id=tweet_id, tokens=tuple(tokens))


def write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")
    return path


def tweet_row(tid, text="some text", topic="t", claim=None, worthy=None):
    row = {"id": tid, "text": text, "topic_id": topic}
    if claim is not None:
        row["claim_label"] = claim
    if worthy is not None:
        row["checkworthy_label"] = worthy
    return row


def annotation_row(tweet: AnnotatedTweet):
    return {
        "tweet_id": tweet.tweet_id,
        "tokens": [
            {"surface": t.surface, "lemma": t.lemma, "upos": t.upos,
             "head": t.head, "dep_rel": t.dep_rel, "ne_type": t.ne_type,
             "is_stopword": t.is_stopword}
            for t in tweet.tokens
        ],
    }


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
