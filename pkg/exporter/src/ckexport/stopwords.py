"""Versioned stopword lists. Lists are frozen under an id so that fixture
re-exports stay reproducible; edit by adding a new version, never in place."""

STOPWORD_LISTS = {
    "en-v1": frozenset("""
        a an the this that these those and or but if then than so because
        i you he she it we they me him her us them my your his its our their
        is am are was were be been being do does did have has had will would
        shall should can could may might must of in on at by for with from to
        as about into over after before between out against during without
        not no nor very too just there here when where who whom which what
    """.split()),
    "ar-v1": frozenset("""
        في من على ان أن إلى عن هذا هذه ذلك تلك هو هي هم نحن انت أنا التي الذي
        كان كانت يكون ما لا لم لن قد و أو ثم حتى اذا إذا كل بعض غير بين
    """.split()),
}

DEFAULT_LIST = {"en": "en-v1", "ar": "ar-v1"}


def get_stopwords(list_id: str) -> frozenset:
    try:
        return STOPWORD_LISTS[list_id]
    except KeyError:
        raise KeyError(f"unknown stopword list {list_id!r}; "
                       f"known: {sorted(STOPWORD_LISTS)}") from None
