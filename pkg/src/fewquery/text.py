"""Shared tokenizer and the built-in stoplist.

The attacker and the local target tokenize identically, so a token index in an
attack trace always refers to the same feature the model saw.
"""
import string

_PUNCT = string.punctuation

STOPWORDS = frozenset(
    """
    a about above after again against all also am an and any are aren't as at
    be because been before being below between both but by can can't cannot
    could couldn't did didn't do does doesn't doing don't down during each few
    for from further had hadn't has hasn't have haven't having he her here hers
    herself him himself his how i if in into is isn't it it's its itself just
    let's me more most mustn't my myself no nor not of off on once only or other
    ought our ours ourselves out over own same shan't she should shouldn't so
    some such than that that's the their theirs them themselves then there
    there's these they this those through to too under until up very was wasn't
    we were weren't what when where which while who whom why will with won't
    would wouldn't you your yours yourself yourselves
    """.split()
)


def tokenize(text, lowercase=True):
    """Whitespace split, then strip leading/trailing ASCII punctuation.

    Tokens that are pure punctuation disappear.
    """
    if lowercase:
        text = text.lower()
    tokens = []
    for raw in text.split():
        tok = raw.strip(_PUNCT)
        if tok:
            tokens.append(tok)
    return tokens


def detokenize(tokens):
    return " ".join(tokens)
