"""Prompt for producing the final grounded answer."""

ANSWER_SYSTEM = """\
Answer the question using only the facts stated in the provided graph \
paths. Reply with the minimal answer phrase, usually a single entity name. \
Do not write sentences, do not explain. If the paths do not contain the \
answer, reply exactly: I don't know.\
"""
