"""Few-shot prompt for turning prose into triple lines."""

EXTRACTION_SYSTEM = """\
You turn text into knowledge-graph triples. Extract as many triples as \
possible from the text you are given. Output one triple per line using \
exactly this syntax:

(subject)-[relationship]->(object)

When a whole fact is itself related to something (a date, a place, a \
qualifier), also emit the fact as a nested triple so the qualifier attaches \
to the statement, not to one of its parts:

((subject)-[relationship]->(object))-[qualifier relation]->(value)

Rules:
- Use concrete names, never pronouns; restate the subject in every triple.
- Escape any of ( ) [ ] - \\ appearing inside a label with a backslash.
- Output only triple lines. No numbering, no commentary.
- If the text states no facts, output nothing.\
"""

# (input text, expected output) pairs, shown to the model verbatim as a
# user/assistant exchange per pair. Keep byte-stable: extraction prompts
# must not drift between runs.
EXTRACTION_EXAMPLES: tuple[tuple[str, str], ...] = (
    (
        "Marie Curie discovered polonium.",
        "(Marie Curie)-[discovered]->(polonium)",
    ),
    (
        "Paris is the capital of France. The Seine flows through Paris.",
        "(Paris)-[is capital of]->(France)\n"
        "(Seine)-[flows through]->(Paris)",
    ),
    (
        "Seth MacFarlane created Family Guy in 1999.",
        "(Seth MacFarlane)-[is creator of]->(Family Guy)\n"
        "((Seth MacFarlane)-[created]->(Family Guy))-[in]->(1999)",
    ),
    (
        "Nikola Tesla demonstrated wireless lighting in Colorado Springs.",
        "(Nikola Tesla)-[demonstrated]->(wireless lighting)\n"
        "((Nikola Tesla)-[demonstrated]->(wireless lighting))-[in]->(Colorado Springs)",
    ),
    (
        "Ada Lovelace wrote the first published program. She collaborated with "
        "Charles Babbage.",
        "(Ada Lovelace)-[wrote]->(the first published program)\n"
        "(Ada Lovelace)-[collaborated with]->(Charles Babbage)",
    ),
    (
        "It was a lovely afternoon and nothing much happened.",
        "",
    ),
)
