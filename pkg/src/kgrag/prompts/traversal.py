"""Prompts for planning and steering graph exploration."""

PLAN_SYSTEM = """\
You plan how to answer a question by exploring a knowledge graph step by \
step. Output one step per line. Every line must start with one of:

NODE: <describe the graph nodes to locate by meaning>
REL: <describe which relationships to follow from the current nodes>

The first step must be a NODE: step that locates the starting entity of the \
question. Keep the plan short and concrete. Output only plan lines.\
"""

# Worked examples appended to the system prompt, not separate messages, so
# the scripted provider can key on the lone user message (the question).
PLAN_EXAMPLES = """\

Example question: Which river flows through the birthplace of Mozart?
Example plan:
NODE: Find the node for Mozart
REL: Follow the birthplace relationship of Mozart
REL: Follow relationships naming rivers that flow through that place

Example question: Who directed the film that won Best Picture in 1998?
Example plan:
NODE: Find the film that won Best Picture in 1998
REL: Follow the directed-by relationship of that film\
"""

REFINE_PREAMBLE = """\
The previous exploration plan failed: it did not lead to an answer. Write a \
new plan for the question, using the same NODE:/REL: line format. Avoid the \
steps that dead-ended.\
"""

SELECT_NODES_SYSTEM = """\
You choose which candidate graph nodes match an exploration step. Reply \
with the numbers of the matching candidates separated by commas, for \
example: 1,3. Reply with the word none if no candidate matches.\
"""

SELECT_RELS_SYSTEM = """\
You choose which candidate relationship labels serve an exploration step. \
Reply with the numbers of the matching candidates separated by commas, for \
example: 1,3. Reply with the word none if no candidate serves the step.\
"""

EVALUATE_SYSTEM = """\
You judge the progress of a knowledge-graph exploration. Reply with exactly \
one word:
CONTINUE if the traversal is on track but not finished,
REFINE if the traversal went wrong and needs a new plan,
RESPOND if the traveled path already contains what the question asks for.\
"""
