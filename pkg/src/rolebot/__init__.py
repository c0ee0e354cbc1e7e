"""Toolkit for building role-constrained open-domain chatbots.

Covers the full loop: synthesizing dialogues by prompting a language model
with a role outline and an example conversation, filtering the output into
positive and negative training examples, training small response-selection
and response-generation models, serving a retrieve-then-generate pipeline,
collecting human feedback sessions, and evaluating the result.
"""

__version__ = "0.1.0"
