"""LLM-as-judge machine translation evaluation harness.

Renders scoring and error-detection prompts in four input modes, talks to
chat/base model endpoints with deterministic replay, parses the answers, and
meta-evaluates them against human MQM annotations.
"""

__version__ = "0.1.0"
