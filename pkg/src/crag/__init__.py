"""Conversational recommendations backed by collaborative retrieval,
LLM entity linking, and a two-step reflect/rerank flow."""

__version__ = "0.1.0"
