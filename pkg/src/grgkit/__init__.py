"""Desk-scale generate-retrieve-generate conversational answering toolkit."""

__version__ = "0.1.0"
