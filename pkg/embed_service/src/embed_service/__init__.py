"""HTTP microservice serving unit-normalized transformer sentence embeddings."""

__version__ = "0.1.0"
