"""Translation quality estimation mixing word-alignment features with a
probabilistic model of human judgments."""

__version__ = "0.1.0"
