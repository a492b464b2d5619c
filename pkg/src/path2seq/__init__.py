"""path2seq: parse a small Java-like language into trees, represent each
snippet as sampled terminal-to-terminal tree paths, and train an
attention encoder-decoder that emits subtoken sequences from them."""

__version__ = "0.1.0"

from .errors import Path2SeqError

__all__ = ["Path2SeqError", "__version__"]
