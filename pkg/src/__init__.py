"""Learning from crowds with graph-linked annotator transition estimates."""
__version__ = "0.1.0"
