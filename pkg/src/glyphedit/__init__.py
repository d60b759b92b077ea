"""glyphedit: learn to edit digit images from natural-language instructions."""

__version__ = "0.1.0"
