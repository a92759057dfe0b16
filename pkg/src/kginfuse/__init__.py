"""Knowledge-graph infused sequence classification toolkit."""

__version__ = "0.1.0"
