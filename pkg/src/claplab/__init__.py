"""claplab: train communicating agent teams, then train newcomers that
join them from logged interaction data."""

__version__ = "0.1.0"
