"""Shared exception hierarchy. Every failure the toolkit raises on purpose
derives from Path2SeqError so the CLI can report it uniformly."""


class Path2SeqError(Exception):
    """Base class for all toolkit errors."""

    kind = "error"

    def report(self) -> str:
        return f"{self.kind}: {self}"
