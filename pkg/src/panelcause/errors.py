"""Error and warning types shared across the package.

Every failure raised by this package carries a stable machine-readable
``code`` (e.g. ``POLICY_REVERSAL``) alongside the human-readable message,
so callers — the CLI in particular — can branch on failures without
parsing prose.
"""

from __future__ import annotations


class PanelCauseError(Exception):
    """Base exception: ``code`` identifies the failure, ``details`` carries data."""

    def __init__(self, code: str, message: str, **details):
        super().__init__(message)
        self.code = code
        self.message = message
        self.details = details

    def __str__(self) -> str:
        return f"{self.code}: {self.message}"


class PanelCauseWarning(UserWarning):
    """Non-fatal condition (e.g. SINGLE_LEVEL absorption, SINGLETON_COHORT)."""

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code
