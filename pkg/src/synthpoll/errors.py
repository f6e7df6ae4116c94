"""Shared exception types.

Every named failure mode in the toolkit is a distinct class so callers
(and the CLI exit-code mapping) can dispatch on the error family rather
than parsing messages.
"""

from __future__ import annotations


class SynthpollError(Exception):
    """Base class for all toolkit errors."""


# --- configuration / orchestration ---------------------------------------


class ConfigError(SynthpollError):
    """Pipeline configuration is missing, malformed, or references absent files."""


# --- survey ingestion ------------------------------------------------------


class DataValidationError(SynthpollError):
    """Base for survey-data validation failures."""


class MissingColumn(DataValidationError):
    """Input header lacks a schema variable."""


class InvalidValue(DataValidationError):
    """A cell is neither a known category nor a recognized missing code."""


class EmptyDataset(DataValidationError):
    """The input file contains zero data rows."""


class AllMissing(DataValidationError):
    """A variable has no valid values, so imputation is impossible."""


class EverythingRemoved(DataValidationError):
    """An outlier threshold removed every record; the threshold is misconfigured."""


# --- anonymization ---------------------------------------------------------


class NotGeneralized(SynthpollError):
    """A leaf code was passed where a generalized code is required."""


class CombinatorialBudgetExceeded(SynthpollError):
    """Itemset enumeration would exceed the configured cap."""


# --- profile conditioning --------------------------------------------------


class MissingVariable(SynthpollError):
    """A profile lacks a variable required by the prompt template."""


# --- gateway ---------------------------------------------------------------


class BackendError(SynthpollError):
    """Base for completion-backend failures."""


class BackendUnavailable(BackendError):
    """All retry attempts against the backend were exhausted."""


class RateLimited(BackendError):
    """The backend signaled throttling beyond the retry budget."""


# --- metrics ---------------------------------------------------------------


class ZeroExpectedCategory(SynthpollError):
    """Expected mass is zero where observed mass is positive; the chi-square term is undefined."""


class DegenerateMarginals(SynthpollError):
    """Both marginals are deterministic, so the normalized-MI denominator is zero."""


# --- governance ------------------------------------------------------------


class EmptyRuleTable(SynthpollError):
    """Risk classification was invoked with no rules."""


class MissingOversightStatement(SynthpollError):
    """A High or Unacceptable tier report lacks a human-oversight statement."""


class ChainBroken(SynthpollError):
    """Audit log verification failed; an entry was mutated or reordered."""


# --- review loop -----------------------------------------------------------


class InsufficientOverlap(SynthpollError):
    """Fewer than two annotators share at least one task."""


class ReviewImportError(SynthpollError):
    """Base for annotation-file import failures; carries the offending line number."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ParseError(ReviewImportError):
    """A line in an annotation file is not a valid annotation record."""


class DuplicateAnnotation(ReviewImportError):
    """An annotation repeats an existing (task, annotator) pair."""
