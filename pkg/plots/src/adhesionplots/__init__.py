"""Figure rendering for adhesionlab study directories."""

from .figures import diagnostic_traces, error_vs_n, filmstrip, render_study
from .tables import (FieldProfile, RunTrace, SchemaError, StudyDir,
                     StudyTable)

__all__ = [
    "FieldProfile", "RunTrace", "SchemaError", "StudyDir", "StudyTable",
    "diagnostic_traces", "error_vs_n", "filmstrip", "render_study",
]

__version__ = "0.1.0"
