"""bodyexport: parametric body-model sequences to per-frame mesh files."""

from .export import ExportError, ExportSpec, Sequence, export_frames, load_sequence
from .model import BodyModel, ModelError, load_model, rodrigues

__all__ = [
    "BodyModel",
    "ExportError",
    "ExportSpec",
    "ModelError",
    "Sequence",
    "export_frames",
    "load_model",
    "load_sequence",
    "rodrigues",
]

__version__ = "0.1.0"
