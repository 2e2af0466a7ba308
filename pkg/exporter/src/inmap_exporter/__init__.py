"""Feature exporter: CLIP checkpoints to inmap binary matrices."""

from .datasets import ImageFolderSplit, load_split
from .encoders import ClipEncoder
from .export import encode_image_matrix, encode_text_proxies, export_features
from .formats import ExportError, write_labels, write_matrix
from .prompts import ENSEMBLE_TEMPLATES, SINGLE_TEMPLATE, templates_for

__all__ = [
    "ImageFolderSplit",
    "load_split",
    "ClipEncoder",
    "encode_image_matrix",
    "encode_text_proxies",
    "export_features",
    "ExportError",
    "write_labels",
    "write_matrix",
    "ENSEMBLE_TEMPLATES",
    "SINGLE_TEMPLATE",
    "templates_for",
]
