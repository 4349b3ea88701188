"""Offline export of annotations and embeddings in the claimcheck
interchange formats (annotation JSON Lines, CKEM tensors).

This package never imports the consumer; the file formats are the contract.
"""

from .job import ExportJob, ExportError

__all__ = ["ExportJob", "ExportError"]
__version__ = "0.1.0"
