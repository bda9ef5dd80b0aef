"""Multi-person pose assembly and pose-guided part segmentation on score maps."""

__version__ = "0.1.0"
