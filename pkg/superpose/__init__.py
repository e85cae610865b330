"""Super-resolution deconvolution by superposition of equal-intensity point sources."""

__version__ = "0.3.0"
