"""Figure generation from serialized catsim run artifacts.

This package reads only the files a run leaves behind (results.csv,
meta.json, wigner_<tag>.csv); it never imports the simulation code.
"""

__version__ = "0.1.0"

from .artifacts import ArtifactError, load_run
from .render import FigureSpec, render

__all__ = ["ArtifactError", "FigureSpec", "load_run", "render"]
