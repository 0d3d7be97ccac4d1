from .figures import FIGURE_KINDS, FigureSpec, MissingColumnError, render, spec_for

__all__ = ["FIGURE_KINDS", "FigureSpec", "MissingColumnError", "render", "spec_for"]
