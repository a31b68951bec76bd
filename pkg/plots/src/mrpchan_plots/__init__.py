"""Figure scripts for the channel tool's CSV outputs."""

from .figures import FigureInputError, FigureSpec, plot_contour, plot_density

__all__ = ["FigureInputError", "FigureSpec", "plot_contour", "plot_density"]
