# Static figures for the lowrankeiv simulation harness CSV outputs.

from .render import (
    KINDS,
    FigureSpec,
    RenderError,
    RenderResult,
    load_mean_errors,
    load_traces,
    render,
    render_consistency,
    render_convergence,
    render_rescaled,
)

__all__ = [
    "KINDS",
    "FigureSpec",
    "RenderError",
    "RenderResult",
    "load_mean_errors",
    "load_traces",
    "render",
    "render_consistency",
    "render_convergence",
    "render_rescaled",
]
