"""Post-hoc figure generation from adl-lab run directories."""

from adl_figures.figures import (
    FIGURES,
    FigureDataError,
    FigureSkip,
    FigureSpec,
    RenderReport,
    RunData,
    cumulative_objective,
    load_run,
    render,
)

__all__ = [
    "FIGURES",
    "FigureDataError",
    "FigureSkip",
    "FigureSpec",
    "RenderReport",
    "RunData",
    "cumulative_objective",
    "load_run",
    "render",
]
