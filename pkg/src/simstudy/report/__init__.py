from .plots import (
    render_diff_vs_mean, render_lollipop, render_nested_loop, render_scatter_matrix, render_strip,
    render_zip_plot,
)
from .svg import Figure
from .table import decimals_for, format_cell, render_table

__all__ = [
    "Figure", "decimals_for", "format_cell", "render_diff_vs_mean", "render_lollipop", "render_nested_loop",
    "render_scatter_matrix", "render_strip", "render_table", "render_zip_plot",
]
