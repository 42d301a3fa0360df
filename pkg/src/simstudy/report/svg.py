"""Minimal deterministic SVG writer.

Coordinates are printed with 10 decimals (trailing zeros stripped), so equal
inputs give byte-identical files and every coordinate is recoverable to well
under 1e-9. Styling lives in CSS classes; the default style sheet is embedded
but golden tests only depend on class names.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from xml.sax.saxutils import escape, quoteattr

STYLE = """\
.cover{stroke:#1f5fbf;stroke-width:1}
.noncover{stroke:#7b2d9b;stroke-width:1}
.mcse{stroke:#e0b000;stroke-width:1.5;fill:#e0b000}
.reference{stroke:#333;stroke-width:1;stroke-dasharray:4 3}
.point{fill:#1f5fbf;stroke:none}
.mean{stroke:#e0b000;stroke-width:3}
.stem{stroke:#555;stroke-width:1.5}
.step{fill:none;stroke-width:1.5}
.band{fill:#eee;stroke:#999;stroke-width:0.5}
.axis{stroke:#000;stroke-width:1}
.loa{stroke:#b03030;stroke-width:1;stroke-dasharray:2 2}
.label{font-family:sans-serif;font-size:11px}
.title{font-family:sans-serif;font-size:12px;font-weight:bold}
.paren{font-family:sans-serif;font-size:14px;fill:#e0b000;text-anchor:middle}
.note{font-family:sans-serif;font-size:11px;fill:#777}
"""


def num(x: float) -> str:
    text = f"{float(x):.10f}".rstrip("0").rstrip(".")
    return "0" if text in ("-0", "") else text


@dataclass(frozen=True)
class Axis:
    """Linear map from data interval [d0, d1] to pixel interval [p0, p1]."""

    d0: float
    d1: float
    p0: float
    p1: float

    def __call__(self, v: float) -> float:
        span = self.d1 - self.d0
        if span == 0:
            return (self.p0 + self.p1) / 2
        return self.p0 + (v - self.d0) / span * (self.p1 - self.p0)

    def scale(self) -> float:
        span = self.d1 - self.d0
        return 0.0 if span == 0 else (self.p1 - self.p0) / span

    def columns(self, prefix: str) -> dict[str, float]:
        return {f"{prefix}_d0": self.d0, f"{prefix}_d1": self.d1, f"{prefix}_p0": self.p0, f"{prefix}_p1": self.p1}


def padded(lo: float, hi: float, frac: float = 0.05) -> tuple[float, float]:
    if hi < lo:
        lo, hi = hi, lo
    span = hi - lo
    if span == 0:
        span = abs(lo) if lo else 1.0
    return lo - frac * span, hi + frac * span


class Svg:
    def __init__(self, width: int, height: int, title: str = ""):
        self.width = width
        self.height = height
        self.parts: list[str] = []
        if title:
            self.text(width / 2, 16, title, "title", anchor="middle")

    def _attrs(self, id_, cls, extra):
        out = []
        if id_:
            out.append(f"id={quoteattr(id_)}")
        if cls:
            out.append(f"class={quoteattr(cls)}")
        out.extend(f"{k}={quoteattr(v)}" for k, v in extra)
        return " ".join(out)

    def line(self, x1, y1, x2, y2, cls="", id_=""):
        pos = (("x1", num(x1)), ("y1", num(y1)), ("x2", num(x2)), ("y2", num(y2)))
        self.parts.append(f"<line {self._attrs(id_, cls, pos)}/>")

    def rect(self, x, y, w, h, cls="", id_=""):
        pos = (("x", num(x)), ("y", num(y)), ("width", num(w)), ("height", num(h)))
        self.parts.append(f"<rect {self._attrs(id_, cls, pos)}/>")

    def circle(self, cx, cy, r, cls="", id_=""):
        pos = (("cx", num(cx)), ("cy", num(cy)), ("r", num(r)))
        self.parts.append(f"<circle {self._attrs(id_, cls, pos)}/>")

    def polyline(self, points, cls="", id_="", style=""):
        pts = " ".join(f"{num(x)},{num(y)}" for x, y in points)
        extra = [("points", pts)]
        if style:
            extra.append(("style", style))
        self.parts.append(f"<polyline {self._attrs(id_, cls, extra)}/>")

    def text(self, x, y, content, cls="label", id_="", anchor=""):
        extra = [("x", num(x)), ("y", num(y))]
        if anchor:
            extra.append(("text-anchor", anchor))
        self.parts.append(f"<text {self._attrs(id_, cls, extra)}>{escape(str(content))}</text>")

    def group_open(self, id_="", cls=""):
        self.parts.append(f"<g {self._attrs(id_, cls, ())}>" if (id_ or cls) else "<g>")

    def group_close(self):
        self.parts.append("</g>")

    def render(self) -> str:
        head = (
            '<?xml version="1.0" encoding="UTF-8"?>\n'
            f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{self.width}" '
            f'height="{self.height}" viewBox="0 0 {self.width} {self.height}">\n'
            f"<style>\n{STYLE}</style>\n"
        )
        return head + "\n".join(self.parts) + "\n</svg>\n"


def sidecar_csv(rows: list[dict]) -> str:
    """CSV text for a list of homogeneous-or-not dicts (union of keys, first-seen order)."""
    header = list(dict.fromkeys(k for r in rows for k in r))
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=header, lineterminator="\n", restval="")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr_value(v)) for k, v in r.items()})
    return buf.getvalue()


def repr_value(v):
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return format(v, ".17g")
    return v


@dataclass
class Figure:
    svg: str
    sidecar: str

    def write(self, stem) -> None:
        from ..records import write_text

        write_text(f"{stem}.svg", self.svg)
        write_text(f"{stem}.csv", self.sidecar)
