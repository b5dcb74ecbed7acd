import xml.etree.ElementTree as ET

import numpy as np

from dyadscan.dtw import dtw
from dyadscan.plots import alignment_svg, confusion_svg, lines_svg, panels_svg

NS = "{http://www.w3.org/2000/svg}"


def _count(svg, tag):
    return len(ET.fromstring(svg).findall(f".//{NS}{tag}"))


def test_confusion_cells_and_labels():
    svg = confusion_svg(np.array([[5, 2], [1, 7]]), ("MM", "FF"), "coop-sex")
    assert _count(svg, "rect") == 4
    texts = [t.text for t in ET.fromstring(svg).iter(f"{NS}text")]
    for v in ("5", "2", "1", "7", "MM", "FF", "coop-sex", "Predicted label", "Actual label"):
        assert v in texts


def test_confusion_all_zero():
    assert _count(confusion_svg(np.zeros((2, 2), dtype=int)), "rect") == 4


def test_lines_and_panels():
    x = np.linspace(0, 1, 20)
    svg = lines_svg({"MM": (x, x ** 2), "FF": (x, x)}, "t", "x", "y")
    assert _count(svg, "polyline") == 2
    svg = panels_svg([("a", {"MM": (x, x)}), ("b", {"MM": (x, x), "FF": (x, 1 - x)})])
    assert _count(svg, "g") == 2 and _count(svg, "polyline") == 3


def test_alignment_connectors():
    a, b = np.array([0.0, 1.0, 0.5]), np.array([0.0, 0.2, 1.0, 0.5])
    path = dtw(a, b).path
    svg = alignment_svg(a, b, path, "ch 1")
    assert _count(svg, "line") == len(path)
    assert _count(svg, "polyline") == 2


def test_title_is_escaped():
    svg = confusion_svg(np.eye(2, dtype=int), title="a < b & c")
    assert ET.fromstring(svg) is not None
