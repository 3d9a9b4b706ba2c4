import io
import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from conftest import make_instance
from stubmatch import (
    BoxSpec,
    FormatError,
    Matching,
    UnsupportedDimensionError,
    parse_degree_spec,
    render_svg,
    sample_instance,
    stable_multi_match,
)
from stubmatch import io as sio
from stubmatch.svg import clip_segment, edge_segments


def test_points_round_trip_bitwise():
    inst = sample_instance(BoxSpec(3, 4.0), parse_degree_spec("1:0.5,3:0.5"), 2)
    text = sio.to_string(sio.write_points_csv, inst, sio.instance_meta(inst, seed=2))
    back, meta = sio.read_points_csv(io.StringIO(text))
    assert np.array_equal(back.coords, inst.coords)
    assert np.array_equal(back.degrees, inst.degrees)
    assert back.box == inst.box and meta["seed"] == "2"


def test_matching_round_trip_bitwise():
    inst = sample_instance(BoxSpec(2, 6.0), parse_degree_spec("2"), 2)
    mt = stable_multi_match(inst).matching
    back, meta = sio.read_matching_csv(io.StringIO(sio.to_string(sio.write_matching_csv, mt)))
    assert back.edge_set() == mt.edge_set()
    assert np.array_equal(back.length, mt.length)


def test_bad_headers():
    with pytest.raises(FormatError):
        sio.read_points_csv(io.StringIO("# d=2\n# L=1.0\nx,y,deg\n"))
    with pytest.raises(FormatError):
        sio.read_matching_csv(io.StringIO("# n_points=2\na,b\n"))
    with pytest.raises(FormatError):
        sio.read_matching_csv(io.StringIO("i,j,length\n0,1,1.0\n"))


def test_types_csv():
    inst = make_instance([0.0, 1.0, 2.0], [1, 1, 2], 5.0)
    text = sio.to_string(sio.write_types_csv, inst, np.array([1, 2, 0]))
    assert text == "index,degree,type\n0,1,1\n1,1,2\n"


def test_clip_segment():
    assert clip_segment(-1.0, 0.5, 2.0, 0.5, 0.0, 1.0) == (0.0, 0.5, 1.0, 0.5)
    assert clip_segment(2.0, 2.0, 3.0, 3.0, 0.0, 1.0) is None


def test_wrapping_edge_gives_two_aligned_segments():
    segs = edge_segments([0.5, 5.0], [9.5, 5.2], 10.0, True)
    assert len(segs) == 2
    dirs = []
    for x0, y0, x1, y1 in segs:
        v = np.array([x1 - x0, y1 - y0])
        dirs.append(v / np.linalg.norm(v))
        assert 0.0 <= min(x0, x1) and max(x0, x1) <= 10.0
    assert np.allclose(dirs[0], dirs[1])
    total = sum(math.hypot(x1 - x0, y1 - y0) for x0, y0, x1, y1 in segs)
    assert math.isclose(total, math.hypot(1.0, 0.2))


def test_interior_edge_single_segment():
    assert edge_segments([1.0, 1.0], [2.0, 2.0], 10.0, True) == [(1.0, 1.0, 2.0, 2.0)]


def test_empty_svg_is_background_only():
    inst = make_instance(np.zeros((0, 2)), [], 5.0, periodic=True)
    root = ET.fromstring(render_svg(inst))
    tags = [el.tag.split("}")[-1] for el in root]
    assert tags == ["rect"]


def test_svg_parses_and_counts(rng):
    inst = sample_instance(BoxSpec(2, 8.0), parse_degree_spec("1:0.05,2:0.95"), 1)
    mt = stable_multi_match(inst).matching
    root = ET.fromstring(render_svg(inst, mt))
    circles = root.findall(".//{http://www.w3.org/2000/svg}circle")
    lines = root.findall(".//{http://www.w3.org/2000/svg}line")
    assert len(circles) == len(inst)
    assert len(mt) <= len(lines) <= 2 * len(mt)
    assert root.get("viewBox") == "0 0 8 8"


def test_svg_needs_planar_instance():
    inst = sample_instance(BoxSpec(3, 2.0), parse_degree_spec("1"), 1)
    with pytest.raises(UnsupportedDimensionError):
        render_svg(inst)
