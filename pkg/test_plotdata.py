#!/usr/bin/env python3
"""
Tests for plot data output: .dat layout and reproducible SVGs
"""

import os
import sys
from types import SimpleNamespace

import numpy as np
import pytest

sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from utils.plotdata import emit_plotdata, write_dat


def fake_profiles():
    X = np.linspace(-5.0, 5.0, 21)
    return [SimpleNamespace(T=T, X=X, Y=np.vstack([np.cbrt(-X) + T, X, X ** 2, X ** 3])) for T in (-1.0, 0.0)]


def fake_poles():
    angles = np.linspace(-0.5, 0.5, 3)
    radii = np.linspace(0.0, 4.0, 5)
    hits = np.zeros((3, 4), dtype=bool)
    hits[1, 2] = True
    return SimpleNamespace(angles=angles, radii=radii, hits=hits, verdict="1 pole event")


def test_write_dat_layout(tmp_path):
    path = write_dat(str(tmp_path / "table.dat"), ["x", "y"], [[0.0, 0.5], [1.0, 0.25]])
    with open(path, encoding="utf-8") as f:
        lines = f.read().splitlines()
    assert lines == ["# x y", "0 1", "0.5 0.25"]


def test_write_dat_blocks(tmp_path):
    path = write_dat(str(tmp_path / "grid.dat"), ["a", "b"], [[1, 1, 2, 2], [1, 2, 1, 2]], blocks=2)
    with open(path, encoding="utf-8") as f:
        lines = f.read().splitlines()
    assert lines == ["# a b", "1 1", "1 2", "", "2 1", "2 2"]


def test_p12_plot_files(tmp_path):
    files = emit_plotdata({"profiles": fake_profiles()}, "p12", str(tmp_path))
    names = sorted(os.path.basename(path) for path in files)
    assert names == ["p12.svg", "p12_T+0.000.dat", "p12_T-1.000.dat"]
    with open(tmp_path / "plots" / "p12_T-1.000.dat", encoding="utf-8") as f:
        assert f.readline() == "# X U U_X U_XX\n"


def test_svg_is_reproducible(tmp_path):
    first = emit_plotdata({"poles": fake_poles()}, "poles", str(tmp_path / "a"))
    second = emit_plotdata({"poles": fake_poles()}, "poles", str(tmp_path / "b"))
    svg_a = [path for path in first if path.endswith(".svg")][0]
    svg_b = [path for path in second if path.endswith(".svg")][0]
    with open(svg_a, "rb") as a, open(svg_b, "rb") as b:
        content = a.read()
        assert content == b.read()
    assert b"<dc:date>" not in content


def test_unknown_plot_kind(tmp_path):
    with pytest.raises(ValueError):
        emit_plotdata({}, "spectrum", str(tmp_path))


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
