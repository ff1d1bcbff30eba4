import math

import numpy as np
import pytest

from models.graph import DegreeSequenceError
from utils.degrees import DegreeModel, hill_exponent, powerlaw_degrees, regular_degrees


def test_parse_regular():
    assert DegreeModel.parse("regular:3") == DegreeModel("regular", d=3)


def test_parse_powerlaw_inline_and_flags():
    inline = DegreeModel.parse("powerlaw:2.5:2:40")
    assert (inline.alpha, inline.d_min, inline.d_max_cap) == (2.5, 2, 40)
    bare = DegreeModel.parse("powerlaw", alpha=2.2, d_min=1, d_max_cap=30)
    assert (bare.alpha, bare.d_min, bare.d_max_cap) == (2.2, 1, 30)


def test_parse_file():
    assert DegreeModel.parse("file:degrees.txt").path == "degrees.txt"


@pytest.mark.parametrize("spec", ["regular:x", "regular:0", "powerlaw:2.5:2", "powerlaw:0.9:1:10",
                                  "powerlaw:2.5:5:3", "powerlaw", "file:", "lognormal:1"])
def test_parse_errors(spec):
    with pytest.raises(ValueError):
        DegreeModel.parse(spec)


def test_flag_alpha_must_exceed_one():
    with pytest.raises(ValueError):
        DegreeModel.parse("powerlaw", alpha=0.5, d_max_cap=10)


def test_regular_degrees():
    d_out, d_in = regular_degrees(5, 2)
    assert d_out.tolist() == [2] * 5
    assert d_in is not d_out
    with pytest.raises(DegreeSequenceError):
        regular_degrees(3, 3)


@pytest.mark.parametrize("seed", range(10))
def test_powerlaw_degrees_balanced_and_bounded(seed):
    rng = np.random.Generator(np.random.Philox(seed))
    d_out, d_in = powerlaw_degrees(200, 2.5, 2, 40, rng)
    assert d_out.sum() == d_in.sum()
    for seq in (d_out, d_in):
        assert seq.min() >= 2
        assert seq.max() <= 40


def test_powerlaw_cap_follows_n():
    d_out, d_in = powerlaw_degrees(10, 1.5, 1, 1000, np.random.Generator(np.random.Philox(0)))
    assert max(d_out.max(), d_in.max()) <= 9
    with pytest.raises(DegreeSequenceError):
        powerlaw_degrees(4, 2.5, 5, 10, np.random.Generator(np.random.Philox(0)))


def test_powerlaw_degrees_deterministic():
    first = powerlaw_degrees(100, 2.2, 1, 30, np.random.Generator(np.random.Philox(5)))
    second = powerlaw_degrees(100, 2.2, 1, 30, np.random.Generator(np.random.Philox(5)))
    assert all(np.array_equal(a, b) for a, b in zip(first, second))


def test_hill_exponent_recovers_pareto_tail():
    samples = np.random.default_rng(0).pareto(1.5, size=20000) + 1.0
    assert hill_exponent(samples) == pytest.approx(2.5, abs=0.15)


def test_hill_exponent_degenerate():
    assert math.isnan(hill_exponent(np.full(100, 3)))
    assert math.isnan(hill_exponent([1, 2]))
