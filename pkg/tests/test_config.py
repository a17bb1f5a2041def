import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from mvsets.config import SCHEMA, format_config, parse_config
from mvsets.errors import ConfigError

MINIMAL = """\
grid.n = 65
coeff.kind = identity
x0 = center
radii = [0.2]
"""


def test_minimal_config_gets_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg["grid.n"] == 65 and cfg.radii == (0.2,)
    assert cfg["grid.half_width"] == 1.0
    assert cfg["solver.omega"] == 1.5
    assert cfg["seed"] == 0 and cfg["output.dir"] == "out"
    assert all(cfg[k] for k in SCHEMA if k.startswith("checks."))
    assert cfg.coefficient_field.kind == "identity"


def test_comments_and_blank_lines():
    text = "# header\n\n" + MINIMAL.replace("radii", "radii  ") + "seed = 7  # trailing\n"
    assert parse_config(text).seed == 7


def test_missing_coefficient_parameter():
    text = MINIMAL.replace("identity", "rotated_anisotropic") + "coeff.angle = 0.5\n"
    with pytest.raises(ConfigError, match="missing coeff.ratio") as exc:
        parse_config(text)
    assert exc.value.line == 2


def test_duplicate_key_cites_both_lines():
    with pytest.raises(ConfigError) as exc:
        parse_config(MINIMAL + "grid.n = 33\n")
    assert "lines 1 and 5" in str(exc.value) and exc.value.line == 5


@pytest.mark.parametrize("extra, line, pattern", [
    ("grid.m = 3", 5, "unknown key"),
    ("seed = three", 5, "malformed"),
    ("checks.area = yes", 5, "malformed"),
    ("solver.tol_psor = nan", 5, "malformed"),
    ("solver.tol_psor = -1e-3", 5, "positive"),
    ("solver.omega = 2.0", 5, "omega"),
    ("no equals sign", 5, "key = value"),
    ("coeff.ratio = 2.0", 5, "does not apply"),
])
def test_errors_carry_line_numbers(extra, line, pattern):
    with pytest.raises(ConfigError, match=pattern) as exc:
        parse_config(MINIMAL + extra + "\n")
    assert exc.value.line == line and str(exc.value).startswith(f"line {line}:")


@pytest.mark.parametrize("radii", ["[]", "[0.2, 0.1]", "[0.1, -0.2]"])
def test_bad_radii(radii):
    with pytest.raises(ConfigError, match="radii") as exc:
        parse_config(MINIMAL.replace("[0.2]", radii))
    assert exc.value.line == 4


def test_even_grid_rejected():
    with pytest.raises(ConfigError) as exc:
        parse_config(MINIMAL.replace("65", "64"))
    assert exc.value.line == 1


def test_hash_ignores_output_location():
    cfg = parse_config(MINIMAL)
    assert cfg.replace(output__dir="elsewhere").hash == cfg.hash
    assert cfg.replace(seed=1).hash != cfg.hash


kinds = st.sampled_from([
    ("identity", {}),
    ("diagonal", {"a1": (0.5, 2.0), "a2": (0.5, 4.0)}),
    ("rotated_anisotropic", {"angle": (0.0, 3.0), "ratio": (1.0, 8.0)}),
    ("checkerboard", {"a_low": (0.5, 1.0), "a_high": (1.0, 4.0), "period": (0.1, 0.5)}),
])
reals = st.floats(1e-12, 1e-3, allow_nan=False)


@st.composite
def configs(draw):
    kind, params = draw(kinds)
    lines = [f"grid.n = {2 * draw(st.integers(8, 200)) + 1}", f"coeff.kind = {kind}"]
    for p, (lo, hi) in params.items():
        lines.append(f"coeff.{p} = {draw(st.floats(lo, hi))!r}")
    radii = sorted(set(draw(st.lists(st.floats(0.01, 0.5), min_size=1, max_size=5))))
    lines.append("radii = [" + ", ".join(repr(r) for r in radii) + "]")
    lines.append(f"solver.tol_psor = {draw(reals)!r}")
    lines.append(f"checks.lsw = {draw(st.sampled_from(['true', 'false']))}")
    lines.append(f"seed = {draw(st.integers(0, 2 ** 63))}")
    lines.append(f"output.dir = {draw(st.sampled_from(['out', 'a b/c', 'x#y', 'k=v']))!r}".replace("'", '"'))
    draw(st.randoms()).shuffle(lines)
    return "\n".join(lines) + "\n"


@given(configs())
def test_config_round_trip(text):
    cfg = parse_config(text)
    again = parse_config(format_config(cfg))
    assert again == cfg and again.hash == cfg.hash
    assert format_config(again) == format_config(cfg)
    assert all(not isinstance(v, float) or math.isfinite(v) for _, v in cfg.values)
