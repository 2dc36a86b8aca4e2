import math

import pytest

from shellcir.model import (Channel, ConfigError, ModelParams, Truncation, enumerate_channels,
                            resolve_extents, validate)


def test_channels_j0():
    ch = enumerate_channels(ModelParams(inv_a0=0.0), Truncation(l_max=4))
    assert ch == [Channel(0, 0), Channel(2, 2), Channel(4, 4)]


def test_channels_j1_odd_parity():
    ch = enumerate_channels(ModelParams(inv_a0=0.0, J=1, parity=-1), Truncation(l_max=2))
    assert ch == [Channel(0, 1), Channel(2, 1), Channel(2, 3)]


def test_no_admissible_channels():
    with pytest.raises(ConfigError, match="no admissible channels"):
        enumerate_channels(ModelParams(inv_a0=0.0, J=0, parity=-1), Truncation())


@pytest.mark.parametrize("J,parity", [(0, 1), (1, -1), (1, 1), (2, 1), (3, -1)])
def test_channel_invariants(J, parity):
    p = ModelParams(inv_a0=1.0, J=J, MJ=0, parity=parity)
    t = Truncation(l_max=6)
    ch = enumerate_channels(p, t)
    assert ch == enumerate_channels(p, t)
    assert ch == sorted(ch)
    for c in ch:
        assert c.l % 2 == 0
        assert abs(c.l - c.L) <= J <= c.l + c.L
        assert (-1) ** (c.l + c.L) == parity


def test_validate_ok():
    cfg = validate(ModelParams.from_a0(0.53, r0=1.0), Truncation())
    assert cfg.params.inv_a0 == pytest.approx(1 / 0.53)
    assert cfg.params.a0 == pytest.approx(0.53)


@pytest.mark.parametrize("kw,msg", [({"r0": -1.0}, "r0"), ({"delta_r0": 0.0}, "delta_r0"),
                                    ({"parity": 0}, "parity"), ({"J": 1, "MJ": 2}, "MJ")])
def test_validate_errors(kw, msg):
    with pytest.raises(ConfigError, match=msg):
        validate(ModelParams(inv_a0=1.0, **kw), Truncation())


def test_validate_collects_all_errors():
    with pytest.raises(ConfigError) as e:
        validate(ModelParams(inv_a0=math.nan, r0=-1.0, delta_r0=0.1),
                 Truncation(n_rel_max=0, r_extent=-2.0), r0_step=0.01)
    assert len(e.value.errors) == 5


def test_a0_encoding():
    assert ModelParams(inv_a0=0.0).a0 == math.inf
    assert ModelParams(inv_a0=-math.inf).a0 == 0.0
    with pytest.raises(ConfigError):
        ModelParams.from_a0(0.0)
    validate(ModelParams(inv_a0=-math.inf), Truncation())
    with pytest.raises(ConfigError):
        validate(ModelParams(inv_a0=math.inf), Truncation())


def test_resolve_extents():
    t = resolve_extents(Truncation(), 3.0)
    assert t.r_extent == 16.0 and t.R_extent == 12.0
    t = resolve_extents(Truncation(), 8.0)
    assert t.r_extent == 26.0 and t.R_extent == 16.0
    assert resolve_extents(Truncation(r_extent=5.0), 8.0).r_extent == 5.0
