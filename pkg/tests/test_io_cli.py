import json
import logging
import math

import numpy as np
import pytest

from shellcir.cli import main
from shellcir.io import (CacheCorrupt, ConfigMismatch, RunManifest, SweepConfig, SweepInterrupted,
                         fmt, parse_range, read_array, read_config_file, read_csv, resume_sweep,
                         run_sweep, write_array, write_fidelity_csv, write_spectrum_csv)
from shellcir.model import ConfigError, Truncation

SMALL = Truncation(n_rel_max=6, n_com_max=6, l_max=2)
SMALL_FLAGS = ["--n-rel", "6", "--n-com", "6", "--l-max", "2"]


def cfg(kind="fidelity", trunc=SMALL, r0=(0.5, 0.6, 0.7, 0.8, 0.9, 1.0)):
    return SweepConfig(kind, (1 / 0.53, -1.0), tuple(r0), n_states=4, trunc=trunc)


# -- primitives ----------------------------------------------------------------


def test_fmt_full_precision():
    x = 0.1 + 0.2
    assert float(fmt(x)) == x
    assert fmt(np.float64(1 / 3)) == "0.33333333333333331"
    assert fmt(3) == "3" and fmt(-math.inf) == "-inf" and fmt(True) == "1"


def test_parse_range():
    assert np.allclose(parse_range("0:3:0.01"), np.linspace(0, 3, 301))
    assert list(parse_range("0.4:0.7:0.1")) == [0.4, 0.5, 0.6, 0.7]
    assert list(parse_range("2.5")) == [2.5]
    for bad in ("1:0:0.1", "0:1:0", "a:b:c", "0:1"):
        with pytest.raises(ConfigError):
            parse_range(bad)


def test_config_file(tmp_path):
    p = tmp_path / "run.conf"
    p.write_text("# comment\n--a0 = 0.53\nn-states=6  # trailing\n\nr0_scan=0:1:0.5\n")
    assert read_config_file(p) == {"a0": "0.53", "n_states": "6", "r0_scan": "0:1:0.5"}
    p.write_text("garbage\n")
    with pytest.raises(ConfigError):
        read_config_file(p)
    with pytest.raises(ConfigError):
        read_config_file(tmp_path / "missing.conf")


def test_array_cache_round_trip(tmp_path):
    a = np.random.default_rng(0).normal(size=(3, 4, 5))
    write_array(tmp_path / "a.bin", a)
    assert np.array_equal(read_array(tmp_path / "a.bin"), a)
    raw = bytearray((tmp_path / "a.bin").read_bytes())
    raw[-3] ^= 0xFF
    (tmp_path / "b.bin").write_bytes(bytes(raw))
    with pytest.raises(CacheCorrupt):
        read_array(tmp_path / "b.bin")
    (tmp_path / "c.bin").write_bytes(b"short")
    with pytest.raises(CacheCorrupt):
        read_array(tmp_path / "c.bin")


def test_manifest_round_trip():
    m = RunManifest("acmap", {"sweep": cfg().to_dict()}, grid_hashes={"r0": "ab"}, wall_clock=1.5,
                    jobs={"x": "done"}, outputs=["acmap.csv"], failures=["f"])
    m2 = RunManifest.from_json(m.to_json())
    assert m2 == m
    assert SweepConfig.from_dict(m2.config["sweep"]) == cfg()
    bad = json.loads(m.to_json())
    bad["schema_version"] = 99
    with pytest.raises(ConfigError):
        RunManifest.from_json(json.dumps(bad))


def test_sweep_config_infinite_a0_round_trip():
    c = SweepConfig("spectrum", (-math.inf, 0.0), (0.0,), trunc=SMALL)
    d = json.loads(json.dumps(c.to_dict()))
    assert SweepConfig.from_dict(d) == c


# -- sweeps --------------------------------------------------------------------------


def run_to_csv(out, c, **kw):
    res = run_sweep(out, c, workers=1, **kw)
    return write_fidelity_csv(out / "fidelity.csv", res).read_bytes()


def test_rerun_byte_identical(tmp_path):
    a = run_to_csv(tmp_path / "a", cfg())
    b = run_to_csv(tmp_path / "b", cfg())
    assert a == b
    # rerunning into the same directory reuses the cache and reproduces the file
    assert run_to_csv(tmp_path / "a", cfg()) == a


def test_interrupt_and_resume(tmp_path):
    full = run_to_csv(tmp_path / "full", cfg())
    part = tmp_path / "part"
    with pytest.raises(SweepInterrupted):
        run_sweep(part, cfg(), workers=1, max_points=6)
    assert len(list((part / "points").glob("*.bin"))) == 6
    man = RunManifest.load(part)
    assert sum(v == "done" for v in man.jobs.values()) == 6
    res = resume_sweep(part, workers=1)
    assert write_fidelity_csv(part / "fidelity.csv", res).read_bytes() == full


def test_corrupted_entry_recomputed(tmp_path, caplog):
    out = tmp_path / "c"
    ref = run_to_csv(out, cfg())
    victim = sorted((out / "points").glob("*.bin"))[3]
    victim.write_bytes(victim.read_bytes()[:-8] + b"\0" * 8)
    with caplog.at_level(logging.WARNING, logger="shellcir.io"):
        again = run_to_csv(out, cfg(), resume=True)
    assert again == ref
    assert any("corrupted cache entry" in r.message for r in caplog.records)


def test_mismatched_truncation_refused(tmp_path):
    out = tmp_path / "m"
    run_sweep(out, cfg(), workers=1)
    other = cfg(trunc=Truncation(n_rel_max=7, n_com_max=6, l_max=2))
    with pytest.raises(ConfigMismatch) as e:
        run_sweep(out, other, workers=1, resume=True)
    assert any("n_rel_max" in line for line in e.value.diff)
    with pytest.raises(ConfigMismatch):
        resume_sweep(out, requested=other)


def test_spectrum_sweep_long_format(tmp_path):
    res = run_sweep(tmp_path, cfg("spectrum"), workers=1)
    header, rows = read_csv(write_spectrum_csv(tmp_path / "spectrum.csv", res))
    assert header[:4] == ["inv_a0", "r0", "n", "E_n"]
    assert len(rows) == 2 * 6 * 4
    # sorted by (a0, r0, n) in configuration order
    assert [float(r[1]) for r in rows[:8]] == [0.5] * 4 + [0.6] * 4


# -- command line ----------------------------------------------------------------------


def test_cli_busch(tmp_path):
    assert main(["busch", "--inv-a0", "0", "--n", "4", "--out", str(tmp_path)]) == 0
    header, rows = read_csv(tmp_path / "busch.csv")
    assert header == ["n_chi", "energy"]
    assert [float(r[1]) for r in rows] == pytest.approx([0.5, 2.5, 4.5, 6.5], abs=1e-12)
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["outputs"] == ["busch.csv"] and man["schema_version"] == 1


def test_cli_validation_errors(tmp_path, capsys):
    assert main(["busch", "--a0", "0", "--out", str(tmp_path)]) == 1
    assert main(["busch", "--bogus", "--out", str(tmp_path)]) == 1
    assert main(["frobnicate"]) == 1
    assert main([]) == 1
    assert main(["busch", "--a0", "1", "--config", str(tmp_path / "none.conf")]) == 1
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["busch", "--a0", "1", "--out", str(blocker / "sub")]) == 1
    assert main(["fidelity", "--a0", "0.53", "--r0-scan", "0:0.02:0.01", "--delta-r0", "0.05",
                 "--out", str(tmp_path / "f")]) == 1
    assert "configuration error" in capsys.readouterr().err


def test_cli_numerical_failure(tmp_path):
    args = ["density", "--a0", "0.01", "--n-rel", "4", "--n-com", "4", "--l-max", "0",
            "--out", str(tmp_path)]
    assert main(args) == 2


def test_cli_spectrum_deterministic(tmp_path):
    base = ["spectrum", "--a0", "0.53", "--r0-scan", "0:0.3:0.1", "--J", "0", "--n-states", "5"]
    assert main(base + SMALL_FLAGS + ["--out", str(tmp_path / "a")]) == 0
    conf = tmp_path / "run.conf"
    conf.write_text("a0=0.53\nr0-scan=0:0.3:0.1\nn-states=5\nn-rel=6\nn-com=6\nl-max=2\n")
    assert main(["spectrum", "--config", str(conf), "--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "spectrum.csv").read_bytes()
    assert a == (tmp_path / "b" / "spectrum.csv").read_bytes()
    assert len(a.splitlines()) == 1 + 4 * 5
    # a different truncation in the same directory is refused
    assert main(base + ["--n-rel", "7", "--n-com", "6", "--l-max", "2",
                        "--out", str(tmp_path / "a")]) == 1


def test_cli_fidelity_and_hyper(tmp_path):
    args = ["fidelity", "--a0", "0.53", "--r0-scan", "1:1.1:0.05", "--n-states", "4",
            "--no-labels", "--out", str(tmp_path / "f")] + SMALL_FLAGS
    assert main(args) == 0
    header, rows = read_csv(tmp_path / "f" / "fidelity.csv")
    assert len(rows) == 3 and header[-1] == "dF3"
    assert (tmp_path / "f" / "acs.csv").exists()
    assert main(["hyper", "--inv-a0", "0", "--n-chi", "3", "--n-xi", "3", "--xi-points", "60",
                 "--out", str(tmp_path / "h")]) == 0
    _, rows = read_csv(tmp_path / "h" / "hyper_energies.csv")
    assert [float(r[2]) for r in rows[:3]] == pytest.approx([2, 4, 4], abs=1e-4)


def test_cli_density(tmp_path):
    args = ["density", "--a0", "0.53", "--r0", "1.0", "--state", "1", "--points", "11",
            "--out", str(tmp_path)] + SMALL_FLAGS
    assert main(args) == 0
    lines = (tmp_path / "density.csv").read_text().splitlines()
    assert lines[0].startswith("rho2\\z2,") and len(lines) == 12
    first = [float(v) for v in lines[1].split(",")[1:]]
    assert all(v == 0 for v in first)
