import json
import math

import numpy as np
import pytest

import specfid


def test_quantize_worked_example():
    a = np.array([[7.0, -3.5], [0.0, 1.0]])
    q = specfid.quantize(a, "int4")
    np.testing.assert_array_equal(q["values"], [[7.0, -4.0], [0.0, 1.0]])
    np.testing.assert_array_equal(q["error"], [[0.0, -0.5], [0.0, 0.0]])
    assert q["scales"] == [1.0]
    assert not q["degenerate"]


def test_quantize_zero_and_scheme_dict():
    z = np.zeros((3, 4))
    q = specfid.quantize(z, {"family": "e2m1_grid", "block_size": 2})
    assert q["degenerate"]
    np.testing.assert_array_equal(q["values"], z)
    with pytest.raises(specfid.ConfigError):
        specfid.quantize(z, "fp8")


def test_scalar_and_grid():
    assert specfid.quantize_scalar(2.5, 1.0) == 2.0
    assert specfid.quantize_scalar(2.5, 1.0, half_away=True) == 3.0
    grid = specfid.e2m1_grid()
    assert grid[-1] == 6.0 and grid == sorted(grid)


def test_spectrum_metrics():
    s = specfid.singular_values(np.diag([3.0, 1.0]))
    assert s == pytest.approx([3.0, 1.0])
    assert specfid.stable_rank(s) == pytest.approx(10 / 9)
    assert specfid.energy_concentration(s, 1) == pytest.approx(0.9)
    a = np.random.default_rng(0).standard_normal((20, 30))
    assert specfid.singular_values(a) == pytest.approx(list(np.linalg.svd(a, compute_uv=False)), rel=1e-10)
    fit = specfid.fit_power_law(specfid.power_law_spectrum(50, 2.0, 1.0, 50), 1, 50)
    assert fit["decay"] == pytest.approx(0.5)
    assert fit["mu"] == pytest.approx(2.0)


def test_tensor_roundtrip(tmp_path):
    a = np.arange(6.0).reshape(2, 3) / 7
    path = tmp_path / "a.spqt"
    specfid.save_tensor(a, path)
    np.testing.assert_array_equal(specfid.load_matrix(path), a)
    blob = specfid.encode_tensor(a)
    assert len(blob) == 24 + 48 and blob[:4] == b"SPQT"
    np.testing.assert_array_equal(specfid.decode_tensor(blob), a)
    with pytest.raises(specfid.FormatError):
        specfid.decode_tensor(b"XXXX" + blob[4:])
    with pytest.raises(specfid.TruncationError):
        specfid.decode_tensor(blob[:-8])
    with pytest.raises(specfid.IoError):
        specfid.load_matrix(tmp_path / "missing.spqt")


def test_embeddings_are_deterministic():
    x1 = specfid.embedding_matrix(V=100, alpha=1.5, d=16, N=64, seed=3)
    x2 = specfid.embedding_matrix(V=100, alpha=1.5, d=16, N=64, seed=3)
    assert x1.shape == (16, 64)
    np.testing.assert_array_equal(x1, x2)
    np.testing.assert_allclose(np.linalg.norm(x1, axis=0), 1.0, atol=1e-12)
    with pytest.raises(specfid.DomainError):
        specfid.embedding_matrix(alpha=1.0)


def test_rmt_closed_forms():
    assert specfid.bbp_map(10.0, 1.0, 0.5) == pytest.approx(10.5556, rel=1e-5)
    assert specfid.mp_bulk_edge(1.0, 1.0) == 4.0
    assert specfid.noise_level(1.0, 2.0, 2, 5) == pytest.approx((1 / 9 + 1 / 16 + 1 / 25) / 3)
    assert specfid.stieltjes_white(1.0, 1j) == pytest.approx(0.5 + 0.5j)
    t = specfid.invert_tail_bound(2, 2, 1.0, 1.0, specfid.bernstein_tail_bound(2, 2, 1.0, 1.0, 6.0))
    assert t == pytest.approx(6.0, rel=1e-10)
    prof = specfid.failure_profile(1.0, 2.0, 4, 0.05, 0.01, 16, 16)
    assert len(prof) == 16 and prof[4:] == [prof[3]] * 12
    with pytest.raises(specfid.DomainError):
        specfid.bbp_map(1.0, 1.0, 0.5)


def test_protocols():
    cfg = json.loads(specfid.default_config())
    assert set(cfg["protocols"]) == {"unbias", "regress", "srank", "bbp", "bernstein", "gradbound", "failprof"}
    small = {"protocols": {"unbias": {"trials": 2, "rows": 32, "cols": 32}}}
    r = specfid.run_protocol("unbias", small)
    assert r["protocol"] == "unbias"
    assert r["pass"]
    assert r["csv"].splitlines()[0] == ",".join(r["columns"])
    assert r == specfid.run_protocol("unbias", json.dumps(small))
    with pytest.raises(specfid.ConfigError):
        specfid.run_protocol("unbias", {"bogus": 1})
    with pytest.raises(specfid.ConfigError):
        specfid.run_protocol("nope")
    assert math.isfinite(r["statistics"]["pooled_variance_ratio"])
