import math
import os
import subprocess

import numpy as np
import pytest

import tractloop


@pytest.fixture(scope="module")
def phantom():
    return tractloop.standard_phantom(seed=2, total=5000)


def test_version():
    assert isinstance(tractloop.__version__, str)


def test_tractogram_roundtrip(tmp_path):
    t = tractloop.Tractogram()
    t.add(np.array([[0.0, 0.0, 0.0], [1.0, 2.0, 3.0]]))
    t.add(np.array([[5.0, 5.0, 5.0], [6.0, 5.0, 5.0], [7.0, 5.0, 5.0]]))
    assert len(t) == 2
    assert t.total_points == 5
    with pytest.raises(tractloop.InvalidArgument):
        t.add(np.array([[1.0, 1.0, 1.0]]))
    path = tmp_path / "t.tck"
    tractloop.write_tck(t, path)
    back = tractloop.read_tck(path)
    assert back == t
    np.testing.assert_array_equal(back.points(0), [[0, 0, 0], [1, 2, 3]])
    with pytest.raises(IndexError):
        back.points(2)


def test_bad_file_raises(tmp_path):
    path = tmp_path / "bad.tck"
    path.write_bytes(b"mrtrix tracks\nEND\n")
    with pytest.raises(tractloop.FormatError):
        tractloop.read_tck(path)
    with pytest.raises(tractloop.Error):
        tractloop.read_tck(tmp_path / "missing.tck")


def test_geometry_kernels():
    line = np.array([[0.0, 0.0, 0.0], [39.0, 0.0, 0.0]])
    r = tractloop.resample(line, 40)
    assert r.shape == (40, 3)
    np.testing.assert_allclose(r[:, 0], np.arange(40.0), atol=1e-12)
    a = tractloop.resample(np.array([[0.0, 0, 0], [10, 0, 0]]), 40)
    b = tractloop.resample(np.array([[0.0, 1, 0], [10, 1, 0]]), 40)
    assert tractloop.mdf_distance(a, b) == pytest.approx(1.0, rel=1e-12)
    assert tractloop.mdf_distance(a, a[::-1]) == pytest.approx(0.0, abs=1e-12)
    assert tractloop.endpoint_distance(a, b) == pytest.approx(1.0, rel=1e-12)


def test_entropy_and_top_k():
    assert tractloop.entropy(0.5) == pytest.approx(math.log(2), rel=1e-15)
    assert tractloop.entropy(0.0) == 0.0
    assert tractloop.entropy(0.9) == pytest.approx(0.3251, abs=5e-5)
    with pytest.raises(tractloop.InvalidArgument):
        tractloop.entropy(1.5)
    assert tractloop.top_k([0.1, 0.9, 0.9, 0.5], [0, 2, 3], 2) == [2, 3]


def test_simulation_and_replay(phantom):
    t, bundles = phantom
    assert len(t) == 5000
    assert set(bundles) == {"straight", "arc", "helix"}
    result = tractloop.simulate(t, bundles["helix"], strategy="entropy", seed=3, iterations=10)
    curve = result["curve"]
    assert [r["labeled"] for r in curve] == [22 + 10 * k for k in range(11)]
    assert curve[-1]["dice"] >= 0.9
    assert tractloop.dice_of_tracts(t, result["tract"], bundles["helix"]) == pytest.approx(curve[-1]["dice"])
    again = tractloop.simulate(t, bundles["helix"], strategy="entropy", seed=3, iterations=10)
    assert again["journal"] == result["journal"]
    replayed = tractloop.replay(result["journal"], t)
    assert replayed["matches"]
    assert replayed["tract"] == result["tract"]
    assert replayed["iterations"] == 10


def test_cli_help():
    cli = os.environ.get("TRACTLOOP_CLI")
    if not cli:
        pytest.skip("TRACTLOOP_CLI not set")
    out = subprocess.run([cli, "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    assert "phantom" in out.stdout
    bad = subprocess.run([cli, "nonsense"], capture_output=True, text=True)
    assert bad.returncode == 2
