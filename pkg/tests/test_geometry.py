import io
import math

import numpy as np
import pytest

from qcurvature.bloch import BlochModel, hamiltonian
from qcurvature.errors import GapClosure, NonIntegerChern
from qcurvature.geometry import (
    CSV_COLUMNS,
    berry_curvature,
    build_band_grid,
    chern_float,
    chern_number,
    quantum_metric,
    write_band_grid_csv,
)

QWZ1 = BlochModel.qwz(1.0)
FLAT1 = BlochModel.flat_chern(1.0)
TRIVIAL = BlochModel.trivial_flat(1.0)


def projector(model, k):
    _, vecs = np.linalg.eigh(hamiltonian(model, k))
    u = vecs[:, :1]
    return u @ u.conj().T


def metric_oracle(model, k, h=1e-4):
    """G_ij = (1/2) Tr[d_i P d_j P] with central differences of the lower-band projector."""
    kx, ky = k
    dpx = (projector(model, (kx + h, ky)) - projector(model, (kx - h, ky))) / (2 * h)
    dpy = (projector(model, (kx, ky + h)) - projector(model, (kx, ky - h))) / (2 * h)
    g = lambda a, b: 0.5 * np.real(np.trace(a @ b))
    return g(dpx, dpx), g(dpx, dpy), g(dpy, dpy)


def curvature_oracle(model, k, h=1e-4):
    """Omega = 2 Im Tr[P d_x P d_y P]; this sign integrates to +2 pi for QWZ(m=1)."""
    kx, ky = k
    p = projector(model, k)
    dpx = (projector(model, (kx + h, ky)) - projector(model, (kx - h, ky))) / (2 * h)
    dpy = (projector(model, (kx, ky + h)) - projector(model, (kx, ky - h))) / (2 * h)
    return 2.0 * np.imag(np.trace(p @ dpx @ dpy))


def test_metric_examples():
    # m=1, k=0: d=(0,0,3), d_x dhat = (1/3,0,0) -> G = 1/36.
    np.testing.assert_allclose(quantum_metric(FLAT1, (0, 0)), (1 / 36, 0, 1 / 36), atol=1e-15)
    assert quantum_metric(TRIVIAL, (0.4, 1.3)) == (0.0, 0.0, 0.0)
    np.testing.assert_allclose(
        quantum_metric(QWZ1, (1.0, 0.3)), quantum_metric(FLAT1, (1.0, 0.3)), rtol=1e-14
    )


def test_metric_hand_value_at_unit_d():
    # d = (0,0,2) at k=0 for m=0: d_x dhat = (1/2,0,0) -> G_xx = 1/16, |Omega| = 1/8.
    # m=0 itself is gapless at (0, pi), so approach it from m = 1e-7.
    model = BlochModel.qwz(1e-7)
    np.testing.assert_allclose(quantum_metric(model, (0, 0)), (1 / 16, 0, 1 / 16), rtol=1e-6)
    assert abs(berry_curvature(model, (0, 0))) == pytest.approx(1 / 8, rel=1e-6)


def test_curvature_examples():
    assert berry_curvature(FLAT1, (0, 0)) == pytest.approx(-1 / 18, abs=1e-15)
    assert berry_curvature(TRIVIAL, (2.0, 1.0)) == 0.0


def test_curvature_mass_reflection():
    # d_{-m}(k + (pi, pi)) = -d_m(k) flips the sign of Omega.
    rng = np.random.default_rng(11)
    for m in (0.5, 1.0, 1.7, 3.0):
        for kx, ky in rng.uniform(0, 2 * np.pi, size=(20, 2)):
            a = berry_curvature(BlochModel.qwz(m), (kx, ky))
            b = berry_curvature(BlochModel.qwz(-m), (kx + np.pi, ky + np.pi))
            assert b == pytest.approx(-a, abs=1e-13)


@pytest.mark.parametrize("model", [QWZ1, BlochModel.qwz(-1.4), BlochModel.qwz(2.5), FLAT1])
def test_metric_and_curvature_match_projector_oracle(model):
    rng = np.random.default_rng(5)
    for kx, ky in rng.uniform(0, 2 * np.pi, size=(25, 2)):
        np.testing.assert_allclose(quantum_metric(model, (kx, ky)), metric_oracle(model, (kx, ky)), atol=1e-7)
        assert berry_curvature(model, (kx, ky)) == pytest.approx(curvature_oracle(model, (kx, ky)), abs=1e-7)


@pytest.mark.parametrize("m, expected", [(1.0, 1), (-1.0, -1), (0.5, 1), (3.0, 0), (-2.5, 0)])
def test_chern_number_qwz(m, expected):
    assert chern_number(BlochModel.qwz(m), 32) == expected


def test_chern_number_flat_and_trivial():
    assert chern_number(FLAT1, 32) == 1
    assert chern_number(TRIVIAL, 32) == 0


def test_chern_is_mesh_invariant():
    for m in (1.0, -1.5, 2.5):
        model = BlochModel.qwz(m)
        assert chern_number(model, 16) == chern_number(model, 32) == chern_number(model, 64)


def test_chern_residual_is_tiny():
    value = chern_float(QWZ1, 32)
    assert abs(value - 1) < 1e-10


def test_non_integer_chern_reported(monkeypatch):
    import qcurvature.geometry as geo

    monkeypatch.setattr(geo, "chern_float", lambda model, n: 0.6)
    with pytest.raises(NonIntegerChern):
        geo.chern_number(QWZ1, 32)


def test_grid_mesh_too_small():
    with pytest.raises(ValueError):
        build_band_grid(QWZ1, 8)


def test_band_grid_examples():
    g = build_band_grid(FLAT1, 64)
    assert np.all(g.gap == 1.0)
    g = build_band_grid(QWZ1, 64)
    # |d(pi, pi)| = |m - 2| = 1; (0, pi) and (pi, 0) tie at the same value.
    assert g.gap.min() == pytest.approx(2.0)
    i = j = 32
    assert (g.kx[i, j], g.ky[i, j]) == (pytest.approx(np.pi), pytest.approx(np.pi))
    assert g.gap[i, j] == pytest.approx(g.gap.min(), abs=1e-14)


@pytest.mark.parametrize(
    "model", [QWZ1, BlochModel.qwz(-0.6), BlochModel.qwz(1.5), BlochModel.qwz(3.0), FLAT1, TRIVIAL]
)
def test_grid_curvature_integrates_to_chern(model):
    g = build_band_grid(model, 64)
    assert g.sum(g.omega) == pytest.approx(2 * math.pi * chern_number(model, 64), abs=1e-6)


@pytest.mark.parametrize("model", [QWZ1, BlochModel.qwz(-1.2), FLAT1])
def test_grid_two_band_identities(model):
    g = build_band_grid(model, 64)
    det = g.gxx * g.gyy - g.gxy ** 2
    assert np.all(g.gxx >= 0) and np.all(g.gyy >= 0) and np.all(det >= -1e-18)
    assert np.max(np.abs(np.sqrt(np.clip(det, 0, None)) - np.abs(g.omega) / 2)) <= 1e-8
    trace_sum = g.sum(g.gxx + g.gyy)
    assert trace_sum >= 2 * math.pi * abs(chern_number(model, 64)) - 1e-6


def test_grid_matches_pointwise_functions():
    g = build_band_grid(BlochModel.qwz(-1.2), 16)
    for i, j in [(0, 0), (3, 7), (15, 2)]:
        k = (g.kx[i, j], g.ky[i, j])
        np.testing.assert_allclose((g.gxx[i, j], g.gxy[i, j], g.gyy[i, j]), quantum_metric(g.model, k), atol=1e-15)
        assert g.omega[i, j] == pytest.approx(berry_curvature(g.model, k), abs=1e-15)


def test_grid_gap_closure_reports_k():
    # Bypass the construction guard to exercise the grid-level check.
    # For m = 2 the d-vector vanishes where cos kx + cos ky = -2, i.e. at (pi, pi).
    model = BlochModel.qwz(1.0)
    object.__setattr__(model, "m", 2.0)
    with pytest.raises(GapClosure) as info:
        build_band_grid(model, 32)
    assert info.value.k == (pytest.approx(math.pi), pytest.approx(math.pi))
    assert info.value.norm < 1e-9


def test_grid_csv_export():
    g = build_band_grid(QWZ1, 16)
    buf = io.StringIO()
    write_band_grid_csv(g, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 1 + 16 * 16
    row = [float(x) for x in lines[1 + 16 + 3].split(",")]
    np.testing.assert_allclose(row[0:2], [g.kx[1, 3], g.ky[1, 3]], rtol=1e-11)
    np.testing.assert_allclose(row[3], g.gxx[1, 3], rtol=1e-11)
