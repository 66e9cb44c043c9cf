import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xsrc.errors import CFLError, GeometryError, InstabilityError
from xsrc.fdtd import (ANTICAUSAL, CAUSAL, FdScheme, Propagator, Record, adjoint_propagate,
                       get_model, inject, interpolation_points, new_state, propagate, sample,
                       stable_dt, staggered_coefficients, state_dot, step)
from xsrc.grid import Gather, Grid2D, Medium, SourceVector, TimeAxis, gather_dot


def _taylor_reference(k):
    """Staggered first-derivative weights from the Fornberg recursion, as an independent oracle."""
    # weights for derivative of order 1 at 0 using nodes +-(m-1/2)
    nodes = [Fraction(2 * m - 1, 2) for m in range(1, k + 1)]
    nodes = [-x for x in nodes[::-1]] + nodes
    n = len(nodes)
    c = [[Fraction(0)] * 2 for _ in range(n)]
    c1 = Fraction(1)
    c4 = nodes[0]
    c[0][0] = Fraction(1)
    for i in range(1, n):
        mn = min(i, 1)
        c2 = Fraction(1)
        c5 = c4
        c4 = nodes[i]
        for j in range(i):
            c3 = nodes[i] - nodes[j]
            c2 *= c3
            if j == i - 1:
                for s in range(mn, 0, -1):
                    c[i][s] = c1 * (s * c[i - 1][s - 1] - c5 * c[i - 1][s]) / c2
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2
            for s in range(mn, 0, -1):
                c[j][s] = (c4 * c[j][s] - s * c[j][s - 1]) / c3
            c[j][0] = c4 * c[j][0] / c3
        c1 = c2
    # right half, scaled to unit spacing between staggered nodes
    return [float(c[k + m][1]) for m in range(k)]


@pytest.mark.parametrize("k", [1, 2, 3, 4, 5, 6, 7])
def test_coefficients_match_fornberg(k):
    assert np.allclose(staggered_coefficients(k), _taylor_reference(k), rtol=1e-12, atol=0)


def test_order8_coefficients():
    a = staggered_coefficients(4)
    assert np.allclose(a, [1225 / 1024, -245 / 3072, 49 / 5120, -5 / 7168], rtol=1e-15)
    # the sum quoted next to the order-8 example equals a_1 alone
    assert a[0] == pytest.approx(1.1962, abs=1e-4)
    assert np.abs(a).sum() == pytest.approx(1.28631, abs=1e-5)


@settings(max_examples=7, deadline=None)
@given(st.integers(1, 7))
def test_coefficients_are_consistent(k):
    a = staggered_coefficients(k)
    assert sum(a[m] * (2 * m + 1) for m in range(k)) == pytest.approx(1.0, abs=1e-12)


def test_stable_dt_examples():
    m = Medium.homogeneous(Grid2D(10, 10, 20.0, 20.0), 4e9, 1000.0)
    assert stable_dt(m, FdScheme(half_order=1, cfl_safety=1.0)) == pytest.approx(20 / (2000 * math.sqrt(2)))
    m2 = Medium.homogeneous(Grid2D(10, 10, 40.0, 40.0), 4e9, 1000.0)
    s = FdScheme(cfl_safety=0.7)
    assert stable_dt(m2, s) == pytest.approx(2 * stable_dt(m, s))
    sum8 = float(np.abs(staggered_coefficients(4)).sum())
    assert stable_dt(m, FdScheme(cfl_safety=1.0)) == pytest.approx(20 / (2000 * math.sqrt(2) * sum8))
    assert stable_dt(m, FdScheme(cfl_safety=1.0)) == pytest.approx(5.497e-3, abs=1e-6)


def test_scheme_validation():
    with pytest.raises(ValueError):
        FdScheme(half_order=0)
    with pytest.raises(ValueError):
        FdScheme(half_order=8)
    with pytest.raises(ValueError):
        FdScheme(cfl_safety=1.5)
    with pytest.raises(ValueError):
        FdScheme(pml_width=-1.0)


def test_cfl_violation_rejected(tiny_medium):
    dt = stable_dt(tiny_medium, FdScheme(cfl_safety=1.0))
    with pytest.raises(CFLError):
        get_model(tiny_medium, FdScheme(), 1.01 * dt)


def test_zero_state_stays_zero(tiny_medium):
    sch = FdScheme()
    dt = stable_dt(tiny_medium, sch)
    st0 = new_state(tiny_medium, sch, dt)
    out = step(st0, tiny_medium, sch, dt)
    assert out.max_abs() == 0.0


def test_nonfinite_state_detected(tiny_medium):
    sch = FdScheme()
    dt = stable_dt(tiny_medium, sch)
    s = new_state(tiny_medium, sch, dt)
    s.p[20, 20] = np.nan
    with pytest.raises(InstabilityError):
        step(s, tiny_medium, sch, dt)


def test_impulse_response_mirror_symmetric(tiny_medium):
    sch = FdScheme(pml_width=0.0)
    dt = stable_dt(tiny_medium, sch)
    m = Medium.homogeneous(Grid2D(61, 41, 20.0, 20.0), 4e9, 1000.0)
    s = new_state(m, sch, dt)
    sl = s.layout.physical_slice()
    p = np.zeros(m.grid.shape)
    p[20, 30] = 1.0
    s.p[sl] = p
    for _ in range(5):
        s = step(s, m, sch, dt)
    out = s.physical("p")
    assert np.allclose(out, out[:, ::-1], atol=1e-14 * np.abs(out).max())


def test_plane_wave_amplitude_preserved():
    """Narrow-band plane wave at 10 points per wavelength keeps its amplitude over 100 steps."""
    g = Grid2D(120, 300, 20.0, 20.0)
    m = Medium.homogeneous(g, 4e9, 1000.0)
    sch = FdScheme(pml_width=0.0)
    dt = 0.9 * stable_dt(m, sch)
    c, rho = 2000.0, 1000.0
    lam = 10 * g.dz
    k = 2 * np.pi / lam

    def wave(z):
        return np.cos(k * (z - 1500.0)) * np.exp(-((z - 1500.0) / 400.0) ** 2)

    s = new_state(m, sch, dt)
    sl = s.layout.physical_slice()
    zp = g.z[:, None] * np.ones((1, g.nx))
    s.p[sl] = wave(zp)
    # v_z lives at z + dz/2 and half a step earlier
    i0, j0 = sl[0].start, sl[1].start
    s.vz[i0:i0 + g.nz, j0:j0 + g.nx] = wave(zp + 0.5 * g.dz + 0.5 * c * dt) / (rho * c)
    for _ in range(100):
        s = step(s, m, sch, dt)
    col = s.physical("p")[:, g.nx // 2]
    exact = wave(g.z - c * 100 * dt)
    # amplitude through the L2 norm, which is insensitive to the sub-cell phase of the peak
    assert np.linalg.norm(col) == pytest.approx(np.linalg.norm(exact), rel=0.01)
    assert abs(g.z[np.argmax(col)] - g.z[np.argmax(exact)]) <= g.dz


def test_energy_conserved_without_pml():
    g = Grid2D(80, 60, 20.0, 20.0)
    rng = np.random.default_rng(1)
    m = Medium(g, 4e9 * (1 + 0.3 * rng.random(g.shape)), 1000 * (1 + 0.2 * rng.random(g.shape)))
    sch = FdScheme(pml_width=0.0)
    dt = 0.9 * stable_dt(m, sch)
    model = get_model(m, sch, dt)
    s = model.new_state()
    x, z = np.meshgrid(g.x, g.z)
    s.p[s.layout.physical_slice()] = np.exp(-((x - 800) ** 2 + (z - 600) ** 2) / 200 ** 2)
    e0 = model.energy(s, conserved=True)
    drift = 0.0
    for _ in range(1000):
        model.vel_fwd(s)
        model.pre_fwd(s)
        drift = max(drift, abs(model.energy(s, conserved=True) / e0 - 1))
    assert drift < 1e-8


def test_energy_non_increasing_with_pml():
    g = Grid2D(60, 50, 20.0, 20.0)
    m = Medium.homogeneous(g, 4e9, 1000.0)
    sch = FdScheme()
    dt = 0.9 * stable_dt(m, sch)
    model = get_model(m, sch, dt)
    s = model.new_state()
    x, z = np.meshgrid(g.x, g.z)
    s.p[s.layout.physical_slice()] = np.exp(-((x - 600) ** 2 + (z - 500) ** 2) / 100 ** 2)
    e = []
    for _ in range(400):
        model.vel_fwd(s)
        model.pre_fwd(s)
        e.append(model.energy(s, conserved=True))
    e = np.array(e)
    assert np.all(np.diff(e) <= 1e-6 * e[0])
    assert e[-1] < 1e-3 * e[0]


@pytest.mark.parametrize("component", ["p", "vz"])
def test_inject_sample_pairing(component):
    """Energy pairing of an injected basis gather with a field equals the gather pairing of the sample."""
    g = Grid2D(30, 25, 20.0, 20.0)
    rng = np.random.default_rng(3)
    m = Medium(g, 4e9 * (1 + 0.3 * rng.random(g.shape)), 1000 * (1 + 0.3 * rng.random(g.shape)))
    sch = FdScheme()
    dt = 0.5 * stable_dt(m, sch)
    model = get_model(m, sch, dt)
    xs = np.array([130.0, 150.0, 171.3])
    T = TimeAxis(1, dt)
    w = model.new_state()
    for a in w.fields():
        a[w.layout.interior_slice()] = rng.standard_normal(a[w.layout.interior_slice()].shape)
    z = 233.7
    samp = sample(w, component, z, xs)
    for i in range(xs.size):
        e = np.zeros((xs.size, 1))
        e[i, 0] = 1.0
        eg = Gather(z, xs, T, e)
        sv = SourceVector.pressure_only(eg) if component == "p" else SourceVector.force_only(eg)
        delta = inject(model.new_state(), sv, 0, dt, m, sch)
        if component == "p":
            delta.vz[:] = 0
        else:
            delta.p[:] = 0
        lhs = state_dot(delta, w, model)
        rhs = gather_dot(eg, Gather(z, xs, T, samp[:, None]))
        assert lhs == pytest.approx(rhs, rel=1e-12)


def test_inject_zero_is_noop(tiny_medium):
    sch = FdScheme()
    dt = stable_dt(tiny_medium, sch)
    s = new_state(tiny_medium, sch, dt)
    z = Gather(300.0, [200.0, 220.0], TimeAxis(3, dt))
    out = inject(s, SourceVector.pressure_only(z), 1, dt, tiny_medium, sch)
    assert out.max_abs() == 0.0


def test_on_node_depth_uses_one_level(tiny_medium):
    sch = FdScheme()
    model = get_model(tiny_medium, sch, stable_dt(tiny_medium, sch))
    pts = interpolation_points(model.layout, "p", 300.0, [200.0])
    assert pts.idx.size == 1 and pts.w[0] == 1.0
    pts = interpolation_points(model.layout, "p", 310.0, [200.0])
    assert pts.idx.size == 2


def test_sample_constant_and_nodal(tiny_medium):
    sch = FdScheme()
    s = new_state(tiny_medium, sch, stable_dt(tiny_medium, sch))
    s.p[:] = 3.5
    assert np.allclose(sample(s, "p", 311.0, [101.0, 433.3]), 3.5)
    sl = s.layout.physical_slice()
    p = np.arange(np.prod(tiny_medium.grid.shape), dtype=float).reshape(tiny_medium.grid.shape)
    s.p[sl] = p
    assert sample(s, "p", 200.0, [300.0])[0] == p[10, 15]


def test_sampling_outside_grid_rejected(tiny_medium):
    sch = FdScheme()
    s = new_state(tiny_medium, sch, stable_dt(tiny_medium, sch))
    with pytest.raises(GeometryError):
        sample(s, "p", 5000.0, [10.0])


def _small_setup():
    g = Grid2D(60, 40, 20.0, 20.0)
    m = Medium.homogeneous(g, 4e9, 1000.0)
    sch = FdScheme()
    T = TimeAxis(200, 0.8 * stable_dt(m, sch), -0.2)
    return m, sch, T


def test_propagate_zero_source():
    m, sch, T = _small_setup()
    xs = np.arange(200.0, 1000.0, 20.0)
    z = Gather(500.0, xs, T)
    out = propagate(SourceVector(z, z), [200.0], xs, m, sch, T)
    assert not np.any(out[200.0].p.values) and not np.any(out[200.0].vz.values)


@pytest.mark.parametrize("direction", [CAUSAL, ANTICAUSAL])
def test_propagate_dot_test(direction):
    m, sch, T = _small_setup()
    rng = np.random.default_rng(0)
    xs = np.arange(200.0, 1000.0, 20.0)
    zs, zr = 500.3, [200.0, 310.0]

    def rg(z):
        return Gather(z, xs, T, rng.standard_normal((xs.size, T.nt)))

    for _ in range(3):
        sv = SourceVector(rg(zs), rg(zs))
        out = propagate(sv, zr, xs, m, sch, T, direction)
        res = {z: Record(rg(z), rg(z)) for z in zr}
        lhs = sum(gather_dot(out[z].p, res[z].p) + gather_dot(out[z].vz, res[z].vz) for z in zr)
        adj = adjoint_propagate(res, zs, xs, m, sch, T, direction)
        rhs = gather_dot(sv.h, adj.h) + gather_dot(sv.f, adj.f)
        assert abs(lhs - rhs) <= 1e-10 * abs(lhs)


def test_adjoint_of_zero_is_zero():
    m, sch, T = _small_setup()
    xs = np.arange(200.0, 400.0, 20.0)
    r = Gather(200.0, xs, T)
    sv = adjoint_propagate({200.0: Record(r, r)}, 500.0, xs, m, sch, T)
    assert not np.any(sv.h.values) and not np.any(sv.f.values)


def test_reciprocity():
    from xsrc.scenarios import bandpass_wavelet

    g = Grid2D(100, 80, 20.0, 20.0)
    m = Medium.homogeneous(g, 4e9, 1000.0)
    sch = FdScheme()
    T = TimeAxis(500, 0.004, -0.4)
    w = bandpass_wavelet(1.0, 2.5, 7.5, 12.5, T.dt, T.nt, T.t0)
    a, b = (700.0, 1100.0), (1300.0, 500.0)

    def run(src, rec):
        sv = SourceVector.pressure_only(Gather(src[1], [src[0]], T, w[None, :]))
        return propagate(sv, [rec[1]], [rec[0]], m, sch, T)[rec[1]].p.values[0]

    ab, ba = run(a, b), run(b, a)
    assert np.linalg.norm(ab - ba) <= 1e-3 * np.linalg.norm(ab)


def test_first_arrival_matches_ray_time(small_homog, small_sources):
    """Peak of the data trace above the point source arrives at distance / c."""
    sc = small_homog
    xd, zd = sc.point_src
    i = int(np.argmin(np.abs(sc.rec_x - xd)))
    trace = small_sources.d.values[i]
    t_peak = sc.time.t[np.argmax(np.abs(trace))]
    t_ray = (zd - sc.z_r) / 2000.0
    assert abs(t_peak - t_ray) < 1.0 / 5.0


def test_time_reversal_identity():
    """Transposed propagation agrees with role swap on the mirrored time axis (continuum identity)."""
    from xsrc.scenarios import bandpass_wavelet
    from xsrc.wave_ops import OpConfig, make_S, time_reverse

    g = Grid2D(120, 80, 20.0, 20.0)
    m = Medium.homogeneous(g, 4e9, 1000.0)
    T = TimeAxis(401, 0.004, -0.8)
    xs = np.arange(600.0, 1800.01, 20.0)
    cfg = OpConfig(m, FdScheme(), 1200.0, 400.0, xs, T)
    S = make_S(cfg)
    # band-limited downgoing residual: a point-source pressure record on z_rec
    w = bandpass_wavelet(1.0, 2.5, 7.5, 12.5, T.dt, T.nt, T.t0)
    pt = SourceVector.pressure_only(Gather(1400.0, [1150.0], T, w[None, :]))
    r = propagate(pt, [400.0], xs, m, FdScheme(), T)[400.0].p
    st_r = S.adjoint_apply(r)
    swapped = make_S(cfg.swapped())
    rsr = time_reverse(swapped.apply(time_reverse(r)))
    err = np.linalg.norm(st_r.values - rsr.values) / np.linalg.norm(st_r.values)
    assert err <= 1e-2


def test_propagator_rejects_time_mismatch():
    m, sch, T = _small_setup()
    P = Propagator(m, sch, T)
    bad = Gather(300.0, [200.0], TimeAxis(T.nt + 1, T.dt, T.t0))
    with pytest.raises(GeometryError):
        P.forward(SourceVector.pressure_only(bad), [200.0], [200.0])
