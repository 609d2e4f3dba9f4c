import itertools

import numpy as np
import pytest
import scipy.linalg

from epinet import exact
from epinet.exact import SIR, SIS, EpidemicParams, SizeCapError, StateSpace
from epinet.graph import build_graph, generate_family


def brute_generator(model, g, beta, delta):
    """Dense generator from explicit enumeration of configurations (independent oracle)."""
    base = 2 if model == SIS else 3
    states = list(itertools.product(range(base), repeat=g.n))
    index = {s[::-1]: k for k, s in enumerate(states)}  # little-endian: node 0 is the lowest digit
    size = len(states)
    q = np.zeros((size, size))
    for rev in states:
        s = rev[::-1]
        a = index[s]
        for j in range(g.n):
            if s[j] == 1:
                t = list(s)
                t[j] = 0 if model == SIS else 2
                q[a, index[tuple(t)]] += delta
            elif s[j] == 0:
                k = sum(1 for v in g.neighbors[j] if s[v] == 1)
                if k:
                    t = list(s)
                    t[j] = 1
                    q[a, index[tuple(t)]] += beta * k
        q[a, a] = -q[a].sum()
    return q


@pytest.mark.parametrize("model", [SIS, SIR])
@pytest.mark.parametrize("family, n", [("path", 3), ("star", 4), ("cycle", 4)])
def test_generator_matches_enumeration(model, family, n):
    g = generate_family(family, n)
    p = EpidemicParams(beta=0.7, delta=1.3)
    gen = exact.build_generator(model, g, p)
    np.testing.assert_allclose(gen.rates.toarray(), brute_generator(model, g, 0.7, 1.3), atol=1e-15)
    np.testing.assert_allclose(np.asarray(gen.rates.sum(axis=1)).ravel(), 0.0, atol=1e-12)


def test_state_space_encoding():
    sp = StateSpace(SIR, 3)
    assert sp.size == 27
    k = sp.encode("SIR")
    assert k == 0 * 1 + 1 * 3 + 2 * 9
    assert sp.decode(k).tolist() == [0, 1, 2]
    assert sp.point_mass(infected=[1], removed=[2])[k] == 1.0
    with pytest.raises(ValueError):
        StateSpace(SIS, 2).encode("SR")
    with pytest.raises(ValueError):
        sp.decode(27)
    assert StateSpace(SIS, 3).absorbing.tolist() == [True] + [False] * 7


def test_absorbing_states_have_no_exits():
    g = generate_family("cycle", 4)
    gen = exact.build_sir_generator(g, EpidemicParams(1.0))
    rates = gen.rates.tocsr()
    for s in np.flatnonzero(gen.space.absorbing):
        assert rates.getrow(s).nnz == 0
    assert gen.outgoing(gen.space.encode("ISSS")) == pytest.approx(
        {gen.space.encode("IISS"): 1.0, gen.space.encode("ISSI"): 1.0, gen.space.encode("RSSS"): 1.0}
    )


def test_size_caps():
    big = generate_family("path", 15)
    with pytest.raises(SizeCapError, match="capped"):
        exact.build_sis_generator(big, EpidemicParams(1.0))
    assert exact.build_sis_generator(generate_family("path", 10), EpidemicParams(1.0)).space.size == 1024
    with pytest.raises(SizeCapError):
        exact.build_sir_generator(generate_family("path", 10), EpidemicParams(1.0))
    with pytest.raises(SizeCapError, match="hard"):
        exact.build_sir_generator(generate_family("path", 17), EpidemicParams(1.0), max_nodes=20)


def test_params():
    p = EpidemicParams.from_tau(0.4, delta=2.0)
    assert p.beta == pytest.approx(0.8) and p.tau == pytest.approx(0.4)
    with pytest.raises(ValueError):
        EpidemicParams(0.0)


@pytest.mark.parametrize("model", [SIS, SIR])
def test_integrator_matches_dense_expm(model):
    g = generate_family("star", 4)
    p = EpidemicParams(beta=0.9, delta=1.7)
    grid = np.linspace(0, 3, 7)
    traj = exact.solve(model, g, p, [1], grid, tol=1e-11)
    q = brute_generator(model, g, 0.9, 1.7)
    p0 = traj.space.point_mass(infected=[1])
    for t, d in zip(grid, traj.dists):
        # scaled time t* = delta t
        ref = p0 @ scipy.linalg.expm(q * t / 1.7)
        np.testing.assert_allclose(d, ref, atol=1e-9)


def test_single_node_closed_forms():
    g = build_graph(1, [])
    grid = np.linspace(0, 2, 5)
    sis = exact.solve(SIS, g, EpidemicParams(1.0), [0], grid, tol=1e-12)
    np.testing.assert_allclose(exact.marginal(sis, 0), np.exp(-grid), rtol=1e-9)
    sir = exact.solve(SIR, g, EpidemicParams(1.0), [0], grid, tol=1e-12)
    np.testing.assert_allclose(exact.marginal(sir, 0, "R"), 1 - np.exp(-grid), rtol=1e-9, atol=1e-14)


def test_two_node_sir_final_size():
    # the second node is infected before the first is removed with prob tau/(1+tau)
    tau = 0.6
    g = generate_family("path", 2)
    traj = exact.solve(SIR, g, EpidemicParams.from_tau(tau), [0], np.array([0.0, 60.0]), tol=1e-12)
    assert exact.marginal(traj, 1, "R")[-1] == pytest.approx(tau / (1 + tau), abs=1e-9)


def test_integrate_validation():
    gen = exact.build_sis_generator(generate_family("path", 2), EpidemicParams(1.0))
    good = gen.space.point_mass(infected=[0])
    with pytest.raises(ValueError):
        exact.integrate_master(gen, good * 0.5, [0, 1])
    with pytest.raises(ValueError):
        exact.integrate_master(gen, good, [0.5, 1])
    with pytest.raises(ValueError):
        exact.integrate_master(gen, good, [0, 1, 1])
    with pytest.raises(ValueError):
        exact.integrate_master(gen, good[:3], [0, 1])
    one = exact.integrate_master(gen, good, [0.0])
    np.testing.assert_array_equal(one.dists[0], good)


def test_probability_conserved_and_marginals():
    g = generate_family("cycle", 5)
    traj = exact.solve(SIR, g, EpidemicParams(1.2), [0, 2], np.linspace(0, 5, 11))
    np.testing.assert_allclose(traj.dists.sum(axis=1), 1.0, atol=1e-9)
    mi, mr = exact.marginals(traj, "I"), exact.marginals(traj, "R")
    ms = exact.marginals(traj, "S")
    np.testing.assert_allclose(mi + mr + ms, 1.0, atol=1e-9)
    assert exact.marginal(traj, 2)[0] == 1.0
    pm = exact.pair_matrix(traj)
    np.testing.assert_allclose(np.diagonal(pm, axis1=1, axis2=2), mi, atol=1e-12)
    assert exact.joint(traj, {0: "I", 2: "I"})[0] == 1.0
    with pytest.raises(ValueError):
        exact.marginals(exact.solve(SIS, g, EpidemicParams(1.0), [0], [0, 1]), "R")


def test_moments_brute_force():
    g = generate_family("star", 4)
    traj = exact.solve(SIR, g, EpidemicParams(1.0), [0], np.linspace(0, 2, 5))
    m = exact.prevalence_moments(traj, g)
    for k in range(len(m)):
        y = e_cut = e_mixed = z2 = 0.0
        for s, pr in enumerate(traj.dists[k]):
            code = traj.space.decode(s)
            wi = (code == 1).astype(int)
            wr = (code == 2).astype(int)
            z = wi.sum() / g.n
            y += pr * z
            z2 += pr * z * z
            e_cut += pr * sum(wi[i] != wi[j] for i, j in g.edges)
            e_mixed += pr * (wi @ g.adjacency @ wr)
        assert m.y_I[k] == pytest.approx(y, abs=1e-12)
        assert m.var_z[k] == pytest.approx(z2 - y * y, abs=1e-12)
        assert m.e_cut[k] == pytest.approx(e_cut, abs=1e-12)
        assert m.e_mixed[k] == pytest.approx(e_mixed, abs=1e-12)


def test_finite_difference_helpers():
    grid = exact.stencil_grid([0.5, 1.0], h=0.01)
    assert grid.tolist() == pytest.approx([0, 0.49, 0.5, 0.51, 0.99, 1.0, 1.01])
    idx, d = exact.central_difference(np.sin(grid), grid)
    assert idx.tolist() == [2, 5]
    np.testing.assert_allclose(d, np.cos([0.5, 1.0]), atol=1e-4)
    with pytest.raises(ValueError):
        exact.stencil_grid([0.0005], h=1e-3)


@pytest.mark.parametrize("model", [SIS, SIR])
def test_residuals_small(model):
    g = generate_family("erdos_renyi", 5, p=0.6, seed=4)
    p = EpidemicParams(beta=1.1, delta=0.7)
    traj = exact.solve(model, g, p, [0], exact.stencil_grid([0.3, 1.0, 2.5]), tol=1e-9)
    # central differences with h = 1e-3 carry O(h^2) truncation error
    assert exact.residual_governing(traj, g, p) < 1e-5
    res = exact.residual_prevalence_ode(traj, g, p)
    assert res.ode < 1e-5 and res.forms < 1e-12
    if model == SIR:
        assert exact.residual_removal(traj) < 1e-5
    else:
        v = exact.residual_variance_ode(traj, g, p)
        assert v.variance < 1e-5 and v.pair_sum < 1e-4


def test_residual_detects_wrong_rate():
    g = generate_family("cycle", 5)
    traj = exact.solve(SIS, g, EpidemicParams(1.0), [0], exact.stencil_grid([0.5, 1.0]), tol=1e-9)
    assert exact.residual_governing(traj, g, EpidemicParams(1.2)) > 1e-3


def test_hierarchy_matches_generator():
    g = generate_family("erdos_renyi", 5, p=0.6, seed=9)
    p = EpidemicParams(beta=0.8, delta=1.4)
    gen = exact.build_sis_generator(g, p)
    rng = np.random.default_rng(1)
    dist = rng.random(gen.space.size)
    dist /= dist.sum()
    ddist = dist @ gen.rates.toarray()
    w = gen.space.infected.astype(bool)
    for subset in ([0], [1, 3], [0, 2, 4], list(range(5))):
        ref = ddist[w[:, subset].all(axis=1)].sum()
        assert exact.moment_hierarchy_rhs(dist, subset, g, p) == pytest.approx(ref, abs=1e-12)
    terms = exact.hierarchy_terms(range(5), g, p)
    assert max(len(k) for k in terms) <= 5


def test_hierarchy_single_node_form():
    g = generate_family("star", 3)
    p = EpidemicParams(beta=2.0, delta=1.0)
    terms = exact.hierarchy_terms([1], g, p)
    # dE[X1]/dt = -delta X1 + beta X0 - beta X0 X1
    assert terms == {frozenset({1}): -1.0, frozenset({0}): 2.0, frozenset({0, 1}): -2.0}
    with pytest.raises(ValueError):
        exact.hierarchy_terms([], g, p)


def test_quasi_stationary_matches_dense_eig():
    g = generate_family("star", 4)
    p = EpidemicParams.from_tau(1.3)
    gen = exact.build_sis_generator(g, p)
    qs = exact.quasi_stationary(gen)
    sub = gen.rates.toarray()[1:, 1:]
    vals, vecs = scipy.linalg.eig(sub.T)
    k = np.argmax(vals.real)
    ref = np.abs(vecs[:, k].real)
    ref /= ref.sum()
    np.testing.assert_allclose(qs.transient, ref, atol=1e-10)
    assert qs.decay_rate == pytest.approx(-vals[k].real, rel=1e-8)
    assert qs.probs[0] == 0.0


def test_quasi_stationary_sis_only():
    gen = exact.build_sir_generator(generate_family("path", 3), EpidemicParams(1.0))
    with pytest.raises(ValueError):
        exact.quasi_stationary(gen)


def test_link_conditionals_point_mass():
    g = generate_family("path", 3)
    space = StateSpace(SIS, 3)
    d = space.point_mass(infected=[0, 1])
    cond = exact.link_conditionals(g, space, d)
    links = exact.directed_links(g)
    # (1, 2) conditions on node 2, which is never infected: reported as 0
    assert dict(zip(links, cond)) == {(0, 1): 1.0, (1, 0): 1.0, (1, 2): 0.0, (2, 1): 0.0}


def test_epsilon_g_complete_graph():
    g = generate_family("complete", 5)
    est = exact.epsilon_g(g)
    assert est.converged
    assert 0 < est.estimate < 1 and 0 <= est.extrapolated <= 1
    k = est.taus.index(est.tau_at_band)
    assert est.prevalence[k] >= est.band
    assert all(y < est.band for t, y in zip(est.taus, est.prevalence) if t < est.tau_at_band)
    assert est.estimate == est.eps[k]
    with pytest.raises(ValueError):
        exact.epsilon_g(g, taus=[0.3, 0.4])
    with pytest.raises(ValueError):
        exact.epsilon_g(build_graph(3, []))


def test_epsilon_g_components():
    g = build_graph(6, [(0, 1), (1, 2), (2, 0), (3, 4)])
    est = exact.epsilon_g(g)
    tri = exact.epsilon_g(generate_family("complete", 3))
    pair = exact.epsilon_g(generate_family("path", 2))
    assert est.estimate == pytest.approx(max(tri.estimate, pair.estimate))


def test_hierarchy_matches_finite_difference_of_joints():
    g = generate_family("erdos_renyi", 6, p=0.5, seed=2)
    p = EpidemicParams(beta=1.2, delta=1.0)
    h = 1e-3
    traj = exact.solve(SIS, g, p, [0, 3], [0.0, 0.7 - h, 0.7, 0.7 + h], tol=1e-11)
    for subset in ([0], [2, 5], [1, 3, 4]):
        j = exact.joint(traj, {k: "I" for k in subset})
        fd = (j[3] - j[1]) / (2 * h)
        assert exact.moment_hierarchy_rhs(traj.dists[2], subset, g, p) == pytest.approx(fd, abs=1e-5)


def test_automorphism_permutes_marginals():
    g = generate_family("cycle", 6)
    shift = [(k + 2) % 6 for k in range(6)]  # rotation is an automorphism
    p = EpidemicParams(1.3)
    grid = np.linspace(0, 2, 5)
    a = exact.marginals(exact.solve(SIR, g, p, [0], grid, tol=1e-11))
    b = exact.marginals(exact.solve(SIR, g, p, [shift[0]], grid, tol=1e-11))
    np.testing.assert_allclose(b[:, shift], a, atol=1e-9)
