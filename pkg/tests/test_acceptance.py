"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the PASS/FAIL lines are
repeated in the terminal summary under "acceptance criteria".
"""
import contextlib
import filecmp
import io
import itertools
import time

import numpy as np
import pytest

from epinet import analysis, cli, exact, montecarlo
from epinet.exact import SIR, SIS, EpidemicParams
from epinet.graph import generate_family, laplacian_quadratic, spectral_radius

TAU_FACTORS = (0.3, 1.0, 3.0)
CHECK_TIMES = np.linspace(0.25, 4.0, 8)
FD_STEP = 1e-3
SOLVER_TOL = 1e-8


def random_suite(count=20, n_lo=3, n_hi=8, seed=20240611):
    rng = np.random.default_rng(seed)
    graphs = []
    while len(graphs) < count:
        n = int(rng.integers(n_lo, n_hi + 1))
        g = generate_family("erdos_renyi", n, p=0.5, seed=int(rng.integers(2**31)))
        if g.m > 0:
            graphs.append(g)
    return graphs


@pytest.fixture(scope="module")
def residual_suite():
    """Residuals of the exact solves over 20 random graphs and three rates each."""
    t0 = time.perf_counter()
    grid = exact.stencil_grid(CHECK_TIMES, FD_STEP)
    rows = []
    for g in random_suite():
        lam = spectral_radius(g).lambda1
        for f in TAU_FACTORS:
            p = EpidemicParams.from_tau(f / lam)
            sis = exact.solve(SIS, g, p, [0], grid, tol=SOLVER_TOL)
            sir = exact.solve(SIR, g, p, [0], grid, tol=SOLVER_TOL)
            ps, pr = exact.residual_prevalence_ode(sis, g, p), exact.residual_prevalence_ode(sir, g, p)
            rows.append(
                dict(
                    sis_nodal=exact.residual_governing(sis, g, p),
                    sir_nodal=exact.residual_governing(sir, g, p, model=SIR),
                    removal=exact.residual_removal(sir),
                    prevalence=max(ps.ode, pr.ode),
                    forms=max(ps.forms, pr.forms),
                )
            )
    return rows, time.perf_counter() - t0


def test_criterion_01_governing_residuals(residual_suite, acceptance_report):
    rows, elapsed = residual_suite
    worst = {k: max(r[k] for r in rows) for k in ("sis_nodal", "sir_nodal", "removal")}
    ok = max(worst.values()) <= 1e-5 and elapsed <= 300
    detail = ", ".join(f"{k}={v:.2e}" for k, v in worst.items()) + f" (tol 1e-5), {len(rows)} solves in {elapsed:.1f}s"
    assert acceptance_report(1, "nodal governing equations", ok, detail)


def test_criterion_02_prevalence_ode(residual_suite, acceptance_report):
    rows, _ = residual_suite
    ode = max(r["prevalence"] for r in rows)
    forms = max(r["forms"] for r in rows)
    ok = ode <= 1e-5 and forms <= 1e-12
    assert acceptance_report(2, "prevalence ODE and Laplacian form", ok, f"ode={ode:.2e} (1e-5), forms={forms:.2e} (1e-12)")


def test_criterion_03_link_sum_identity(acceptance_report):
    rng = np.random.default_rng(7)
    checked = mismatches = 0
    for k in range(10):
        n = 3 + k % 8  # N = 3..10
        g = generate_family("erdos_renyi", n, p=0.5, seed=int(rng.integers(2**31)))
        q = g.laplacian.astype(np.int64)
        a = g.adjacency.astype(np.int64)
        for bits in itertools.product((0, 1), repeat=n):
            w = np.array(bits, dtype=np.int64)
            lq = laplacian_quadratic(g, w.astype(bool))
            cut = sum(1 for i, j in g.edges if w[i] != w[j])
            dense = int(w @ q @ w)
            deg_form = int(g.degrees.astype(np.int64) @ w - w @ a @ w)
            mismatches += not (lq == cut == dense == deg_form)
            checked += 1
    assert acceptance_report(3, "link-sum identity", mismatches == 0, f"{mismatches} mismatches over {checked} subsets")


def dominance_suite():
    for fam in ("complete", "cycle", "star", "path"):
        for n in range(3, 9):
            yield generate_family(fam, n)


@pytest.fixture(scope="module")
def dominance_results():
    out = []
    for g in dominance_suite():
        lam = spectral_radius(g).lambda1
        for f in (0.5, 1.0, 2.0):
            out.append(analysis.nimfa_dominance_check(g, EpidemicParams.from_tau(f / lam), [0]))
    return out


def test_criterion_04_sir_below_sis(dominance_results, acceptance_report):
    worst = max(d.sis_over_sir for d in dominance_results)
    ok = worst <= 1e-9
    assert acceptance_report(4, "SIR <= SIS", ok, f"max(Pr[Y=I]-Pr[X=I])={worst:.2e} (1e-9) over {len(dominance_results)} cases")


def test_criterion_05_nimfa_above_sis(dominance_results, acceptance_report):
    worst = max(d.nimfa_over_sis for d in dominance_results)
    ok = worst <= 1e-9
    assert acceptance_report(5, "NIMFA >= SIS", ok, f"max(Pr[X=I]-v)={worst:.2e} (1e-9) over {len(dominance_results)} cases")


def test_criterion_06_variance_ode(acceptance_report):
    var_res, ext_res, found = [], [], []
    for fam, n in (("complete", 4), ("cycle", 6), ("star", 5)):
        g = generate_family(fam, n)
        p = EpidemicParams.from_tau(0.8)
        traj = exact.solve(SIS, g, p, [0], exact.stencil_grid(CHECK_TIMES, FD_STEP), tol=SOLVER_TOL)
        var_res.append(exact.residual_variance_ode(traj, g, p).variance)
        m = exact.prevalence_moments(exact.solve(SIS, g, p, [0], np.linspace(0, 10, 2001), tol=1e-10), g)
        chk = analysis.variance_extremal_check(m, p)
        found.append(chk.found)
        ext_res.append(chk.max_residual if chk.found else np.inf)
    ok = max(var_res) <= 1e-5 and all(found) and max(ext_res) <= 1e-6
    detail = f"variance ODE={max(var_res):.2e} (1e-5), extremal formula={max(ext_res):.2e} (1e-6)"
    assert acceptance_report(6, "variance ODE", ok, detail)


def test_criterion_07_regular_peak(acceptance_report):
    res = []
    for fam, n in (("cycle", 6), ("complete", 4)):
        g = generate_family(fam, n)
        p = EpidemicParams.from_tau(2.0 / spectral_radius(g).lambda1)
        pk = analysis.exact_peak(SIR, g, p, [0])
        res.append(abs(pk.y_max - analysis.yimax_regular(g, p, pk.e_term)))
    inside = []
    for n in (5, 10):
        g = generate_family("star", n)
        p = EpidemicParams.from_tau(2.0 / spectral_radius(g).lambda1)
        pk = analysis.exact_peak(SIR, g, p, [0], max_nodes=n)
        env = analysis.yimax_envelope(g, p, pk.e_term)
        inside.append(env.lower <= pk.y_max <= env.upper)
    ok = max(res) <= 1e-6 and all(inside)
    assert acceptance_report(7, "regular-graph peak", ok, f"peak residual={max(res):.2e} (1e-6), star peaks inside envelope={inside}")


@pytest.mark.parametrize("family", ["complete", "cycle"])
@pytest.mark.parametrize("method", analysis.METHODS)
def test_criterion_08_threshold_ordering(family, method, acceptance_report):
    g = generate_family(family, 6)
    lower = analysis.threshold_lower_bound(g)
    eps = exact.epsilon_g(g)
    upper = analysis.threshold_upper_bound(g, eps.estimate).bound
    est = analysis.estimate_threshold(g, method=method, backend="exact_qs")
    ok = est.resolved and lower <= est.tau_hat <= upper
    detail = f"{family}-6 {method}: {lower:.4f} <= tau_hat={est.tau_hat:.4f} <= {upper:.4f}"
    assert acceptance_report(8, "threshold ordering", ok, detail)


def test_criterion_09_complete_graph_scaling(acceptance_report):
    sizes = (6, 8, 10, 12)
    n_tau, eps = [], []
    for n in sizes:
        g = generate_family("complete", n)
        n_tau.append(n * analysis.estimate_threshold(g).tau_hat)
        eps.append(exact.epsilon_g(g).estimate)
    ok = min(n_tau) > 1 and all(np.diff(n_tau) < 0) and all(np.diff(eps) < 0)
    detail = "N*tau_hat=" + ",".join(f"{x:.4f}" for x in n_tau) + "; eps=" + ",".join(f"{x:.4f}" for x in eps)
    assert acceptance_report(9, "complete-graph scaling", ok, detail)


def test_criterion_10_monte_carlo_vs_exact(acceptance_report):
    g = generate_family("complete", 4)
    p = EpidemicParams.from_tau(0.8)
    grid = np.linspace(0.5, 5.0, 10)
    t0 = time.perf_counter()
    stats = montecarlo.ensemble(SIS, g, p, [0], 5.0, 10_000, grid, master_seed=12345)
    elapsed = time.perf_counter() - t0
    m = exact.prevalence_moments(exact.solve(SIS, g, p, [0], np.concatenate([[0.0], grid]), tol=1e-10), g)
    z_y = np.abs(stats.mean["zI"] - m.y_I[1:]) / stats.se["zI"]
    z_c = np.abs(stats.mean["cut"] - m.e_cut[1:]) / stats.se["cut"]

    p1 = EpidemicParams.from_tau(1.0)
    qs = exact.quasi_stationary(exact.build_sis_generator(g, p1))
    y_exact = float(qs.probs @ exact.StateSpace(SIS, 4).infected.sum(axis=1)) / 4
    sim = montecarlo.qs_simulate(g, p1, samples=4000, seed=99)
    z_qs = abs(sim.y_qs - y_exact) / sim.y_se
    ok = z_y.max() <= 3 and z_c.max() <= 3 and elapsed <= 60 and z_qs <= 3
    detail = f"max |z| y_I={z_y.max():.2f}, e_cut={z_c.max():.2f} ({elapsed:.1f}s); QS {sim.y_qs:.4f} vs {y_exact:.4f} |z|={z_qs:.2f}"
    assert acceptance_report(10, "Monte Carlo vs exact", ok, detail)


def test_criterion_11_variance_peak_location(acceptance_report):
    g = generate_family("cycle", 8)
    taus = np.linspace(0.1, 3.0, 20)
    vp = analysis.variance_peak_sweep(g, taus)
    lo, hi = 1.0 / g.r, 3.0 / g.r
    ok = lo <= vp.tau_grid_argmax <= hi
    detail = f"grid argmax tau={vp.tau_grid_argmax:.4f} in [{lo}, {hi}] (parabolic refinement {vp.tau_refined:.4f})"
    assert acceptance_report(11, "variance-peak location", ok, detail)


def _cli_outputs(tmp):
    argvs = [
        ["gen", "--family", "erdos_renyi", "--n", "7", "--p", "0.4", "--seed", "3", "-o", f"{tmp}/g.edges"],
        ["exact", "--graph", f"{tmp}/g.edges", "--model", "sir", "--tau", "0.7", "--points", "50", "-o", f"{tmp}/exact.csv",
         "--dist-out", f"{tmp}/dist.csv"],
        ["mc", "--family", "cycle", "--n", "6", "--tau", "0.9", "--runs", "300", "--tmax", "4", "--points", "9",
         "--master-seed", "5", "--threads", "2", "-o", f"{tmp}/mc.csv", "--trace-out", f"{tmp}/trace.csv"],
        ["bounds", "--family", "complete", "--n", "5", "-o", f"{tmp}/bounds.json"],
        ["sweep", "--family", "star", "--n", "5", "--tau-points", "6", "--backend", "qs_simulate", "--samples", "100",
         "--master-seed", "8", "--format", "json", "-o", f"{tmp}/sweep.json"],
        ["verify", "--family", "complete", "--n", "4", "--tau", "0.8", "-o", f"{tmp}/verify.json"],
    ]
    stdout = io.StringIO()
    codes = []
    with contextlib.redirect_stdout(stdout):
        for argv in argvs:
            codes.append(cli.run(argv))
    (tmp / "verify.txt").write_text(stdout.getvalue())
    return codes


@pytest.mark.filterwarnings("ignore:low quasi-stationary occupancy")
def test_criterion_12_reproducibility(tmp_path, acceptance_report):
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir()
    b.mkdir()
    codes = _cli_outputs(a) + _cli_outputs(b)
    files = sorted(f.name for f in a.iterdir())
    same = [filecmp.cmp(a / f, b / f, shallow=False) for f in files]
    # thread count must not change ensemble output
    g = generate_family("cycle", 6)
    grid = np.linspace(0, 4, 9)
    e1 = montecarlo.ensemble(SIS, g, EpidemicParams.from_tau(0.9), [0], 4.0, 300, grid, master_seed=5, workers=1)
    e2 = montecarlo.ensemble(SIS, g, EpidemicParams.from_tau(0.9), [0], 4.0, 300, grid, master_seed=5, workers=3)
    threads_same = all(np.array_equal(e1.mean[k], e2.mean[k]) and np.array_equal(e1.se[k], e2.se[k]) for k in e1.mean)
    ok = all(c == 0 for c in codes) and all(same) and threads_same
    detail = f"{sum(same)}/{len(files)} files byte-identical, exit codes {set(codes)}, threads-invariant={threads_same}"
    assert acceptance_report(12, "reproducibility", ok, detail)
