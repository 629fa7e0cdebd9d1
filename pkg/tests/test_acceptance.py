"""Acceptance gate: one test per shipped guarantee, one PASS/FAIL line each.

Each test prints `[acceptance NN] PASS|FAIL <summary>` on the real stdout
so the gate stays scannable under pytest's capture.  Desk-scale thresholds
come from tests/fixtures/desk_scale.json, frozen once by the independent
dense recomputation in oracle_desk_scale.py.

Proves:
   1.  Lifted-quadratic vs oscillator-model outputs agree to 1e-6 over
       [0, 2] s on 20 random grids (n_o 2..10), under 10 s total
   2.  Mode-2 and mode-3 unfoldings of the 3x4x2 reference tensor are
       integer-exact
   3.  Factored Kronecker products and tensor projection match dense
       np.kron oracles within 1e-12 on 50 random instances (n <= 20)
   4.  Every Lyapunov solve meets the 1e-8 relative residual bound at
       n in {4, 16, 64}
   5.  Compressed series Gramians match the dense-series oracle within
       1e-8 relative Frobenius at n_o = 3, N = 5; even term counts are
       rejected because those series terms vanish
   6.  W^T V = I to 1e-10; reduced angle rows realize d(angle)/dt =
       reduced frequency to 1e-12; full-order reduction error <= 1e-5
   7.  Shifted-system trajectory plus the lift point equals the
       unshifted trajectory within 1e-8
   8.  Steady-state adjustment: adjusted reduced angle derivative at
       t = 200 s is <= 1e-6 while the unadjusted one is >= 10x larger
   9.  Desk-scale 50% reduction of the frozen 20-oscillator grid stays
       below the oracle threshold; POD at equal order fails exactly as
       the oracle recorded; under 60 s
  10.  The term-count sweep (N = 1, 3, 5, 7) completes without crashing
       and all N >= 3 errors lie within 2x of each other and of the
       oracle values
"""

import json
import sys
import time
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from gridmor import (
    BalancedTruncationReducer,
    DenseHessian,
    GramianConfig,
    PODReducer,
    SimulationFailure,
    ValidationError,
    approx_gramians,
    build_quadratic,
    kron_factor_product,
    lift_state,
    load_parameters,
    mode_k_fold,
    mode_k_unfold,
    project_hessian,
    reduced_rhs,
    save_parameters,
    shift_system,
    simulate_quadratic,
    simulate_reduced,
    simulate_swing,
    solve_lyapunov_lr,
    synth_grid,
)
from gridmor.cli import main as cli_main
from gridmor.reduction import assemble_reduced, bt_projections
from gridmor.sim import compare

from _oracles import (
    dense_gramian_series,
    dense_quadratic_tensor,
    mode1_matrix,
    mode2_matrix,
    random_stable,
)
import conftest

FIXTURES = Path(conftest.FIXTURES)


_CAPTURE = None


@pytest.fixture(autouse=True)
def _route_gate_lines(capfd):
    # the PASS/FAIL lines must reach the real terminal, not the capture
    # buffer that pytest only shows for failures
    global _CAPTURE
    _CAPTURE = capfd
    yield
    _CAPTURE = None


def _emit(line):
    if _CAPTURE is not None:
        with _CAPTURE.disabled():
            print(line, file=sys.__stdout__, flush=True)
    else:
        print(line, file=sys.__stdout__, flush=True)


@contextmanager
def acceptance(num, desc):
    try:
        yield
    except BaseException:
        _emit(f"[acceptance {num:02d}] FAIL {desc}")
        raise
    _emit(f"[acceptance {num:02d}] PASS {desc}")


def rel_err(got, want):
    return float(np.max(np.abs(got - want)) / max(1.0, float(np.max(np.abs(want)))))


def test_01_lifting_exactness():
    with acceptance(1, "lifted quadratic simulations reproduce the oscillator model"):
        start = time.perf_counter()
        worst = 0.0
        for k in range(20):
            n_o = 2 + k % 9
            p = synth_grid(n_o, seed=100 + k, connectivity=0.7)
            kw = dict(rtol=1e-9, atol=1e-11)
            full = simulate_swing(p, **kw)
            lifted = simulate_quadratic(build_quadratic(p), **kw)
            worst = max(worst, float(np.max(np.abs(full.outputs - lifted.outputs))))
        elapsed = time.perf_counter() - start
        assert worst <= 1e-6, f"worst output deviation {worst:.3e}"
        assert elapsed < 10.0, f"runtime {elapsed:.1f}s"


def test_02_unfolding_fixtures():
    with acceptance(2, "reference 3x4x2 tensor unfoldings are integer-exact"):
        shape = (3, 4, 2)
        mode1 = np.arange(1.0, 25.0).reshape(8, 3).T
        mode2 = np.array(
            [
                [1, 2, 3, 13, 14, 15],
                [4, 5, 6, 16, 17, 18],
                [7, 8, 9, 19, 20, 21],
                [10, 11, 12, 22, 23, 24],
            ],
            dtype=float,
        )
        mode3 = np.array([np.arange(1.0, 13.0), np.arange(13.0, 25.0)])
        assert np.array_equal(mode_k_unfold(mode1, 2, shape), mode2)
        assert np.array_equal(mode_k_unfold(mode1, 3, shape), mode3)
        assert np.array_equal(mode_k_unfold(mode1, 1, shape), mode1)
        for k, mat in ((1, mode1), (2, mode2), (3, mode3)):
            assert np.array_equal(mode_k_fold(mat, k, shape), mode1)


def test_03_kron_free_kernels():
    with acceptance(3, "factored Kronecker kernels match dense oracles"):
        rng = np.random.default_rng(2026)
        for trial in range(50):
            if trial % 2 == 0:
                n = int(rng.integers(2, 21))
                H = DenseHessian(rng.standard_normal((n, n, n)))
                T = H.tensor
            else:
                n_o = int(rng.integers(1, 6))
                p = synth_grid(n_o, seed=int(rng.integers(0, 1000)), connectivity=0.9)
                H = build_quadratic(p).H
                T = dense_quadratic_tensor(p)
                n = 4 * n_o
            M = {1: mode1_matrix(T), 2: mode2_matrix(T)}
            r1 = int(rng.integers(1, 4))
            r2 = int(rng.integers(1, 4))
            R = rng.standard_normal((n, r1))
            S = rng.standard_normal((n, r2))
            for mode in (1, 2):
                got = kron_factor_product(H, mode, R, S)
                want = M[mode] @ np.kron(R, S)
                assert rel_err(got, want) <= 1e-12, f"mode {mode}, trial {trial}"
            r = int(rng.integers(1, n + 1))
            V = rng.standard_normal((n, r))
            W = rng.standard_normal((n, r))
            got = project_hessian(H, W, V).tensor
            want = np.einsum("pab,pi,aj,bk->ijk", T, W, V, V)
            assert rel_err(got, want) <= 1e-12, f"projection, trial {trial}"


def test_04_lyapunov_residuals():
    with acceptance(4, "Lyapunov solves meet the residual bound"):
        rng = np.random.default_rng(11)
        for n in (4, 16, 64):
            for _ in range(3):
                A = random_stable(rng, n)
                G = rng.standard_normal((n, max(1, n // 4)))
                for transpose in (False, True):
                    f = solve_lyapunov_lr(A, G, transpose=transpose)
                    X = f.gram()
                    M = A.T if transpose else A
                    res = np.linalg.norm(M @ X + X @ M.T + G @ G.T, "fro")
                    bound = 1e-8 * max(1.0, np.linalg.norm(G @ G.T, "fro"))
                    assert res <= bound, f"n={n} transpose={transpose}: {res:.3e}"


def test_05_gramian_series_oracle():
    with acceptance(5, "compressed Gramian series matches the dense-series oracle"):
        p = synth_grid(3, seed=1, connectivity=1.0)
        sh = shift_system(build_quadratic(p))
        g = approx_gramians(sh, GramianConfig(alpha=5e-3, n_terms=5))
        T = dense_quadratic_tensor(p)
        P, Q = dense_gramian_series(
            sh.A, mode1_matrix(T), mode2_matrix(T), sh.B, sh.C, 5e-3, 5
        )
        P_sum = sum(P.values())
        Q_sum = sum(Q.values())
        relP = np.linalg.norm(g.P_factor.gram() - P_sum, "fro") / np.linalg.norm(P_sum, "fro")
        relQ = np.linalg.norm(g.Q_factor.gram() - Q_sum, "fro") / np.linalg.norm(Q_sum, "fro")
        assert relP <= 1e-8, f"P relative deviation {relP:.3e}"
        assert relQ <= 1e-8, f"Q relative deviation {relQ:.3e}"
        # even-index series terms vanish, so only odd terms are ever
        # computed and even term counts are rejected outright
        assert tuple(rec["term"] for rec in g.term_stats) == (1, 3, 5)
        with pytest.raises(ValidationError):
            GramianConfig(n_terms=4)


def test_06_biorthogonality_and_structure():
    with acceptance(6, "balancing is biorthogonal with exact angle-row structure"):
        sh = shift_system(build_quadratic(synth_grid(4, seed=3, connectivity=0.8)))
        gram = approx_gramians(sh, GramianConfig())
        proj = bt_projections(gram, 8)
        assert np.max(np.abs(proj.W.T @ proj.V - np.eye(8))) <= 1e-10
        # angle-row structure of a genuinely truncated model; the last
        # full-order direction is too ill-conditioned for a 1e-12 claim
        model = assemble_reduced(sh, proj, method="bt")
        r = 2
        assert np.max(np.abs(model.A_r[:r, r : 2 * r] - np.eye(r))) <= 1e-12
        assert np.max(np.abs(model.A_r[:r, :r])) <= 1e-12
        assert np.max(np.abs(model.A_r[:r, 2 * r :])) <= 1e-12
        assert np.max(np.abs(model.H_r.tensor[:r])) <= 1e-12
        assert np.max(np.abs(model.B_r[:r])) <= 1e-12
        full = assemble_reduced(sh, bt_projections(gram, 16), method="bt")
        tr_full = simulate_quadratic(sh)
        tr_red = simulate_reduced(full)
        err = np.max(np.abs(tr_full.outputs - tr_red.outputs))
        assert err <= 1e-5, f"full-order reduction error {err:.3e}"


def test_07_shift_equivalence():
    with acceptance(7, "zero-shift trajectories match the unshifted model"):
        sys = build_quadratic(synth_grid(4, seed=3, connectivity=0.8))
        sh = shift_system(sys)
        kw = dict(rtol=1e-11, atol=1e-13)
        tr_sh = simulate_quadratic(sh, **kw)
        tr_l = simulate_quadratic(sys, **kw)
        state_diff = np.max(np.abs(tr_sh.absolute_states - tr_l.states))
        assert state_diff <= 1e-8, f"state deviation {state_diff:.3e}"
        assert np.max(np.abs(tr_sh.outputs - tr_l.outputs)) <= 1e-8


def test_08_steady_state_adjustment():
    with acceptance(8, "steady-state adjustment removes the reduced angle drift"):
        # unbalanced two-machine grid: one machine spins forever, so the
        # raw reduced angle equation drifts linearly
        sh = shift_system(build_quadratic(synth_grid(2, seed=4, connectivity=0.8)))
        est = BalancedTruncationReducer(n_reduced=4).fit(sh)
        model = est.model_
        assert model.omega_s is not None and est.adjustment_error_ is None
        unadjusted = replace(model, omega_s=None)
        u = np.ones(model.m)
        drifts = {}
        for tag, mod in (("adjusted", model), ("unadjusted", unadjusted)):
            tr = simulate_reduced(mod, t_span=(0.0, 200.0), output_grid=401)
            z_end = est.transform(tr.states[-1])
            drifts[tag] = float(np.linalg.norm(reduced_rhs(mod, z_end, u)[:1]))
        assert drifts["adjusted"] <= 1e-6, f"adjusted drift {drifts['adjusted']:.3e}"
        assert drifts["unadjusted"] >= max(10.0 * drifts["adjusted"], 1e-5), (
            f"unadjusted drift only {drifts['unadjusted']:.3e}"
        )


def test_09_desk_scale_reduction_quality(tmp_path):
    with acceptance(9, "desk-scale balanced truncation beats the frozen threshold"):
        start = time.perf_counter()
        with open(FIXTURES / "desk_scale.json") as fh:
            fixture = json.load(fh)
        # the committed parameter file must be exactly what the generator
        # produces, otherwise the frozen numbers describe a different grid
        regen = tmp_path / "grid20.json"
        save_parameters(synth_grid(20, seed=7, connectivity=0.3), regen)
        assert regen.read_bytes() == (FIXTURES / "grid20.json").read_bytes()

        params = load_parameters(FIXTURES / "grid20.json")
        sysq = build_quadratic(params)
        shifted = shift_system(sysq)
        scen = fixture["scenario"]
        delta0 = np.zeros(params.n_o)
        delta0[0] = scen["perturb_first_angle"]
        x0 = lift_state(delta0, np.zeros(params.n_o)).x

        est = BalancedTruncationReducer(n_reduced=scen["nr"]).fit(shifted)
        full = simulate_quadratic(sysq, x0=x0, u=np.ones(1))
        red = simulate_reduced(est.model_, u=np.ones(2), x0_full=x0)
        report = compare(full, red)
        l2 = report.l2_output_error
        assert l2 <= fixture["threshold_l2"], f"l2 {l2:.4f} vs threshold"
        ratio = l2 / fixture["bt_l2"]
        assert 0.9 <= ratio <= 1.1, f"l2 {l2:.4f} vs oracle {fixture['bt_l2']:.4f}"

        pod = PODReducer(n_reduced=scen["nr"]).fit(shifted)
        try:
            pod_tr = simulate_reduced(pod.model_, u=np.ones(2), x0_full=x0)
            pod_l2 = compare(full, pod_tr).l2_output_error
            pod_failed = False
        except SimulationFailure:
            pod_l2 = None
            pod_failed = True
        assert pod_failed == fixture["pod_failed"]
        if not pod_failed:
            assert l2 <= 2.0 * pod_l2
        # else: the competing method produced no usable trajectory at all,
        # which satisfies "as good or better" with nothing to compare
        elapsed = time.perf_counter() - start
        assert elapsed < 60.0, f"runtime {elapsed:.1f}s"


def test_10_sweep_robustness(tmp_path):
    with acceptance(10, "term-count sweep is robust and flat for N >= 3"):
        out = tmp_path / "sweep.csv"
        code = cli_main([
            "sweep",
            "--params", str(FIXTURES / "grid20.json"),
            "--N", "1,3,5,7",
            "--nr", "40",
            "--perturb-x0", "1:0.1",
            "--out", str(out),
        ])
        assert code == 0
        import csv

        with open(out, newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert [r["N"] for r in rows] == ["1", "3", "5", "7"]
        assert all(r["failed"] == "0" for r in rows)
        l2 = {int(r["N"]): float(r["l2_output_error"]) for r in rows}
        high = [l2[N] for N in (3, 5, 7)]
        assert max(high) <= 2.0 * min(high), f"N >= 3 spread {l2}"
        with open(FIXTURES / "desk_scale.json") as fh:
            oracle = json.load(fh)["sweep_l2"]
        for N in (1, 3, 5, 7):
            ratio = l2[N] / oracle[str(N)]
            assert 0.9 <= ratio <= 1.1, f"N={N}: {l2[N]:.4f} vs oracle {oracle[str(N)]:.4f}"
