"""Acceptance gate: the eight release criteria at their stated tolerances.

Each test records a one-line verdict that is printed in the pytest terminal
summary. Criteria 5 and 6 train full-size models (roughly 40 minutes of CPU
in total); their runs are shared through session fixtures, and the resulting
reports, scatter plots and the variant comparison table are written to
``acceptance_out/`` at the repository root.
"""

import time
from pathlib import Path

import numpy as np
import pytest
from conftest import record_criterion

from relgan.cli_report import emit_csv
from relgan.cli_report.cli import run_dirac, run_manifest, run_train2d
from relgan.cli_report.artifacts import RunManifest
from relgan.cli_report.config import DiracConfig
from relgan.dirac_lab import classify_convergence, dirac_simulate, trailing_window
from relgan.grad_core import Tensor
from relgan.grad_core.suite import TOLERANCE, run_suite
from relgan.losses import TripletBatch, loss_d_triplet, loss_d_triplet_variant
from relgan.relnet import build_relation_discriminator
from relgan.synth2d import grid25, mode_coverage, ring8, sample_mixture
from relgan.trainer import TrainConfig

OUT = Path(__file__).resolve().parent.parent / "acceptance_out"
SEEDS = (0, 1, 2)
DRAWS = 1000


def _train(dataset, loss, seed, iterations):
    cfg = TrainConfig(dataset=dataset, loss=loss, seed=seed, iterations=iterations, checkpoint=False)
    out = OUT / f"{dataset}_{loss}_seed{seed}"
    start = time.perf_counter()
    summary = run_train2d(cfg, out)
    summary["runtime_s"] = time.perf_counter() - start
    return summary


@pytest.fixture(scope="session")
def ring8_triplet():
    return {s: _train("ring8", "relation_triplet", s, 20_000) for s in SEEDS}


@pytest.fixture(scope="session")
def ring8_variant():
    return {s: _train("ring8", "relation_triplet_variant", s, 20_000) for s in SEEDS}


@pytest.fixture(scope="session")
def grid25_triplet():
    return {s: _train("grid25", "relation_triplet", s, 30_000) for s in SEEDS}


def _random_disc(rng):
    d = build_relation_discriminator(rng, em_hidden=(16, 16), rm_hidden=(16,))
    # rescale weights so scores span a wide range relative to the margins
    scale = 10.0 ** rng.uniform(-2, 1)
    d.set_params([Tensor(p.data * scale, requires_grad=True) for p in d.params])
    return d


def test_criterion_1_gradient_correctness():
    start = time.perf_counter()
    rows = run_suite(seed=0, eps=1e-5)
    runtime = time.perf_counter() - start
    worst = max(r["max_rel_error"] for r in rows)
    failed = [r["name"] for r in rows if not r["passed"]]
    ok = not failed and worst < TOLERANCE and runtime < 60.0
    record_criterion(1, ok, f"{len(rows)} checks, max rel err {worst:.2e} (< {TOLERANCE:g}), "
                            f"{runtime:.1f}s; failed: {failed or 'none'}")
    assert ok


def test_criterion_2_divergence_properties():
    rng = np.random.default_rng(2024)
    negative = nonzero = 0
    for _ in range(DRAWS):
        d = _random_disc(rng)
        b = int(rng.integers(1, 33))
        scale = 10.0 ** rng.uniform(-2, 1)
        batch = TripletBatch(*(Tensor(scale * rng.standard_normal((b, 2))) for _ in range(4)))
        negative += loss_d_triplet(d, batch).item() < 0.0
        negative += loss_d_triplet_variant(d, batch).item() < 0.0
        x = Tensor(scale * rng.standard_normal((b, 2)))
        same = TripletBatch(x, x, x, x)
        nonzero += loss_d_triplet(d, same).item() != 0.0
        nonzero += loss_d_triplet_variant(d, same).item() != 0.0
    ok = negative == 0 and nonzero == 0
    record_criterion(2, ok, f"{DRAWS} draws: {negative} negative values, {nonzero} non-zero at coincidence")
    assert ok


def test_criterion_3_jensen_ordering():
    rng = np.random.default_rng(77)
    violations = 0
    for _ in range(DRAWS):
        d = _random_disc(rng)
        b = int(rng.integers(1, 33))
        batch = TripletBatch(*(Tensor(2.0 * rng.standard_normal((b, 2))) for _ in range(4)))
        violations += loss_d_triplet(d, batch).item() < loss_d_triplet_variant(d, batch).item()
    record_criterion(3, violations == 0, f"{DRAWS} batches: {violations} violations")
    assert violations == 0


def test_criterion_4_dirac_reproduction():
    start = time.perf_counter()
    trajs = {tag: dirac_simulate((0.2, 0.1), tag, steps=10_000, h=0.05)
             for tag in ("relation_triplet", "wgan", "vanilla_ns")}
    runtime = time.perf_counter() - start
    labels = {tag: classify_convergence(t, tol=1e-2) for tag, t in trajs.items()}
    mins = {tag: float(trailing_window(t).min()) for tag, t in trajs.items()}
    rel_ok = labels["relation_triplet"] == "converged"
    base_ok = all(labels[t] == "oscillating" and mins[t] > 1e-2 for t in ("wgan", "vanilla_ns"))
    ok = rel_ok and base_ok and runtime < 60.0
    run_dirac(DiracConfig(), OUT / "dirac")
    detail = ", ".join(f"{t}={labels[t]} (final |theta| {trajs[t].norms[-1]:.4g}, trailing min {mins[t]:.4g})"
                       for t in trajs)
    record_criterion(4, ok, f"{detail}; {runtime:.1f}s")
    assert base_ok, "baselines must oscillate"
    assert rel_ok, f"relation_triplet classified {labels['relation_triplet']}"


def test_criterion_5_two_d_diversity(ring8_triplet, grid25_triplet):
    ring_ok_seeds = [s for s, r in ring8_triplet.items()
                     if r["final"]["covered_modes"] >= 7 and r["final"]["hq_fraction"] >= 0.7]
    grid_modes = [r["final"]["covered_modes"] for r in grid25_triplet.values()]
    grid_median = float(np.median(grid_modes))
    slowest = max(r["runtime_s"] for r in (*ring8_triplet.values(), *grid25_triplet.values()))
    ring_ok = len(ring_ok_seeds) >= 2
    grid_ok = grid_median >= 23
    ok = ring_ok and grid_ok and slowest < 1800
    ring_detail = "; ".join(f"seed {s}: {r['final']['covered_modes']}/8 modes, hq {r['final']['hq_fraction']:.3f}"
                            for s, r in ring8_triplet.items())
    record_criterion(5, ok, f"ring8 [{ring_detail}] -> {len(ring_ok_seeds)}/3 seeds pass; "
                            f"grid25 modes {grid_modes} median {grid_median:g} (>= 23); "
                            f"slowest run {slowest:.0f}s")
    assert slowest < 1800
    assert ring_ok, f"ring8: only {len(ring_ok_seeds)} of 3 seeds reach 7/8 modes and hq >= 0.7"
    assert grid_ok, f"grid25: median covered modes {grid_median:g} < 23"


def test_criterion_6_variant_non_inferiority(ring8_triplet, ring8_variant):
    rows = []
    for s in SEEDS:
        for loss, runs in (("relation_triplet", ring8_triplet), ("relation_triplet_variant", ring8_variant)):
            f = runs[s]["final"]
            rows.append({"seed": s, "loss": loss, "covered_modes": f["covered_modes"],
                         "hq_fraction": f["hq_fraction"], "score_gap": f["score_gap"]})
    emit_csv(rows, OUT / "variant_comparison.csv")
    hq_t = float(np.median([ring8_triplet[s]["final"]["hq_fraction"] for s in SEEDS]))
    hq_v = float(np.median([ring8_variant[s]["final"]["hq_fraction"] for s in SEEDS]))
    ok = hq_v >= hq_t - 0.1
    record_criterion(6, ok, f"median hq variant {hq_v:.3f} vs triplet {hq_t:.3f} (need >= {hq_t - 0.1:.3f}); "
                            f"table: acceptance_out/variant_comparison.csv")
    assert ok


def test_criterion_7_determinism(tmp_path):
    cfg = TrainConfig(iterations=300, eval_every=100, eval_samples=2000, seed=11, checkpoint=False)
    run_train2d(cfg, tmp_path / "train_a")
    run_manifest(RunManifest.read(tmp_path / "train_a" / "manifest.json"), tmp_path / "train_b")
    run_dirac(DiracConfig(steps=2000), tmp_path / "dirac_a")
    run_manifest(RunManifest.read(tmp_path / "dirac_a" / "manifest.json"), tmp_path / "dirac_b")
    mismatched = []
    compared = 0
    for a, b in (("train_a", "train_b"), ("dirac_a", "dirac_b")):
        for csv in sorted((tmp_path / a).glob("*.csv")):
            compared += 1
            if csv.read_bytes() != (tmp_path / b / csv.name).read_bytes():
                mismatched.append(f"{a}/{csv.name}")
    ok = compared > 0 and not mismatched
    record_criterion(7, ok, f"{compared} CSV reports replayed from manifests; mismatches: {mismatched or 'none'}")
    assert ok


def test_criterion_8_oracle_sanity():
    details = []
    ok = True
    for spec, seed in ((ring8(), 0), (grid25(), 1)):
        rep = mode_coverage(sample_mixture(spec, 10_000, np.random.default_rng(seed)), spec, k_sigma=3)
        good = rep.covered_modes == spec.n_modes and rep.hq_fraction >= 0.98
        ok &= good
        details.append(f"{spec.name}: {rep.covered_modes}/{spec.n_modes} modes, hq {rep.hq_fraction:.4f}")
    record_criterion(8, ok, "; ".join(details))
    assert ok
