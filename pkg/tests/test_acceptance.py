"""End-to-end acceptance checks.

Each test prints exactly one ``criterion N: PASS/FAIL (...)`` line, also
collected in the ``acceptance`` section of the terminal summary.  The
simulation-heavy ones are marked ``slow`` (criterion 1 takes about half an
hour on a single core).
"""
import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from oracles import dip_lp, gaussian_two_sided_tail, grid_samples
from postclust.cli import run_tests
from postclust.clustering import FixedClusterer, Partition, WardClusterer
from postclust.dataset import PENGUIN_MEASURES, DataMatrix, drop_incomplete_rows, load_csv, penguins_path, zscale
from postclust.dip import dip_statistic
from postclust.harness import ScenarioConfig, run_scenario
from postclust.selective import contrast_vector, selective_p_value

ROOT = Path(__file__).resolve().parent.parent
ALPHA = 0.05


def fmt(x):
    return f"{x:.3f}"


@pytest.mark.slow
def test_criterion_1_null_calibration(verdict):
    cfg = ScenarioConfig.preset("null_gaussian", n=200, p=2, K=3, n_reps=500, mc_samples=2000, dip_reps=2000)
    rep = run_scenario(cfg)
    s = rep.summary
    checks = {
        "direct ks": s["direct"]["ks_to_uniform"] < 0.08,
        "direct rate": 0.02 <= s["direct"]["rejection_rate"] <= 0.09,
        "merged ks": s["merged"]["ks_to_uniform"] < 0.08,
        "merged rate": 0.02 <= s["merged"]["rejection_rate"] <= 0.09,
        "ttest rate": s["ttest"]["rejection_rate"] > 0.5,
        "dip rate": s["dip"]["rejection_rate"] <= 0.05,
    }
    detail = ", ".join(
        f"{m}: ks={fmt(s[m]['ks_to_uniform'])} rate={fmt(s[m]['rejection_rate'])} n={s[m]['n']}"
        for m in ("direct", "merged", "dip", "ttest")
    )
    failed = [k for k, ok in checks.items() if not ok]
    verdict("criterion 1", not failed, detail + (f"; failed: {failed}" if failed else ""))


def _contamination(delta, K):
    cfg = ScenarioConfig.preset("contamination", n=200, delta=delta, K=K, n_reps=500, alpha=ALPHA,
                                methods=("direct", "merged", "dip"))
    return run_scenario(cfg)


@pytest.mark.slow
def test_criterion_2_power_and_intervening_clusters(verdict):
    six2, six4 = _contamination(6.0, 2), _contamination(6.0, 4)
    mid2, mid4 = _contamination(3.5, 2), _contamination(3.5, 4)
    r = {name: {m: rep.rejection_rate(m) for m in ("direct", "merged", "dip")}
         for name, rep in (("6/K2", six2), ("6/K4", six4), ("3.5/K2", mid2), ("3.5/K4", mid4))}
    checks = {
        "direct K2 >= 0.8": r["6/K2"]["direct"] >= 0.8,
        "direct K4 <= 0.1": r["6/K4"]["direct"] <= 0.1,
        "|merged K4 - direct K2| <= 0.15": abs(r["6/K4"]["merged"] - r["6/K2"]["direct"]) <= 0.15,
        "dip identical per rep": six2.by_rep("dip") == six4.by_rep("dip") and len(six2.by_rep("dip")) == 500,
        "3.5: dip > selective (K2)": r["3.5/K2"]["dip"] > max(r["3.5/K2"]["direct"], r["3.5/K2"]["merged"]),
        "3.5: dip > merged > direct (K4)": r["3.5/K4"]["dip"] > r["3.5/K4"]["merged"] > r["3.5/K4"]["direct"],
    }
    detail = "; ".join(f"delta {k}: " + " ".join(f"{m}={fmt(v)}" for m, v in d.items()) for k, d in r.items())
    failed = [k for k, ok in checks.items() if not ok]
    verdict("criterion 2", not failed, detail + (f"; failed: {failed}" if failed else ""))


def test_criterion_3_fixed_partition_matches_gaussian_tail(verdict):
    worst, worst_z = 0.0, 0.0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(4, 9))
        labels = np.concatenate([[1, 2], rng.integers(1, 4, n - 2)])
        part = Partition.from_labels(labels)
        shift = rng.uniform(0, 3)
        x = rng.normal(size=n) + shift * (part.labels == 1)
        m = DataMatrix(x[:, None], ["x"])
        res = selective_p_value(m, 0, part, 1, 2, FixedClusterer(part), N=100_000, rng=rng)
        cv = contrast_vector(part, 1, 2)
        sd = math.sqrt(res.sigma_sq * cv.norm_sq)
        err = abs(res.p - gaussian_two_sided_tail(res.statistic, sd))
        if err > worst:
            worst, worst_z = err, abs(res.statistic) / sd
    verdict("criterion 3", worst < 0.01,
            f"max |p - Gaussian tail| = {worst:.4f} over 20 instances, at |statistic|/sd = {worst_z:.2f}")


@pytest.mark.slow
def test_criterion_4_floor_under_extreme_separation(verdict):
    N = 2000
    cfg = ScenarioConfig.preset("contamination", n=200, delta=15.0, K=2, n_reps=100, mc_samples=N,
                                methods=("direct",))
    ps = np.asarray(run_scenario(cfg).pvalues("direct"))
    floor = 1 / (N + 1)
    within = np.mean((ps >= floor / 2) & (ps <= 2 * floor)) if ps.size == 100 else 0.0
    verdict("criterion 4", within >= 0.9,
            f"{within:.2f} of {ps.size} p-values within a factor 2 of 1/(N+1); median p*(N+1) = "
            f"{np.median(ps) * (N + 1):.3f}")


def test_criterion_5_dip_oracle(verdict):
    worst, count = 0.0, 0
    uneven = np.array([0.0, 1.0, 3.0, 7.0, 8.0, 15.5])
    for n in range(2, 9):
        for levels in (2, 3, 4, 5):
            for s in grid_samples(n, levels):
                worst = max(worst, abs(dip_statistic(s).dip - dip_lp(s)))
                count += 1
        if n <= 6:
            for s in grid_samples(n, len(uneven)):
                x = uneven[s]
                worst = max(worst, abs(dip_statistic(x).dip - dip_lp(x)))
                count += 1
    rng = np.random.default_rng(0)
    bound_violations = 0
    for _ in range(10_000):
        n = int(rng.integers(2, 101))
        x = rng.normal(size=n) if rng.random() < 0.5 else np.round(rng.uniform(0, 5, n))
        d = dip_statistic(x).dip
        constant = np.ptp(x) == 0
        lower = 0.0 if constant else 1 / (2 * n)
        if not (lower - 1e-12 <= d <= 0.25 + 1e-12):
            bound_violations += 1
    ok = worst <= 1e-9 and bound_violations == 0
    verdict("criterion 5", ok, f"{count} exhaustive samples, max |dip - oracle| = {worst:.2e}; "
                               f"{bound_violations} bound violations in 10000 random samples")


def _calls(records, method):
    return {(r["k"], r["l"], r["variable"]): r["p"] <= ALPHA for r in records if r["method"] == method}


BL, BD, FL, BM = PENGUIN_MEASURES
FULL_DATA_CALLS = {
    # (k, l, variable): (direct, merged, dip, ttest) significance at 0.05
    (1, 2, BL): (True, True, False, True),
    (1, 2, BD): (True, True, False, True),
    (1, 2, FL): (False, False, True, True),
    (1, 2, BM): (True, True, False, True),
    (1, 3, BL): (False, True, False, True),
    (1, 3, BD): (False, False, False, False),
    (1, 3, FL): (False, False, True, True),
    (1, 3, BM): (False, False, False, True),
    (2, 3, BL): (False, False, False, True),
    (2, 3, BD): (True, True, False, True),
    (2, 3, FL): (True, True, False, True),
    (2, 3, BM): (True, True, False, True),
}
NEGATIVE_CONTROL_TTEST = {
    (1, 2, BL): False, (1, 2, BD): False, (1, 2, FL): True, (1, 2, BM): True,
    (1, 3, BL): True, (1, 3, BD): True, (1, 3, FL): True, (1, 3, BM): False,
    (2, 3, BL): True, (2, 3, BD): True, (2, 3, FL): True, (2, 3, BM): True,
}


@pytest.mark.slow
def test_criterion_6_penguins(verdict):
    raw = drop_incomplete_rows(load_csv(penguins_path(), columns=PENGUIN_MEASURES))
    full = zscale(raw)
    part = WardClusterer(3)(full)
    species = np.array(full.labels["species"])
    sizes = [part.size(c) for c in (1, 2, 3)]
    comp = {c: dict(zip(*np.unique(species[part.mask(c)], return_counts=True))) for c in (1, 2, 3)}
    purity = (comp[1] == {"Adelie": 146, "Chinstrap": 11} and comp[2] == {"Gentoo": 119}
              and comp[3] == {"Chinstrap": 57})

    variables = list(range(4))
    _, rec2 = run_tests(full, 3, None, variables, ("direct", "merged", "dip", "ttest"), 2000, 2000, 42)
    agree = {}
    for i, method in enumerate(("direct", "merged", "dip", "ttest")):
        calls = _calls(rec2, method)
        agree[method] = sum(calls[key] == want[i] for key, want in FULL_DATA_CALLS.items())

    neg = zscale(raw.where(species="Gentoo", sex="female"))
    _, rec1 = run_tests(neg, 3, None, variables, ("direct", "merged", "dip", "ttest"), 2000, 2000, 42)
    neg_props = {m: not any(_calls(rec1, m).values()) for m in ("direct", "merged", "dip")}
    neg_ttest = _calls(rec1, "ttest") == NEGATIVE_CONTROL_TTEST

    checks = {
        "sizes": sizes == [157, 119, 57],
        "purity": purity,
        "full data ttest exact": agree["ttest"] == 12,
        "full data dip exact": agree["dip"] == 12,
        "full data direct >= 10/12": agree["direct"] >= 10,
        "full data merged >= 10/12": agree["merged"] >= 10,
        "negative control dip all nonsignificant": neg_props["dip"],
        "negative control selective all nonsignificant": neg_props["direct"] and neg_props["merged"],
        "negative control ttest exact": neg_ttest,
    }
    failed = [k for k, ok in checks.items() if not ok]
    detail = (f"sizes={sizes}, full-data agreement " + " ".join(f"{m}={v}/12" for m, v in agree.items())
              + f", negative control n={neg.n}" + (f"; failed: {failed}" if failed else ""))
    verdict("criterion 6", not failed, detail)


INVARIANT_TESTS = [
    "tests/test_selective.py::test_contrast_vector_invariants",
    "tests/test_selective.py::test_perturb_identity_at_observed_statistic",
    "tests/test_selective.py::test_perturbation_properties",
    "tests/test_selective.py::test_p_in_unit_interval",
    "tests/test_selective.py::test_importance_p_floor_and_range",
    "tests/test_selective.py::test_seed_determinism",
    "tests/test_selective.py::test_swap_flips_statistic_keeps_p",
    "tests/test_merging.py::test_between_set_properties",
    "tests/test_merging.py::test_harmonic_merge_monotone_and_bounded",
    "tests/test_merging.py::test_merged_equals_direct_for_two_clusters",
    "tests/test_dip.py::test_matches_lp_oracle",
    "tests/test_dip.py::test_affine_invariance",
    "tests/test_dip.py::test_bounds",
    "tests/test_dip.py::test_p_value_monotone",
    "tests/test_clustering.py::test_cut_is_valid_partition",
    "tests/test_clustering.py::test_permutation_invariance",
    "tests/test_clustering.py::test_partition_matches_brute_force",
    "tests/test_clustering.py::test_deterministic_bit_for_bit",
    "tests/test_clustering.py::test_preserved_reflexive",
    "tests/test_dataset.py::test_zscale_properties",
    "tests/test_dataset.py::test_drop_incomplete_idempotent",
    "tests/test_harness.py::test_label_firewall",
    "tests/test_harness.py::test_report_is_seed_deterministic",
    "tests/test_harness.py::test_dip_identical_across_cuts",
    "tests/test_harness.py::test_ks_matches_scipy",
]


def test_criterion_7_invariant_suites(verdict):
    res = subprocess.run(
        [sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", *INVARIANT_TESTS],
        cwd=ROOT, capture_output=True, text=True,
    )
    last = res.stdout.strip().splitlines()[-1] if res.stdout.strip() else res.stderr.strip()[-200:]
    verdict("criterion 7", res.returncode == 0, f"{len(INVARIANT_TESTS)} property suites: {last}")
