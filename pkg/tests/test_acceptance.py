"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the lines are repeated in the
"acceptance" section of the terminal summary. ``python3 tests/test_acceptance.py``
runs the same checks without pytest.
"""

import itertools
import math
import time
import warnings
from fractions import Fraction

import numpy as np
import pytest
from scipy import stats

from marginalpriv import cli
from marginalpriv.attacks import (
    CopyFactorWarning,
    KCopyConfig,
    PackingExperimentConfig,
    k_copy_embed,
    packing_experiment,
    tracing_attack,
)
from marginalpriv.core import Database, compute_marginals
from marginalpriv.fingerprinting import (
    FPC_LENGTH_CONSTANT,
    FPC_THRESHOLD_MULTIPLIER,
    calibrate,
    fpc_min_length,
)
from marginalpriv.gauss_sv import GaussSVConfig, bad_coordinate_census, gauss_sv_release_detailed
from marginalpriv.mechanisms import linf_density_ratio, linf_sample_batch
from marginalpriv.oracles import make_mechanism
from marginalpriv.rng import make_rng
from marginalpriv.sparse_vector import SVConfig, SVSampleSizeWarning, stream_failure_rate, sv_min_rows

SEED = 20261019


def test_linf_sampler_law(verdict):
    d, eps, Delta, m = 20, 1.0, 0.1, 100_000
    start = time.perf_counter()
    radii, offsets = linf_sample_batch(m, d, eps, Delta, make_rng(SEED, "accept/linf-law"))
    norms = np.max(np.abs(offsets), axis=1)
    ks = stats.kstest(radii, stats.gamma(d + 1, scale=Delta / eps).cdf).statistic
    elapsed = time.perf_counter() - start
    mean = norms.mean()
    ok = abs(mean - 2.0) <= 0.02 * 2.0 and ks <= 0.01 and elapsed < 10
    verdict(1, ok, f"mean ||Y||_inf={mean:.4f} (2.0 +/- 2%), KS={ks:.4f} (<= 0.01), {elapsed:.2f}s (< 10s)")


def test_linf_tail_bound(verdict):
    d, eps, Delta, alpha, m = 3, 1.0, 0.1, 0.6, 1_000_000
    assert math.isclose(d, eps * alpha / (2 * Delta))
    start = time.perf_counter()
    _, offsets = linf_sample_batch(m, d, eps, Delta, make_rng(SEED, "accept/linf-tail"))
    rate = float(np.mean(np.max(np.abs(offsets), axis=1) >= alpha))
    elapsed = time.perf_counter() - start
    bound = (2 * math.e) ** -d
    se = math.sqrt(rate * (1 - rate) / m)
    ok = rate <= bound + 3 * se and elapsed < 30
    verdict(2, ok, f"P[||Y||_inf >= {alpha}]={rate:.5f}, bound (2e)^-3 + 3SE={bound + 3 * se:.5f}, {elapsed:.2f}s")


def test_linf_privacy_witness(verdict):
    rng = make_rng(SEED, "accept/linf-privacy")
    eps, violations, worst = 1.0, 0, -math.inf
    for _ in range(10_000):
        d = int(rng.integers(1, 50))
        Delta = float(rng.uniform(0.01, 1.0))
        _, y = linf_sample_batch(1, d, eps, Delta, rng)
        shift = rng.uniform(-Delta, Delta, size=d)
        shift[rng.integers(d)] = Delta * rng.choice((-1.0, 1.0))  # put one coordinate on the boundary
        ratio = linf_density_ratio(y[0], y[0] + shift, eps, Delta)
        worst = max(worst, ratio)
        violations += ratio > math.exp(eps) + 1e-9
    verdict(3, violations == 0, f"{violations} violations in 10^4 pairs, max ratio {worst:.6f} vs e={math.e:.6f}")


def test_sparse_vector_contract(verdict):
    cfg = SVConfig(c=5, k=200, epsilon=1.0, delta=1e-6, alpha=0.2, beta=0.05)
    n = sv_min_rows(cfg)
    start = time.perf_counter()
    rate = stream_failure_rate(cfg, n, 2000, SEED)
    elapsed = time.perf_counter() - start
    ok = rate <= 0.05 + 0.02 and elapsed < 120
    verdict(4, ok, f"n={n}, failure rate {rate:.4f} (<= 0.07) over 2000 planted streams, {elapsed:.1f}s")


def _chain_exact(true_counts, n, noisy, sv_answer, output):
    """Exact check of |a - Dbar| <= |a~ - Dbar + 2q| + 2|a^ - q| on one coordinate.

    Dbar and q(D) are the exact rationals; a~ and a^ are the recorded floats. The
    chain is checked for the unrounded output clamp(a~ + 2a^), and the released
    float must be that value correctly rounded.
    """
    dbar = Fraction(2 * int(true_counts) - n, n)
    a_tilde, a_hat = Fraction(float(noisy)), Fraction(float(sv_answer))
    q = (dbar - a_tilde) / 2
    a_exact = min(Fraction(1), max(Fraction(-1), a_tilde + 2 * a_hat))
    lhs = abs(a_exact - dbar)
    rhs = abs(a_tilde - dbar + 2 * q) + 2 * abs(a_hat - q)
    return lhs <= rhs and float(a_exact) == float(output)


def test_gauss_sv_structure(verdict):
    d, trials = 10_000, 500
    alpha = 0.1
    sigma = alpha / (2 * stats.norm.isf(0.005))  # P[|z_j| > alpha/2] = 1%
    overrides = dict(sigma_override=sigma, alpha_override=alpha, sv_c_override=200, sv_beta_override=0.05)
    # Database size: the sparse-vector sample-size gate for this configuration.
    n = sv_min_rows(GaussSVConfig(1.0, 1e-6, 1, d, **overrides).sv_config)
    db = Database.random(n, d, make_rng(SEED, "accept/gsv-db"))
    counts = db.column_counts()
    true = compute_marginals(db).values
    cfg = GaussSVConfig.for_database(db, 1.0, 1e-6, **overrides)
    within, chain_failures, bad = 0, 0, 0
    with warnings.catch_warnings():
        warnings.simplefilter("error", SVSampleSizeWarning)
        for t in range(trials):
            res = gauss_sv_release_detailed(db, cfg, make_rng(SEED, "accept/gsv", t))
            a = res.output.values
            within += np.max(np.abs(a - true)) <= alpha
            bad += bad_coordinate_census(res.gaussian_noise, alpha / 2)
            # Unflagged coordinates: a^ = 0, so the released value must be a~ itself and
            # both sides of the chain equal |a~ - Dbar| exactly.
            idle = ~res.flagged
            chain_failures += int(np.count_nonzero((res.sv_answers[idle] != 0) | (a[idle] != res.noisy[idle])))
            for j in np.flatnonzero(res.flagged):
                chain_failures += not _chain_exact(counts[j], n, res.noisy[j], res.sv_answers[j], a[j])
    rate = within / trials
    ok = rate >= 0.95 and chain_failures == 0
    del db
    verdict(5, ok, f"n={n}, d={d}: ||a - Dbar||_inf <= {alpha} in {rate:.3f} of {trials} trials (>= 0.95); "
                   f"bad-coordinate fraction {bad / (trials * d):.4f}; {chain_failures} error-chain failures")


def test_bad_coordinate_chernoff_shape(verdict):
    p, d, trials = 0.01, 100_000, 100
    threshold = stats.norm.isf(p / 2)
    tol = 3 * math.sqrt(p * (1 - p) / d)
    hits = 0
    for t in range(trials):
        z = make_rng(SEED, "accept/census", t).normal(size=d)
        hits += abs(bad_coordinate_census(z, threshold) / d - p) <= tol
    verdict(6, hits / trials >= 0.99, f"census/d within {tol:.5f} of {p} in {hits}/{trials} trials (>= 99%)")


@pytest.mark.slow
def test_fingerprinting_calibration(verdict):
    start = time.perf_counter()
    cal = calibrate(n=10, delta=0.05, trials=10_000, seed=0)
    elapsed = time.perf_counter() - start
    r = cal.rates
    ok = (cal.constant == FPC_LENGTH_CONSTANT and cal.multiplier == FPC_THRESHOLD_MULTIPLIER
          and r.completeness >= 0.99 and r.soundness <= 0.05
          and min(r.robust_random, r.robust_shrink) >= 0.99 and elapsed < 600)
    verdict(7, ok, f"C={cal.constant} (frozen {FPC_LENGTH_CONSTANT}), multiplier={cal.multiplier} "
                   f"(frozen {FPC_THRESHOLD_MULTIPLIER}); completeness {r.completeness:.4f}, "
                   f"soundness {r.soundness:.4f}, robust {r.robust_random:.4f}/{r.robust_shrink:.4f}; "
                   f"{elapsed:.0f}s")


def test_k_copy_distortion_exhaustive(verdict):
    violations = checked = 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CopyFactorWarning)
        for n in range(1, 13):
            for k in range(1, n + 1):
                for sign in (1, -1):
                    cfg = KCopyConfig(k, n, sign)
                    n_k = cfg.n_k
                    for d in range(1, 5):
                        if n_k * d <= 16:
                            # Every database outright.
                            grids = (np.array(f, dtype=bool).reshape(n_k, d)
                                     for f in itertools.product((False, True), repeat=n_k * d))
                        else:
                            # Marginals depend only on per-column counts: one database per count profile.
                            rows = np.arange(n_k)[:, None]
                            grids = (rows < np.array(c)[None, :]
                                     for c in itertools.product(range(n_k + 1), repeat=d))
                        for bits in grids:
                            star = Database.from_bits(bits)
                            big = k_copy_embed(star, cfg)
                            recount = Database.from_bits(big.bits())  # marginals from the rows, not the cache
                            gap = np.abs(compute_marginals(recount).values - compute_marginals(star).values)
                            violations += int(np.any(gap > 2 * k / n + 1e-12))
                            checked += 1
    verdict(8, violations == 0, f"{violations} violations over {checked} (n, k, d, padding, database) cases")


def test_attack_discrimination(verdict):
    delta, n_k, trials = 0.05, 10, 10_000
    exact = tracing_attack(make_mechanism("exact"), n_k, delta, 1, trials, SEED)
    d = fpc_min_length(n_k, delta)
    eps, alpha = 1.0, 1 / 8
    n = round(4 * d / (eps * alpha))
    linf = tracing_attack(make_mechanism("linf", epsilon=eps), n, delta, n // n_k, trials, SEED)
    limit = delta + 5 * linf.excluded_standard_error
    ok = exact.trace_nonempty_rate >= 0.99 and linf.excluded_accusation_rate <= limit
    verdict(9, ok, f"exact traced {exact.trace_nonempty_rate:.4f} (>= 0.99); linf at n={n}, d={d}, k={n // n_k}: "
                   f"excluded accused {linf.excluded_accusation_rate:.4f} (<= {limit:.4f}), "
                   f"accuracy {linf.accuracy_rate:.3f}")


def test_packing_distinguisher(verdict):
    d = 1600
    const = packing_experiment(make_mechanism("constant"), PackingExperimentConfig(d, 100_000), SEED)
    rate, bound = const.rate_hoeffding, const.z_prime_bound
    se = math.sqrt(rate * (1 - rate) / 100_000)
    exact = packing_experiment(make_mechanism("exact"), PackingExperimentConfig(d, 1000), SEED)
    all_d = bool(np.all(exact.z == d))
    ok = rate <= bound + 3 * se and all_d
    verdict(10, ok, f"P[<y,x> > (sqrt(d)/20)||y||_2]={rate:.5f} (<= e^-2={bound:.4f} + 3SE); "
                    f"exact Z=d in {'all' if all_d else 'not all'} of 1000 trials")


def _cli_matrix(tmp):
    db = tmp / "db.bin"
    runs = [
        ["gen", "--rows", "300", "--dims", "40", "--seed", "9", "--out", str(db)],
        ["gen", "--rows", "50", "--dims", "30", "--distribution", "biased", "--p", "0.3", "--seed", "9",
         "--db-format", "text", "--out", str(tmp / "biased.txt")],
        ["gen", "--rows", "10", "--distribution", "fpc", "--delta", "0.05", "--seed", "9",
         "--out", str(tmp / "code.bin")],
    ]
    for mech, extra in (("laplace", []), ("linf", []), ("gaussian", ["--delta", "1e-6"]),
                        ("gauss-sv", ["--delta", "1e-6"])):
        for fmt in ("csv", "json"):
            runs.append(["release", "--mechanism", mech, "--db", str(db), "--epsilon", "1", *extra, "--seed", "9",
                         "--format", fmt, "--out", str(tmp / f"{mech}.{fmt}"),
                         "--summary", str(tmp / f"{mech}.{fmt}.summary")])
    runs.append(["release", "--mechanism", "linf", "--db", str(tmp / "biased.txt"), "--epsilon", "2", "--seed", "9",
                 "--out", str(tmp / "text-db.csv"), "--summary", str(tmp / "text-db.summary")])
    for mech in ("exact", "linf:epsilon=1", "gaussian:epsilon=1,delta=1e-6"):
        runs.append(["attack", "--mechanism", mech, "--rows", "40", "--delta", "0.05", "--k", "4", "--trials", "5",
                     "--seed", "9", "--out", str(tmp / f"attack-{mech.split(':')[0]}.jsonl")])
    runs.append(["attack", "--mechanism", "exact", "--rows", "10", "--delta", "0.05", "--k", "auto",
                 "--trials", "5", "--jobs", "2", "--seed", "9", "--out", str(tmp / "attack-jobs.jsonl")])
    for fmt in ("csv", "json"):
        runs.append(["bounds", "--dims", "10", "100", "1000", "--alpha", "0.1", "--epsilon", "1", "--delta", "1e-6",
                     "--format", fmt, "--out", str(tmp / f"bounds.{fmt}")])
    runs.append(["bounds", "--dims", "10", "--alpha", "0.1", "--epsilon", "1", "--out", str(tmp / "bounds-nodelta")])
    return runs


def test_cli_determinism(verdict, tmp_path):
    snapshots, codes = [], []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for attempt in ("first", "second"):
            tmp = tmp_path / attempt
            tmp.mkdir()
            for argv in _cli_matrix(tmp):
                codes.append(cli.main(argv))
            snapshots.append({p.name: p.read_bytes() for p in sorted(tmp.iterdir())})
    same = snapshots[0] == snapshots[1]
    ok = same and all(c == 0 for c in codes) and len(snapshots[0]) >= 20
    differing = [k for k in snapshots[0] if snapshots[0][k] != snapshots[1].get(k)]
    verdict(11, ok, f"{len(snapshots[0])} output files, {len(_cli_matrix(tmp_path))} commands; "
                    f"exit codes {sorted(set(codes))}; differing files: {differing or 'none'}")


if __name__ == "__main__":
    import sys
    import tempfile
    from pathlib import Path

    def record(number, ok, detail):
        print(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}", flush=True)

    failed = 0
    for name, fn in list(globals().items()):
        if name.startswith("test_"):
            try:
                if "tmp_path" in fn.__code__.co_varnames[:fn.__code__.co_argcount]:
                    with tempfile.TemporaryDirectory() as tmp:
                        fn(record, Path(tmp))
                else:
                    fn(record)
            except AssertionError:
                failed += 1
    sys.exit(1 if failed else 0)
