"""Acceptance criteria at their stated scales and tolerances.

Runs for roughly half an hour on one core. Each test records a PASS/FAIL line
that is printed in the pytest terminal summary; ``python tests/test_acceptance.py``
runs them outside pytest.
"""

import math

import numpy as np
import pytest
from scipy import stats

from acceptance_log import record
from lotci import core
from lotci.design import TryDesign, build_try_design, design_dim, grid_design
from lotci.harness import ExperimentConfig, MethodSpec, run_ci_method, run_experiment, seed_plan
from lotci.models import BinomialModel, NormalMeanModel, make_model
from lotci.streams import Streams

pytestmark = pytest.mark.acceptance

SEED = 2024


def ci_experiment(model, model_config, methods, reps, M, alpha=0.05, seed=SEED, **kw):
    return run_experiment(ExperimentConfig.from_dict(dict(
        model=model, model_config=model_config, kind="ci", methods=methods, reps=reps, M=M, alpha=alpha, seed=seed,
        **kw)))


def test_criterion_1_multinomial_max_probability():
    rep = ci_experiment(
        "multinomial", {"pi": [0.2] * 5, "n": 30},
        [{"name": "bootstrap"}, {"name": "loci-nb", "delta": 0.1, "design": {"kind": "grid", "U": 3}},
         {"name": "m-out-of-n", "m": 10}],
        reps=1000, M=2000)
    boot = rep.value("bootstrap", "CR")
    loci = rep.value("loci-nb(delta=0.1)", "CR")
    mn = rep.value("m-out-of-n", "CR")
    ok_b, ok_l, ok_m = abs(boot - 0.906) <= 0.04, abs(loci - 0.950) <= 0.04, mn >= 0.95
    detail = (f"bootstrap CR {boot:.3f} (target 0.906+-0.04: {'ok' if ok_b else 'miss'}), "
              f"LOCI CR {loci:.3f} (target 0.950+-0.04: {'ok' if ok_l else 'miss'}), "
              f"m-out-of-n CR {mn:.3f} (target >= 0.95: {'ok' if ok_m else 'miss'}); "
              f"ML boot/LOCI/m-n {rep.value('bootstrap', 'ML'):.3f}/{rep.value('loci-nb(delta=0.1)', 'ML'):.3f}/"
              f"{rep.value('m-out-of-n', 'ML'):.3f}")
    record("1", ok_b and ok_l and ok_m, detail)
    assert ok_b and ok_l and ok_m, detail


def test_criterion_2_weibull_location():
    methods = [{"name": "bootstrap"}, {"name": "loci-nb", "design": {"kind": "grid", "U": 3}}]
    hard = ci_experiment("weibull", {"a": 2.5, "b": 2.5, "tau": 1.0, "n": 20}, methods, reps=300, M=500)
    easy = ci_experiment("weibull", {"a": 0.5, "b": 0.5, "tau": 1.0, "n": 20}, methods, reps=300, M=500)
    hb, hl = hard.value("bootstrap", "CR"), hard.value("loci-nb", "CR")
    eb, el = easy.value("bootstrap", "CR"), easy.value("loci-nb", "CR")
    ok_b, ok_l, ok_e = hb <= 0.10, hl >= 0.80, abs(eb - el) <= 0.05
    detail = (f"(2.5,2.5) bootstrap CR {hb:.3f} (target <= 0.10: {'ok' if ok_b else 'miss'}), "
              f"LOCI CR {hl:.3f} (target >= 0.80: {'ok' if ok_l else 'miss'}); "
              f"(0.5,0.5) bootstrap {eb:.3f} vs LOCI {el:.3f} (agree within 0.05: {'ok' if ok_e else 'miss'}); "
              f"LOCI warnings {hard.row('loci-nb', 'CR')['warnings'] or 'none'} / {easy.row('loci-nb', 'CR')['warnings'] or 'none'}")
    record("2", ok_b and ok_l and ok_e, detail)
    assert ok_b and ok_l and ok_e, detail


def test_criterion_3_hdreg_sign_constraint():
    cfg = dict(model="hdreg", model_config={"n": 20, "p": 40, "beta_spec": "i"}, kind="test",
               methods=[{"name": "bootstrap"}, {"name": "lot-is-design"}], reps=500, M=500, alpha=0.05, seed=SEED)
    rep = run_experiment(ExperimentConfig.from_dict(cfg))
    boot = rep.value("bootstrap", "rejection_rate@alpha=0.05")
    lot = rep.value("lot-is-design", "rejection_rate@alpha=0.05")
    ok_l, ok_g = lot <= 0.08, boot - lot >= 0.02

    # power curve over the alternative scale c; emitted only, no numeric target
    power = dict(cfg, reps=100, scenarios=[{"beta_spec": "power", "c": -0.25 * i} for i in range(1, 9)])
    prep = run_experiment(ExperimentConfig.from_dict(power))
    print("power curve (c, bootstrap, LOT):")
    for i in range(1, 9):
        c = -0.25 * i
        suffix = f"@beta_spec=power,c={c}"
        print(f"  {c:+.2f} {prep.value('bootstrap', 'rejection_rate@alpha=0.05' + suffix):.3f} "
              f"{prep.value('lot-is-design', 'rejection_rate@alpha=0.05' + suffix):.3f}")

    detail = (f"type I error bootstrap {boot:.3f}, LOT {lot:.3f} (target LOT <= 0.08: {'ok' if ok_l else 'miss'}; "
              f"gap {boot - lot:.3f} >= 0.02: {'ok' if ok_g else 'miss'})")
    record("3", ok_l and ok_g, detail)
    assert ok_l and ok_g, detail


def test_criterion_4_npreg_argmin():
    rep = ci_experiment("npreg", {"function": "I", "n": 20}, [{"name": "bootstrap"}, {"name": "loci-nb"}],
                        reps=500, M=1000)
    boot, loci = rep.value("bootstrap", "CR"), rep.value("loci-nb", "CR")
    ok_g, ok_l = loci - boot >= 0.15, loci >= 0.88
    detail = (f"bootstrap CR {boot:.3f}, LOCI CR {loci:.3f} (gap {loci - boot:.3f} >= 0.15: "
              f"{'ok' if ok_g else 'miss'}; LOCI >= 0.88: {'ok' if ok_l else 'miss'})")
    record("4", ok_g and ok_l, detail)
    assert ok_g and ok_l, detail


def exact_lot_pvalues(model):
    """p(x) = max over try points of the exact tail P_phi(X >= x), for every possible count x."""
    out = np.empty(model.n + 1)
    for x in range(model.n + 1):
        th = model.estimate(x)
        region = model.neighborhood(x, th).with_constraint(model.null_constraint)
        td = build_try_design(th, region, grid_design(8, design_dim(region)))
        out[x] = max(model.exact_tail(float(phi[0]), x) for phi in td.points)
    return out


def test_criterion_5_exact_binomial_validity():
    reps = 5000
    parts, ok = [], True
    for n in (5, 20):
        for pi in (0.5, 0.3):
            model = BinomialModel(n=n, pi=pi, pi0=0.5)
            p = exact_lot_pvalues(model)
            xs = np.random.default_rng([SEED, n, int(pi * 10)]).binomial(n, pi, size=reps)
            pmf = stats.binom.pmf(np.arange(n + 1), n, pi)
            for a in (0.05, 0.1):
                emp = float(np.mean(p[xs] < a))
                exact = float(pmf[p < a].sum())
                bound = a + 3 * math.sqrt(a * (1 - a) / reps)
                good = emp <= bound and exact <= a + 1e-12
                ok &= good
                parts.append(f"n={n} pi={pi} a={a}: {emp:.4f} (exact {exact:.4f}, bound {bound:.4f})")
    detail = "; ".join(parts)
    record("5", ok, detail)
    assert ok, detail


def test_criterion_6_reductions_bit_for_bit():
    models = {
        "multinomial": make_model("multinomial", {}),
        "weibull": make_model("weibull", {}),
        "hdreg": make_model("hdreg", {}),
        "npreg": make_model("npreg", {}),
        "binomial": make_model("binomial", {}),
        "normal": make_model("normal", {"known_sigma": False}),
    }
    parts, ok = [], True
    for name, model in models.items():
        model_ok = True
        for s in range(3):
            data = model.generate(np.random.default_rng([SEED, s]))
            th = model.estimate(data)
            center = TryDesign(th[None, :])
            same = True
            if type(model).target_estimate is not core.Model.target_estimate:
                a = core.nb_ci(model, data, None, center, 300, Streams(s))
                b = core.hybrid_bootstrap_ci(model, data, 300, Streams(s))
                same &= (a.lower, a.upper) == (b.lower, b.upper)
            if model.null_constraint is not None:
                pa = core.nb_pvalue(model, data, None, center, 300, Streams(s)).p
                pb = core.bootstrap_pvalue(model, data, 300, Streams(s)).p
                same &= pa == pb
            model_ok &= same
        ok &= model_ok
        parts.append(f"{name} {'identical' if model_ok else 'differs'}")
    detail = ", ".join(parts) + " (intervals on the interval models, p-values on the testing models)"
    record("6", ok, detail)
    assert ok, detail


def test_criterion_7_regular_case_agreement():
    n, reps, M = 800, 5000, 1000
    model = NormalMeanModel(n=n, mu=0.0, sigma=1.0, known_sigma=False, delta=0.5)
    plan = seed_plan(SEED)
    width = 0.5 * math.log(n) / math.sqrt(n)
    covered, diffs = 0, []
    for r in range(reps):
        data = model.generate(plan.data(0, r))
        loci = run_ci_method(model, data, MethodSpec("loci-nb"), M, 0.05, plan.resamples(0, r, 0),
                             plan.design(0, r, 0))
        boot = run_ci_method(model, data, MethodSpec("bootstrap"), M, 0.05, plan.resamples(0, r, 1), None)
        covered += loci.lower <= 0.0 <= loci.upper
        diffs.append(abs(loci.upper - boot.upper))
    cr = covered / reps
    mean_diff = float(np.mean(diffs))
    ok_c, ok_d = abs(cr - 0.95) <= 0.02, mean_diff <= 3 * width
    # with the default U=4 grid the largest sigma try point sits at sigma_hat + 0.75 width,
    # which scales both extreme pivot quantiles by about 1 + 0.75 width
    inflated = 2 * stats.norm.cdf(stats.norm.ppf(0.975) * (1 + 0.75 * width)) - 1
    print(f"coverage predicted by the sigma inflation of the extreme try point: {inflated:.4f}")
    detail = (f"LOCI CR {cr:.4f} (target 0.95+-0.02: {'ok' if ok_c else 'miss'}), mean |upper diff| "
              f"{mean_diff:.4f} <= {3 * width:.4f}: {'ok' if ok_d else 'miss'}")
    record("7", ok_c and ok_d, detail)
    assert ok_c and ok_d, detail


def test_criterion_8_grid_refinement_convergence():
    model = NormalMeanModel(n=800, known_sigma=False, delta=0.5)
    parts, ok = [], True
    for s in range(3):
        data = model.generate(np.random.default_rng([SEED, 8, s]))
        th = model.estimate(data)
        region = model.neighborhood(data, th)
        frozen = Streams(s).freeze()

        def max_quantile(U):
            td = build_try_design(th, region, grid_design(U, 2))
            return float(core.nb_ci(model, data, region, td, 2000, frozen, side="upper").upper_quantiles.max())

        seq = [max_quantile(U) for U in (1, 2, 4, 8)]
        fine = max_quantile(64)
        mono = all(b >= a for a, b in zip(seq, seq[1:]))
        close = abs(seq[-1] - fine) <= 1e-3
        ok &= mono and close
        parts.append(f"data {s}: " + ", ".join(f"{v:.5f}" for v in seq) + f" -> U=64 {fine:.5f}")
    detail = "; ".join(parts)
    record("8", ok, detail)
    assert ok, detail


def test_criterion_9_oracle_suites():
    from test_core import scan_weighted_quantile
    from test_models import brute_force, nested_grid_mps

    from lotci.models.hdreg import lasso_fit, lasso_objective, nnlasso_fit
    from lotci.models.weibull import mps_estimate, mps_objective, simulate_weibull

    gaps = []
    for seed in range(3):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(12, 3))
        y = X @ np.array([1.0, -0.7, 0.3]) + 0.5 * rng.normal(size=12)
        for fit, nonneg in ((lasso_fit, False), (nnlasso_fit, True)):
            _, val = brute_force(X, y, 2.0, nonneg)
            gaps.append(lasso_objective(X, y, fit(X, y, 2.0), 2.0) - val)
    ok_lasso = max(gaps) <= 1e-4

    mps_margin = []
    for seed in range(2):
        xs = np.sort(simulate_weibull(2.5, 2.5, 1.0, 20, 1, np.random.default_rng(seed))[0])
        params, _ = mps_estimate(xs)
        mps_margin.append(mps_objective(*params, xs) - nested_grid_mps(xs))
    ok_mps = min(mps_margin) >= -1e-6

    model = NormalMeanModel(n=25, sigma=1.0, known_sigma=True)
    batch = model.simulate(0.3, model.estimate(0.3), 20000, Streams(9).generator(0))
    obj = core.ImportanceObjective(model, 0.3, model.estimate(0.3), batch, 0.3)
    z = []
    for mu in (-0.1, 0.0, 0.2, 0.3, 0.45):
        terms = obj.indicator * obj.weights(np.array([mu]))
        se = terms.std(ddof=1) / math.sqrt(len(terms))
        z.append(abs(obj(np.array([mu])) - model.exact_tail(mu, 0.3)) / max(se, 1e-300))
    ok_is = max(z) <= 3

    rng = np.random.default_rng(SEED)
    mism = 0
    for _ in range(300):
        m = int(rng.integers(1, 40))
        v, w, g = rng.normal(size=m).round(1), rng.exponential(size=m), float(rng.uniform(0.01, 0.99))
        mism += core.weighted_quantile(v, w, g, m) != scan_weighted_quantile(list(v), list(w), g, m)
    ok_wq = mism == 0

    ok = ok_lasso and ok_mps and ok_is and ok_wq
    detail = (f"lasso/nnlasso max gap {max(gaps):.2e}, MPS margin over grid {min(mps_margin):.2e}, "
              f"IS max |z| {max(z):.2f}, weighted quantile mismatches {mism}/300")
    record("9", ok, detail)
    assert ok, detail


def test_criterion_10_thread_determinism():
    cfgs = [
        dict(model="multinomial", model_config={"n": 30}, kind="ci", reps=24, M=300, seed=SEED,
             methods=[{"name": "bootstrap"}, {"name": "loci-nb"}, {"name": "m-out-of-n"}]),
        dict(model="hdreg", model_config={"n": 20, "p": 40}, kind="test", reps=16, M=200, seed=SEED, alpha=[0.05, 0.1],
             methods=[{"name": "bootstrap"}, {"name": "lot-is-design"}]),
        dict(model="weibull", model_config={}, kind="ci", reps=8, M=100, seed=SEED,
             methods=[{"name": "bootstrap"}, {"name": "loci-nb"}]),
    ]
    parts, ok = [], True
    for d in cfgs:
        cfg = ExperimentConfig.from_dict(d)
        one = run_experiment(cfg, threads=1).to_csv().encode()
        again = run_experiment(cfg, threads=1).to_csv().encode()
        eight = run_experiment(cfg, threads=8).to_csv().encode()
        same = one == again == eight
        ok &= same
        parts.append(f"{d['model']} {'identical' if same else 'differs'}")
    detail = ", ".join(parts)
    record("10", ok, detail)
    assert ok, detail


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-v", "-s"]))
