"""Acceptance suite: one test per exit criterion, each printing a
PASS/FAIL line (run with ``pytest -s`` to see them as they complete)."""

import time

import numpy as np
import pytest
from PIL import Image

from anomkit.advantage import (
    compute_group_advantages,
    final_advantage,
    group_normalize,
    orthogonalize,
)
from anomkit.analysis import (
    AnalysisParams,
    GradientResult,
    gradient_exceedances,
    ksigma_envelope,
    matrix_profile,
    period_band,
    sliding_period_scan,
    smoothed_gradient,
)
from anomkit.core import AnomalyClass
from anomkit.embedding import hash_embedding, tokenize
from anomkit.metrics import affinity_scores, parse_response
from anomkit.render import save_plot
from anomkit.synth import (
    BaseSignalConfig,
    DEFAULT_INJECTIONS,
    generate_base,
    generate_dataset,
    inject_anomaly,
    mix_seed,
    uniform_mix,
)
from anomkit.traces import audit_evidence, generate_trace
from anomkit.transport import sinkhorn
from oracles import brute_matrix_profile, exact_ot_distance
from test_render import color_simplex_fraction


def report(number: int, ok: bool, detail: str) -> None:
    print(f"\nACCEPTANCE {number}: {'PASS' if ok else 'FAIL'} - {detail}")


def overlaps(predicted, truth) -> bool:
    return any(p.start <= g.end and g.start <= p.end for p in predicted for g in truth)


def test_criterion_1_sinkhorn_vs_exact_ot():
    rng = np.random.default_rng(1001)
    start = time.monotonic()
    worst = 0.0
    for _ in range(200):
        n, m = int(rng.integers(1, 7)), int(rng.integers(1, 7))
        costs = rng.random((n, m)) * 2.0
        u = rng.random(n) + 0.05
        u /= u.sum()
        v = rng.random(m) + 0.05
        v /= v.sum()
        approx = sinkhorn(costs, u, v, reg=0.005, max_iter=20000, tol=1e-6)
        worst = max(worst, abs(approx.distance - exact_ot_distance(costs, u, v)))
    elapsed = time.monotonic() - start
    anti_diag = sinkhorn(
        np.array([[0.0, 1.0], [1.0, 0.0]]),
        np.array([0.7, 0.3]),
        np.array([0.4, 0.6]),
        reg=0.005,
        max_iter=20000,
    )
    two_by_two_err = abs(anti_diag.distance - 0.3)
    ok = worst <= 1e-2 and elapsed < 30.0 and two_by_two_err <= 1e-2
    report(
        1,
        ok,
        f"max |W_sinkhorn - W_exact| = {worst:.2e} over 200 instances in {elapsed:.1f}s; "
        f"2x2 anti-diagonal error {two_by_two_err:.2e}",
    )
    assert worst <= 1e-2
    assert elapsed < 30.0
    assert two_by_two_err <= 1e-2


def test_criterion_2_orthogonality():
    rng = np.random.default_rng(1002)
    worst_dot = 0.0
    worst_proj = 0.0
    for _ in range(1000):
        a_main = group_normalize(rng.random(5), eps=0.0)
        a_tsr = group_normalize(rng.random(5), eps=0.0)
        a_perp = orthogonalize(a_tsr, a_main, eps=0.0)
        bound = 1e-9 * float(np.linalg.norm(a_tsr)) * float(np.linalg.norm(a_main))
        dot = abs(float(np.dot(a_perp, a_main)))
        worst_dot = max(worst_dot, dot - bound)
        for alpha in (0.1, 0.3, 0.7):
            final = final_advantage(a_main, a_perp, alpha)
            projection = (np.dot(final, a_main) / np.dot(a_main, a_main)) * a_main
            worst_proj = max(worst_proj, float(np.max(np.abs(projection - a_main))))
    ok = worst_dot <= 0.0 and worst_proj <= 1e-9
    report(
        2,
        ok,
        f"orthogonality slack {worst_dot:.2e} (<=0 means inside bound); "
        f"max projection deviation {worst_proj:.2e} over 1000 groups x 3 alphas",
    )
    assert worst_dot <= 0.0
    assert worst_proj <= 1e-9


def test_criterion_3_group_normalization():
    rng = np.random.default_rng(1003)
    worst_mean = 0.0
    worst_std = 0.0
    count = 0
    while count < 1000:
        values = rng.random(5)
        if float(np.std(values)) <= 1e-6:
            continue
        count += 1
        normalized = group_normalize(values, eps=0.0)
        worst_mean = max(worst_mean, abs(float(normalized.mean())))
        worst_std = max(worst_std, abs(float(normalized.std()) - 1.0))
    equal = group_normalize([0.7] * 5)  # default eps guard
    all_zero = bool(np.all(equal == 0.0))
    ok = worst_mean <= 1e-12 and worst_std <= 1e-9 and all_zero
    report(
        3,
        ok,
        f"max |mean| = {worst_mean:.2e}, max |std-1| = {worst_std:.2e} over 1000 vectors; "
        f"all-equal rewards -> all-zero advantages: {all_zero}",
    )
    assert worst_mean <= 1e-12
    assert worst_std <= 1e-9
    assert all_zero


def test_criterion_4_matrix_profile_exactness():
    rng = np.random.default_rng(1004)
    worst = 0.0
    for case in range(50):
        length = int(rng.integers(40, 129))
        series = rng.standard_normal(length)
        if case % 5 == 0:
            # exercise the zero-variance convention with a constant stretch
            lo = int(rng.integers(0, length - 20))
            series[lo : lo + 20] = series[lo]
        m = 8 if case % 2 == 0 else 16
        if length < 2 * m:
            m = 8
        mine = matrix_profile(series, m).distances
        oracle, _ = brute_matrix_profile(series, m)
        worst = max(worst, float(np.max(np.abs(mine - oracle))))
    ok = worst <= 1e-9
    report(4, ok, f"max |profile - bruteforce| = {worst:.2e} over 50 random series")
    assert worst <= 1e-9


def test_criterion_5_reported_value_reproductions():
    series = np.array([0.002 - 0.098, 0.002 + 0.098])  # mean 0.002, pop std 0.098
    env = ksigma_envelope(series, k=3.0)
    env_ok = abs(env.lower - -0.292) <= 5e-4 and abs(env.upper - 0.296) <= 5e-4

    lo, hi = period_band(50.2, 4.8, 3.0)
    band_ok = abs(lo - 35.8) <= 1e-9 and abs(hi - 64.6) <= 1e-9

    grad = GradientResult(np.zeros(9), mean=-0.0002, std=0.0078, window=21)
    thr = gradient_exceedances(grad, 3.0).threshold
    thr_ok = abs(thr - 0.0234) <= 1e-12

    ok = env_ok and band_ok and thr_ok
    report(
        5,
        ok,
        f"envelope [{env.lower:.3f}, {env.upper:.3f}]; band [{lo:.1f}, {hi:.1f}]; "
        f"gradient threshold +-{thr:.4f}",
    )
    assert env_ok and band_ok and thr_ok


def test_criterion_6_trace_faithfulness_500():
    params = AnalysisParams()
    instances = generate_dataset(500, uniform_mix(), seed=60)
    start = time.monotonic()
    mismatches = 0
    worst_dev = 0.0
    for inst in instances:
        trace = generate_trace(inst, params)
        if (
            trace.conclusion_class is not inst.anomaly_class
            or trace.conclusion_intervals != inst.intervals
        ):
            mismatches += 1
        worst_dev = max(worst_dev, audit_evidence(inst, trace.evidence, params))
    elapsed = time.monotonic() - start
    ok = mismatches == 0 and worst_dev <= 1e-6 and elapsed < 120.0
    report(
        6,
        ok,
        f"500 traces: {mismatches} conclusion mismatches, max evidence deviation "
        f"{worst_dev:.2e}, {elapsed:.1f}s",
    )
    assert mismatches == 0
    assert worst_dev <= 1e-6
    assert elapsed < 120.0


def test_criterion_7_detector_efficacy():
    base_cfg = BaseSignalConfig()
    k = 3.0

    f1s = []
    for i in range(200):
        base = generate_base(base_cfg, mix_seed(71, i))
        inst = inject_anomaly(base, DEFAULT_INJECTIONS[AnomalyClass.GLOBAL_POINT], mix_seed(72, i))
        env = ksigma_envelope(inst.values, k)
        scores = affinity_scores(
            [(iv.start, iv.end) for iv in env.intervals],
            [(iv.start, iv.end) for iv in inst.intervals],
            inst.length,
            10,
        )
        f1s.append(scores.f1)
    global_f1 = float(np.mean(f1s))

    seasonal_hits = 0
    for i in range(200):
        base = generate_base(base_cfg, mix_seed(73, i))
        inst = inject_anomaly(base, DEFAULT_INJECTIONS[AnomalyClass.SEASONAL], mix_seed(74, i))
        scan = sliding_period_scan(inst.values, 120, 10, 3.0)
        seasonal_hits += overlaps(scan.deviating, inst.intervals)

    trend_hits = 0
    for i in range(200):
        base = generate_base(base_cfg, mix_seed(75, i))
        inst = inject_anomaly(base, DEFAULT_INJECTIONS[AnomalyClass.TREND], mix_seed(76, i))
        grad = smoothed_gradient(inst.values, 21)
        exc = gradient_exceedances(grad, k)
        trend_hits += overlaps(exc.intervals, inst.intervals)

    ok = global_f1 >= 0.8 and seasonal_hits >= 160 and trend_hits >= 160
    report(
        7,
        ok,
        f"global-point envelope F1 {global_f1:.3f} (>=0.8); seasonal overlap "
        f"{seasonal_hits}/200; trend overlap {trend_hits}/200 (>=160 each)",
    )
    assert global_f1 >= 0.8
    assert seasonal_hits >= 160
    assert trend_hits >= 160


def test_criterion_8_affinity_hand_case_and_properties():
    scores = affinity_scores([(6, 6)], [(4, 5)], 10, 2)
    hand_ok = (
        scores.precision == pytest.approx(0.5, abs=1e-12)
        and scores.recall == pytest.approx(0.25, abs=1e-12)
        and scores.f1 == pytest.approx(1 / 3, abs=1e-12)
    )

    rng = np.random.default_rng(1008)
    sym_worst = 0.0
    mono_violation = 0.0
    for _ in range(1000):
        def draw():
            out = []
            for _ in range(int(rng.integers(1, 4))):
                a = int(rng.integers(0, 90))
                out.append((a, a + int(rng.integers(0, 10))))
            return out

        a, b = draw(), draw()
        w = int(rng.integers(1, 10))
        sym_worst = max(
            sym_worst,
            abs(
                affinity_scores(a, b, 100, w).precision
                - affinity_scores(b, a, 100, w).recall
            ),
        )
        small = affinity_scores(a, b, 100, w)
        large = affinity_scores(a, b, 100, w + 2)
        mono_violation = max(
            mono_violation,
            small.precision - large.precision,
            small.recall - large.recall,
        )
    ok = hand_ok and sym_worst <= 1e-12 and mono_violation <= 1e-12
    report(
        8,
        ok,
        f"hand case (0.5, 0.25, 1/3) exact: {hand_ok}; max symmetry gap {sym_worst:.2e}; "
        f"max monotonicity violation {mono_violation:.2e} over 1000 pairs",
    )
    assert hand_ok
    assert sym_worst <= 1e-12
    assert mono_violation <= 1e-12


def test_criterion_9_advantage_end_to_end():
    instances = generate_dataset(1, {AnomalyClass.GLOBAL_POINT: 1.0}, seed=90)
    inst = instances[0]
    expert_trace = generate_trace(inst, AnalysisParams())
    expert_tokens = tokenize(expert_trace.flat_text)
    answer = [[iv.start, iv.end] for iv in inst.intervals]
    responses = [
        f"<think>spikes</think><answer>{answer}</answer><class>global point</class>",
        expert_trace.flat_text,  # token sequence identical to the expert trace
        "<think>steady</think><answer>[]</answer><class>normal</class>",
        "<think>cycle change</think><answer>[[10, 40]]</answer><class>seasonal</class>",
        "unstructured rambling about the plot",
    ]
    expert = hash_embedding(expert_tokens)
    embeddings = [hash_embedding(tokenize(r) or ["<empty>"]) for r in responses]
    group = compute_group_advantages(responses, inst, expert, embeddings)
    top = int(np.argmax(group.reasoning_rewards))
    others = np.delete(group.reasoning_rewards, top)
    strict_max = top == 1 and group.reasoning_rewards[top] > float(np.max(others))

    from anomkit.advantage import AdvantageConfig

    group_zero = compute_group_advantages(
        responses, inst, expert, embeddings, AdvantageConfig(alpha=0.0)
    )
    alpha_zero_exact = bool(np.array_equal(group_zero.a_final, group_zero.a_main))
    ok = strict_max and alpha_zero_exact
    report(
        9,
        ok,
        f"expert-matching response r_TsR {group.reasoning_rewards[top]:.4f} vs next "
        f"{float(np.max(others)):.4f} (strict max: {strict_max}); "
        f"alpha=0 gives a_final == a_main exactly: {alpha_zero_exact}",
    )
    assert strict_max
    assert alpha_zero_exact


RESPONSE_CASES = [
    # trend case (truth [[800, 850]])
    (
        "<think>\nThe plot shows a wave-like pattern whose amplitude grows slightly "
        "after the 800 mark. The global structure stays smooth, with no sharp dips, "
        "but near timestep 850 the local pattern starts diverging from the "
        "surrounding cycles, which points to a mild trend change rather than a "
        "sharp outlier.\n</think>\n\n<answer>\n[[800, 900]]\n</answer>\n\n"
        "<class>\ntrend\n</class>",
        AnomalyClass.TREND,
        ((800, 900),),
    ),
    # contextual point case (truth [[200, 231], [622, 673]])
    (
        "<think>\nTwo stretches deviate from their neighborhoods: one between "
        "roughly 200 and 250, another around 600 to 700. Both rise sharply against "
        "the smoother baseline yet stay inside the overall value range, which "
        "matches contextual point behavior.\n</think>\n\n"
        "<answer>\n[[200, 250], [600, 700]]\n</answer>\n\n<class>\ncontextual point\n</class>",
        AnomalyClass.CONTEXTUAL_POINT,
        ((200, 250), (600, 700)),
    ),
    # global point case (truth [[358, 380], [910, 931]])
    (
        "<think>\nSeveral sharp excursions break the band: one near 350, another "
        "around 880, and a third close to 900. Each spike escapes the local range "
        "and snaps back, so these are global point anomalies.\n</think>\n\n"
        "<answer>\n[[350, 450], [880, 950]]\n</answer>\n\n<class>\nglobal point\n</class>",
        AnomalyClass.GLOBAL_POINT,
        ((350, 450), (880, 950)),
    ),
    # seasonal case (truth [[653, 676], [811, 846]])
    (
        "<think>\nThe early section keeps a regular sinusoidal rhythm. Around the "
        "650th timestep the frequency distorts with irregular oscillations, and a "
        "second disturbance appears near the 850th mark, so the cycle length "
        "itself changes.\n</think>\n\n"
        "<answer>\n[[580, 700], [850, 900]]\n</answer>\n\n<class>\nseasonal\n</class>",
        AnomalyClass.SEASONAL,
        ((580, 700), (850, 900)),
    ),
    # normal/failure case (truth [[998, 1000]] missed)
    (
        "<think>\nNo anomalies detected in the plot.\n</think>\n\n"
        "<answer>\n[]\n</answer>\n\n<class>\nnormal\n</class>",
        AnomalyClass.NORMAL,
        (),
    ),
]


def test_criterion_10_response_parsing_cases():
    failures = []
    for idx, (text, expected_class, expected_intervals) in enumerate(RESPONSE_CASES):
        record = parse_response(text)
        if record.anomaly_class is not expected_class or record.intervals != expected_intervals:
            failures.append(idx)
    ok = not failures
    report(
        10,
        ok,
        f"{len(RESPONSE_CASES)} tagged responses parsed to their stated classes and "
        f"interval lists (failures: {failures})",
    )
    assert not failures


def test_criterion_11_rendering(tmp_path):
    instances = generate_dataset(5, uniform_mix(), seed=110)
    sizes_ok = True
    fills_ok = True
    for inst in instances:
        path = save_plot(inst.values, tmp_path / f"{inst.instance_id}.png")
        with Image.open(path) as img:
            sizes_ok = sizes_ok and img.size == (805, 124)
        fills_ok = fills_ok and color_simplex_fraction(path) == 1.0
    report(
        11,
        sizes_ok and fills_ok,
        f"5 plots at exactly 805x124: {sizes_ok}; all pixels within the "
        f"white/black/line-color blend simplex (no fill hues): {fills_ok}",
    )
    assert sizes_ok
    assert fills_ok
