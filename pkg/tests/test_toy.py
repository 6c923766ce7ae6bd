"""The one-state worked example, pinned down to exact fractions.

With pi = [0.8, 0.1, 0.1] and q = [2, 1, 100]:
    ||pi||^2            = 0.66
    score norms^2       = [0.06, 1.46, 1.46]
    x                   = [0.048, 0.146, 0.146] / 0.34 = [12/85, 73/170, 73/170]
    optimal baseline    = (24 + 73 + 7300) / 170 = 7421/170
Everything below hangs off those fractions, so the expected values are not
computed by the code under test.
"""
from fractions import Fraction

import numpy as np

from mapgvar import run_toy
from mapgvar.toy import REFERENCE, toy_game, toy_policy

X_FRACTIONS = (Fraction(12, 85), Fraction(73, 170), Fraction(73, 170))
B_STAR = Fraction(7421, 170)

# local variance at baseline b, from the closed-form row sums:
#   Var(b) = sum_a pi_a (q_a - b)^2 n_a - (sum_a pi_a (q_a - b) n_a ... )
# easier exactly: Var(b) = Var(b*) + (b - b*)^2 * 0.34 with
#   Var(b*) = sum pi q^2 n - 2 b* sum pi q n + b*^2 sum pi n - mean^2
# the mean vector contributes ||sum_a pi_a sig_a g_a||^2, which is
# baseline-invariant; compute both pieces with Fractions.
PI = (Fraction(8, 10), Fraction(1, 10), Fraction(1, 10))
Q = (Fraction(2), Fraction(1), Fraction(100))
NORM_SQ = (Fraction(6, 100), Fraction(146, 100), Fraction(146, 100))


def exact_local_variance(b: Fraction) -> Fraction:
    # grad vectors g_a = e_a - pi; mean vector m = sum_a pi_a (q_a - b) g_a
    # second moment = sum_a pi_a (q_a - b)^2 ||g_a||^2
    second = sum(p * (q - b) ** 2 * n for p, q, n in zip(PI, Q, NORM_SQ))
    m = [
        sum(
            PI[a] * (Q[a] - b) * ((1 if j == a else 0) - PI[j])
            for a in range(3)
        )
        for j in range(3)
    ]
    return second - sum(c * c for c in m)


VAR_NONE = exact_local_variance(Fraction(0))
VAR_COMA = exact_local_variance(Fraction(117, 10))
VAR_OB = exact_local_variance(B_STAR)
VAR_OB_REPLAY = exact_local_variance(Fraction(4371, 100))


def test_exact_fraction_pins():
    # the frozen decimals the suite relies on, derived once from fractions
    assert float(VAR_NONE) == 1321.0066
    assert f"{float(VAR_COMA):.3f}" == "1020.246"
    assert f"{float(VAR_OB):.3f}" == "673.110"
    assert f"{float(VAR_OB_REPLAY):.3f}" == "673.111"
    assert f"{float(B_STAR):.2f}" == "43.65"
    # the published 43.71 is what the 2-d.p.-rounded weights give
    x_rounded = [round(float(x), 2) for x in X_FRACTIONS]
    assert abs(sum(w * float(q) for w, q in zip(x_rounded, Q)) - 43.71) < 1e-12


def test_game_and_policy_fixtures():
    game = toy_game()
    assert game.n_agents == 1
    assert game.gamma == 0.0
    np.testing.assert_array_equal(game.reward[0], [2.0, 1.0, 100.0])
    policy = toy_policy()
    np.testing.assert_allclose(policy.probs(0, 0), [0.8, 0.1, 0.1], atol=1e-15)


def test_run_toy_passes_all_golden_checks():
    report = run_toy()
    assert report.passed, [c for c in report.checks if not c["passed"]]


def test_run_toy_values_match_the_fractions():
    report = run_toy()
    np.testing.assert_allclose(
        report.x, [float(x) for x in X_FRACTIONS], atol=1e-12
    )
    assert abs(report.b_star_exact - float(B_STAR)) < 1e-12
    assert abs(report.coma_b - 11.7) < 1e-12
    np.testing.assert_allclose(report.advantage, [-9.7, -10.7, 88.3], atol=1e-12)
    assert abs(report.variances["none"] - float(VAR_NONE)) < 1e-9
    assert abs(report.variances["coma"] - float(VAR_COMA)) < 1e-9
    assert abs(report.variances["ob"] - float(VAR_OB)) < 1e-9
    assert abs(report.ob_replay_variance - float(VAR_OB_REPLAY)) < 1e-9
    # both computation routes agree
    for name in ("none", "coma", "ob"):
        assert abs(report.variances[name] - report.variances_direct[name]) < 1e-9


def test_run_toy_rounded_pipeline():
    report = run_toy()
    np.testing.assert_allclose(report.x_rounded, [0.14, 0.43, 0.43], atol=1e-12)
    assert f"{report.b_star_rounded:.2f}" == "43.71"
    np.testing.assert_allclose(
        report.x_values_rounded, [-41.71, -42.71, 56.29], atol=1e-12
    )


def test_run_toy_documents_the_reference_discrepancies():
    report = run_toy()
    assert len(report.notes) == 2
    text = report.render_text()
    assert "1015.247" in text  # the reference figure is shown
    assert "1020.246" in text  # alongside the exact one
    assert "673.116" in text
    assert "673.111" in text
    assert report.render_text() == run_toy().render_text()  # stable output


def test_reference_table_is_what_the_suite_expects():
    assert REFERENCE["pi"] == (0.8, 0.1, 0.1)
    assert REFERENCE["coma_baseline"] == 11.7
    assert REFERENCE["b_star"] == 43.71
    assert REFERENCE["variance_strings"]["none"] == "1321.007"
