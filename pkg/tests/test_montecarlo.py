import math

import numpy as np
import pytest

from covsel.asymptotics import second_moment_matrix
from covsel.errors import ConfigError
from covsel.montecarlo import (
    CellDecisions,
    SimConfig,
    TRUTH_ORDER,
    confusion_table,
    generate_instance,
    mcnemar,
    oracle_hyper,
    render_confusion_markdown,
    run_cell,
)
from covsel.priors import WishartHyper


class TestMcNemar:
    def test_exact_two_sided_binomial(self):
        res = mcnemar(5, 15)
        assert res.method == "exact"
        assert res.p_value == pytest.approx(0.04139, abs=1e-4)

    def test_symmetric_large_counts(self):
        res = mcnemar(50, 50)
        assert res.method == "continuity-corrected"
        assert res.statistic == 0.0
        assert res.p_value == 1.0

    def test_forced_chi_square(self):
        res = mcnemar(5, 15, method="chi2")
        assert res.statistic == pytest.approx(4.05, abs=1e-12)
        assert res.p_value == pytest.approx(0.0442, abs=1e-3)

    def test_no_discordance(self):
        res = mcnemar(0, 0)
        assert res.p_value == 1.0

    def test_clamped_statistic(self):
        assert mcnemar(13, 12, method="chi2").statistic == 0.0

    def test_switchover_at_25(self):
        assert mcnemar(12, 12).method == "exact"
        assert mcnemar(13, 12).method == "continuity-corrected"

    def test_negative_counts_rejected(self):
        with pytest.raises(ConfigError):
            mcnemar(-1, 2)


class TestOracleHyper:
    def test_matched_protocol_shapes(self):
        a = oracle_hyper("A", 5, 2.0)
        d = oracle_hyper("D", 5, 2.0)
        c = oracle_hyper("C", 5, 2.0)
        assert (a.alpha, d.alpha, c.alpha) == (4.0, 2.0, 6.0)
        np.testing.assert_allclose(a.rate, 0.5 * np.eye(5))
        np.testing.assert_allclose(d.rate, np.full(5, 0.5))
        assert c.rate == pytest.approx(2.5)

    def test_invalid_beta(self):
        with pytest.raises(ConfigError):
            oracle_hyper("A", 5, 0.0)


class TestGenerateInstance:
    def test_deterministic_given_stream(self):
        h = oracle_hyper("A", 3, 2.0)
        d1 = generate_instance(h, 4, np.random.default_rng(42))
        d2 = generate_instance(h, 4, np.random.default_rng(42))
        np.testing.assert_array_equal(d1.rows, d2.rows)

    def test_iso_truth_uncorrelated(self):
        rng = np.random.default_rng(0)
        h = oracle_hyper("C", 4, 2.0)
        pooled = np.zeros((4, 4))
        reps = 4000
        sq = []
        for _ in range(reps):
            x = generate_instance(h, 1, rng).rows[0]
            pooled += np.outer(x, x)
            sq.append(np.outer(x, x))
        pooled /= reps
        se = np.std(sq, axis=0, ddof=1) / math.sqrt(reps)
        off = ~np.eye(4, dtype=bool)
        assert np.all(np.abs(pooled[off]) < 3 * se[off])

    def test_pooled_second_moment_full_truth(self):
        rng = np.random.default_rng(1)
        h = WishartHyper(4.0, np.array([[1.0, 0.3], [0.3, 2.0]]))
        reps = 30_000
        acc = np.empty((reps, 2, 2))
        for i in range(reps):
            x = generate_instance(h, 1, rng).rows[0]
            acc[i] = np.outer(x, x)
        mean = acc.mean(axis=0)
        se = acc.std(axis=0, ddof=1) / math.sqrt(reps)
        assert np.all(np.abs(mean - second_moment_matrix(h)) < 3 * se)


class TestRunCell:
    def test_single_rep_deterministic(self):
        config = SimConfig(d=3, n_values=(5,), reps=1, seed=7, criteria=("evidence",))
        cell1 = run_cell(config, "C", 5)
        cell2 = run_cell(config, "C", 5)
        assert cell1.selected == cell2.selected
        assert cell1.selected["evidence"][0] in TRUTH_ORDER

    def test_full_determinism_across_runs(self):
        config = SimConfig(d=3, n_values=(5,), reps=30, seed=11)
        t1 = confusion_table([run_cell(config, t, 5) for t in TRUTH_ORDER])
        t2 = confusion_table([run_cell(config, t, 5) for t in TRUTH_ORDER])
        for lab in t1.matrices:
            np.testing.assert_array_equal(t1.matrices[lab].counts, t2.matrices[lab].counts)

    def test_d1_coincident_models_select_identically(self):
        config = SimConfig(d=1, n_values=(6,), reps=50, seed=3)
        for truth in TRUTH_ORDER:
            cell = run_cell(config, truth, 6)
            assert cell.selected["evidence"] == cell.selected["pcbic"]
            assert set(cell.selected["evidence"]) == {"C"}

    def test_eb_scheme_requires_n_at_least_d(self):
        with pytest.raises(ConfigError):
            SimConfig(d=5, n_values=(3,), scheme="empirical-bayes")

    def test_row_sums(self):
        config = SimConfig(d=2, n_values=(4,), reps=40, seed=5)
        cells = [run_cell(config, t, 4) for t in TRUTH_ORDER]
        table = confusion_table(cells)
        for mat in table.matrices.values():
            np.testing.assert_array_equal(mat.counts.sum(axis=1), [40, 40, 40])
            assert mat.trace == np.trace(mat.counts)


class TestConfusionTable:
    def _fake_cells(self, selections_by_label):
        cells = []
        reps = len(next(iter(selections_by_label["A"].values())))
        for truth in TRUTH_ORDER:
            cells.append(
                CellDecisions(
                    truth=truth,
                    n=5,
                    beta_inverse=2.0,
                    scheme="oracle",
                    reps=reps,
                    selected=selections_by_label[truth],
                    failures=0,
                )
            )
        return cells

    def test_identical_criteria_not_significant(self):
        same = ["A", "C", "C", "D"]
        cells = self._fake_cells(
            {t: {"evidence": list(same), "pcbic": list(same)} for t in TRUTH_ORDER}
        )
        table = confusion_table(cells)
        assert all(c.p_value == 1.0 for c in table.comparisons)

    def test_trace_is_diagonal_sum(self):
        cells = self._fake_cells(
            {
                "A": {"evidence": ["A", "A", "C", "D"]},
                "D": {"evidence": ["D", "C", "C", "D"]},
                "C": {"evidence": ["C", "C", "C", "C"]},
            }
        )
        table = confusion_table(cells)
        mat = table.matrices["evidence"]
        assert mat.trace == 2 + 2 + 4

    def test_incomplete_sweep_rejected(self):
        cells = self._fake_cells(
            {t: {"evidence": ["A"]} for t in TRUTH_ORDER}
        )[:2]
        with pytest.raises(ConfigError):
            confusion_table(cells)

    def test_markdown_renders(self):
        cells = self._fake_cells(
            {t: {"evidence": ["C", "C", "D", "A"]} for t in TRUTH_ORDER}
        )
        text = render_confusion_markdown(confusion_table(cells))
        assert "evidence" in text and "| A |" in text


@pytest.mark.slow
class TestSchemeBehavior:
    @pytest.mark.xfail(
        strict=False,
        reason="soft expectation from reported simulations; the exact evidence "
        "under the mclust regularization does select D a nontrivial fraction "
        "of the time at these settings (see notes in tests/test_acceptance.py "
        "on the simulation-table discrepancy)",
    )
    def test_mclust_rarely_selects_diagonal(self):
        # reported behavior of the mclust regularization at these settings;
        # a soft expectation only
        config = SimConfig(
            d=5, n_values=(10,), reps=200, seed=13, scheme="vs-mclust"
        )
        cell = run_cell(config, "D", 10)
        rate = np.mean([s == "D" for s in cell.selected["mc-evidence"]])
        assert rate <= 0.01

    def test_vs_mclust_pairs_share_instances(self):
        # run the eb scheme alone with the same seed: its evidence decisions
        # must match the vs-mclust run's "evidence" label replicate by
        # replicate, because generation consumes the same draws
        base = SimConfig(d=5, n_values=(6,), reps=50, seed=17, scheme="vs-mclust")
        eb = SimConfig(
            d=5, n_values=(6,), reps=50, seed=17,
            scheme="empirical-bayes", criteria=("evidence",),
        )
        cell_both = run_cell(base, "A", 6)
        cell_eb = run_cell(eb, "A", 6)
        assert cell_both.selected["evidence"] == cell_eb.selected["evidence"]
