import json

import numpy as np
import pytest

from tabshap.bench import (
    ConvergenceRow,
    dense_tree_fixture,
    masking_mlp_fixture,
    run_convergence,
    run_masking,
    sparse_tree_fixture,
    summarize_percentiles,
    write_convergence,
    write_masking,
)
from tabshap.core import (
    RestrictedGame,
    TabularGame,
    dummy_features,
    enumerate_coalitions,
)
from tabshap.errors import ConfigError
from tabshap.exact import shapley_exact
from tabshap.games import BackgroundData, MaskedGame, MlpLayer, MlpModel, predict

TOL = 1e-9


def make_rows(method, budget, values):
    return [
        ConvergenceRow(method, budget, i, 0, 0, (float(v),)) for i, v in enumerate(values)
    ]


class TestSummarizePercentiles:
    def test_constant_replicates(self):
        rows = make_rows("kernel", 8, [2.5] * 10)
        (summary,) = summarize_percentiles(rows)
        assert summary[3:] == (2.5, 2.5, 2.5)

    def test_linear_interpolation_convention(self):
        rows = make_rows("kernel", 8, range(1, 101))
        (summary,) = summarize_percentiles(rows, probs=(0.1, 0.5, 0.9))
        p10 = summary[3]
        assert p10 == pytest.approx(10.9)

    def test_two_value_median(self):
        rows = make_rows("kernel", 8, [0.0, 10.0])
        (summary,) = summarize_percentiles(rows)
        assert summary[4] == 5.0

    def test_small_group_rejected(self):
        rows = make_rows("kernel", 8, [1.0])
        with pytest.raises(ConfigError):
            summarize_percentiles(rows)


class TestFixtures:
    def test_dense_tree_uses_all_features(self):
        tree, instance, background = dense_tree_fixture(0)
        assert tree.used_features() == tuple(range(10))
        assert instance.shape == (10,)
        assert background.rows.shape == (50, 10)

    def test_sparse_tree_reads_only_active(self):
        tree, instance, background, active = sparse_tree_fixture(0)
        assert len(active) == 3
        assert set(tree.used_features()) == set(active)
        assert tree.n_features == 30

    def test_fixtures_are_seed_deterministic(self):
        a = dense_tree_fixture(7)
        b = dense_tree_fixture(7)
        assert np.array_equal(a[0].threshold, b[0].threshold)
        assert np.array_equal(a[1], b[1])

    def test_sparse_inactive_features_are_dummies(self):
        tree, instance, background, active = sparse_tree_fixture(0)
        game = MaskedGame(tree, instance, background, "mean_imputation")
        sub = RestrictedGame(game, list(active) + [min(set(range(30)) - set(active))])
        # The appended inactive feature must be a dummy of the induced game.
        table = [sub.value(c) for c in enumerate_coalitions(4)]
        assert 3 in dummy_features(TabularGame(table))


class TestRunConvergence:
    def test_shapes_and_determinism(self):
        kwargs = dict(
            methods=("kernel", "sampling"), budgets=(24, 64), replicates=4, seed=5
        )
        a = run_convergence("dense_tree", **kwargs)
        b = run_convergence("dense_tree", **kwargs)
        assert len(a.rows) == 2 * 2 * 4
        assert a.rows == b.rows
        assert a.summary == b.summary
        assert len(a.summary) == 2 * 2 * 10

    def test_full_budget_replicates_match_exact(self):
        result = run_convergence(
            "dense_tree", methods=("kernel",), budgets=((1 << 10) - 2,), replicates=2
        )
        for row in result.rows:
            assert np.abs(np.array(row.phi) - result.exact.attributions).max() <= 1e-6

    def test_sparse_exact_reference_matches_restriction(self):
        result = run_convergence(
            "sparse_tree", methods=("kernel",), budgets=(128,), replicates=2
        )
        tree, instance, background, active = sparse_tree_fixture(0)
        inactive = sorted(set(range(30)) - set(active))
        assert np.abs(result.exact.attributions[inactive]).max() == 0.0
        game = MaskedGame(tree, instance, background, "independence")
        sub = shapley_exact(RestrictedGame(game, active))
        assert np.abs(
            result.exact.attributions[list(active)] - sub.attributions
        ).max() <= TOL

    def test_evaluation_budgets_comparable(self):
        result = run_convergence(
            "dense_tree", methods=("kernel", "sampling"), budgets=(64,), replicates=3
        )
        used = {r.method: r.evaluations_used for r in result.rows}
        assert used["kernel"] == 66
        assert abs(used["sampling"] - 66) <= 10

    def test_unknown_scenario_rejected(self):
        with pytest.raises(ConfigError):
            run_convergence("forest")

    def test_unknown_method_rejected(self):
        with pytest.raises(ConfigError):
            run_convergence("dense_tree", methods=("exact",), replicates=2)


class TestRunMasking:
    def setup_method(self):
        self.model, self.instances, self.background = masking_mlp_fixture(0, n_instances=12)

    def test_fraction_zero_has_zero_delta(self):
        result = run_masking(
            self.model, self.instances, self.background, fractions=(0.0,), seed=1
        )
        assert all(r.delta_log_odds == 0.0 for r in result.rows)
        assert all(r.output_after == r.output_before for r in result.rows)

    def test_fraction_one_masks_everything(self):
        result = run_masking(
            self.model, self.instances, self.background, fractions=(1.0,), seed=1
        )
        at_means = predict(self.model, self.background.means)
        assert all(r.output_after == at_means for r in result.rows)

    def test_includes_random_control_with_same_fractions(self):
        result = run_masking(
            self.model, self.instances, self.background, fractions=(0.0, 0.2), seed=1
        )
        methods = {r.method for r in result.rows}
        assert methods == {"kernel", "random"}
        assert len(result.deltas("random", 0.2)) == len(self.instances)

    def test_deterministic(self):
        a = run_masking(self.model, self.instances, self.background, seed=9)
        b = run_masking(self.model, self.instances, self.background, seed=9)
        assert a.rows == b.rows

    def test_masked_count_follows_fraction(self):
        # fraction 0.2 of 8 features masks round(1.6) = 2 features
        result = run_masking(
            self.model, self.instances[:1], self.background, fractions=(0.2,), seed=1
        )
        row = result.deltas("kernel", 0.2)
        assert row.shape == (1,)

    def test_two_logit_head_normalized(self, rng):
        logits = MlpModel(
            layers=(
                MlpLayer(weights=rng.normal(size=(2, 3)), bias=np.zeros(2), activation="identity"),
            ),
            output_index=1,
        )
        from tabshap.bench import as_probability_model

        prob = as_probability_model(logits)
        x = rng.normal(size=3)
        z = logits.layers[0].weights @ x
        want = float(np.exp(z[1]) / np.exp(z).sum())
        assert predict(prob, x) == pytest.approx(want, abs=1e-12)

    def test_non_probability_output_rejected(self, rng):
        bad = MlpModel(
            layers=(
                MlpLayer(weights=10 * np.ones((1, 2)), bias=np.zeros(1), activation="identity"),
            )
        )
        with pytest.raises(ConfigError, match="probability"):
            run_masking(bad, np.ones((2, 2)), BackgroundData(np.zeros((2, 2))))

    def test_bad_fraction_rejected(self):
        with pytest.raises(ConfigError):
            run_masking(
                self.model, self.instances, self.background, fractions=(1.5,)
            )


class TestWriters:
    def test_convergence_write_and_manifest(self, tmp_path):
        result = run_convergence(
            "dense_tree", methods=("kernel",), budgets=(24,), replicates=3, seed=2
        )
        paths = write_convergence(result, tmp_path)
        names = {p.name for p in paths}
        assert names == {
            "convergence_raw.csv",
            "convergence_summary.csv",
            "convergence_exact.csv",
            "manifest.json",
        }
        raw = (tmp_path / "convergence_raw.csv").read_text().splitlines()
        assert raw[0].startswith("method,budget,replicate,seed,evaluations_used,phi_0")
        assert len(raw) == 1 + 3
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["scenario"] == "dense_tree"
        assert set(manifest["fixtures"]) == {"model", "instance", "background"}

    def test_rerun_is_byte_identical(self, tmp_path):
        kwargs = dict(methods=("sampling",), budgets=(24,), replicates=3, seed=4)
        write_convergence(run_convergence("dense_tree", **kwargs), tmp_path / "a")
        write_convergence(run_convergence("dense_tree", **kwargs), tmp_path / "b")
        for name in ("convergence_raw.csv", "convergence_summary.csv", "manifest.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_masking_write(self, tmp_path):
        model, instances, background = masking_mlp_fixture(0, n_instances=6)
        result = run_masking(model, instances, background, fractions=(0.0, 1.0), seed=3)
        write_masking(result, tmp_path)
        lines = (tmp_path / "masking.csv").read_text().splitlines()
        assert lines[0] == (
            "instance_id,method,fraction,output_before,output_after,delta_log_odds"
        )
        assert len(lines) == 1 + 6 * 2 * 2

    def test_csv_floats_round_trip(self, tmp_path):
        model, instances, background = masking_mlp_fixture(0, n_instances=4)
        result = run_masking(model, instances, background, fractions=(0.2,), seed=3)
        write_masking(result, tmp_path)
        lines = (tmp_path / "masking.csv").read_text().splitlines()[1:]
        for line, row in zip(lines, result.rows):
            cells = line.split(",")
            assert float(cells[3]) == row.output_before
            assert float(cells[5]) == row.delta_log_odds
