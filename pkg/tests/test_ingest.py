from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from synthpoll.errors import (
    AllMissing,
    EmptyDataset,
    EverythingRemoved,
    InvalidValue,
    MissingColumn,
)
from synthpoll.ingest import (
    CategoricalDistribution,
    MissingCode,
    SurveyDataset,
    VariableSchema,
    impute_invalid,
    load_survey,
    remove_outliers,
    standardize,
    write_survey,
)

from oracles import oracle_l1

AGE_BANDS = (
    "10 – 19",
    "20 – 29",
    "30 – 39",
    "40 – 49",
    "50 – 59",
    "60 – 69",
    "70 or older",
)


def write_csv(path: Path, header: str, rows: list[str]) -> Path:
    path.write_text("\n".join([header] + rows) + "\n", encoding="utf-8")
    return path


def two_var_schema():
    return [
        VariableSchema(name="age", categories=("young", "mid", "old")),
        VariableSchema(name="qualification", categories=("none", "degree")),
    ]


def single_var_dataset(values):
    schema = [VariableSchema(name="v", categories=("cat1", "cat2", "cat3"))]
    return SurveyDataset(schema=schema, records=[{"v": value} for value in values])


class TestVariableSchema:
    def test_rejects_duplicate_categories(self):
        with pytest.raises(ValueError):
            VariableSchema(name="v", categories=("a", "a"))

    def test_rejects_single_category(self):
        with pytest.raises(ValueError):
            VariableSchema(name="v", categories=("only",))

    def test_rejects_empty_label(self):
        with pytest.raises(ValueError):
            VariableSchema(name="v", categories=("a", ""))


class TestLoadSurvey:
    def test_three_valid_rows(self, tmp_path):
        path = write_csv(
            tmp_path / "s.csv",
            "age,qualification",
            ["young,none", "mid,degree", "old,none"],
        )
        dataset = load_survey(path, two_var_schema())
        assert len(dataset) == 3
        assert dataset.records[0] == {"age": 0, "qualification": 0}
        assert dataset.records[1] == {"age": 1, "qualification": 1}

    def test_minus_one_becomes_dont_know(self, tmp_path):
        path = write_csv(tmp_path / "s.csv", "age,qualification", ["-1,none", "young,degree"])
        dataset = load_survey(path, two_var_schema())
        assert dataset.records[0]["age"] is MissingCode.DONT_KNOW

    def test_minus_five_rejected(self, tmp_path):
        path = write_csv(tmp_path / "s.csv", "age,qualification", ["-5,none"])
        with pytest.raises(InvalidValue):
            load_survey(path, two_var_schema())

    @pytest.mark.parametrize("code,expected", [(-8, MissingCode.INAPPLICABLE),
                                               (-2, MissingCode.REFUSAL),
                                               (-1, MissingCode.DONT_KNOW)])
    def test_all_three_codes_accepted(self, tmp_path, code, expected):
        path = write_csv(tmp_path / "s.csv", "age,qualification", [f"{code},none"])
        dataset = load_survey(path, two_var_schema())
        assert dataset.records[0]["age"] is expected

    @pytest.mark.parametrize("bad", ["-3", "-999", "0", "4", "unknown-label"])
    def test_every_other_value_maps_to_invalid_value(self, tmp_path, bad):
        path = write_csv(tmp_path / "s.csv", "age,qualification", [f"{bad},none"])
        with pytest.raises(InvalidValue):
            load_survey(path, two_var_schema())

    def test_one_based_integer_codes(self, tmp_path):
        path = write_csv(tmp_path / "s.csv", "age,qualification", ["1,2", "3,1"])
        dataset = load_survey(path, two_var_schema())
        assert dataset.records[0] == {"age": 0, "qualification": 1}
        assert dataset.records[1] == {"age": 2, "qualification": 0}

    def test_missing_column(self, tmp_path):
        path = write_csv(tmp_path / "s.csv", "age", ["young"])
        with pytest.raises(MissingColumn):
            load_survey(path, two_var_schema())

    def test_empty_dataset(self, tmp_path):
        path = write_csv(tmp_path / "s.csv", "age,qualification", [])
        with pytest.raises(EmptyDataset):
            load_survey(path, two_var_schema())

    def test_round_trip_reproduces_dataset(self, tmp_path):
        path = write_csv(
            tmp_path / "s.csv",
            "age,qualification",
            ["young,none", "-1,degree", "-8,-2", "old,none"],
        )
        schema = two_var_schema()
        dataset = load_survey(path, schema)
        out = tmp_path / "rewritten.csv"
        write_survey(dataset, out)
        again = load_survey(out, schema)
        assert again.records == dataset.records


class TestImputeInvalid:
    def test_missing_slot_replaced_from_valid_distribution(self):
        dataset = single_var_dataset([0, 0, 1, MissingCode.DONT_KNOW])
        imputed = impute_invalid(dataset, "v", seed=7)
        assert imputed.records[3]["v"] in (0, 1)
        assert [r["v"] for r in imputed.records[:3]] == [0, 0, 1]

    def test_monte_carlo_marginal_converges(self):
        # 10,000 seeded imputations of the one missing slot: the imputed
        # marginal must land within L1 0.05 of the valid-value distribution.
        dataset = single_var_dataset([0, 0, 1, MissingCode.DONT_KNOW])
        counts = {0: 0, 1: 0, 2: 0}
        n = 10_000
        for seed in range(n):
            counts[impute_invalid(dataset, "v", seed=seed).records[3]["v"]] += 1
        observed = {k: v / n for k, v in counts.items()}
        target = {0: 2 / 3, 1: 1 / 3, 2: 0.0}
        assert oracle_l1(observed, target) <= 0.05

    def test_no_missing_is_identity_for_any_seed(self):
        dataset = single_var_dataset([0, 1, 2])
        for seed in (0, 1, 99):
            assert impute_invalid(dataset, "v", seed=seed).records == dataset.records

    def test_all_missing_raises(self):
        dataset = single_var_dataset(
            [MissingCode.INAPPLICABLE, MissingCode.REFUSAL, MissingCode.DONT_KNOW]
        )
        with pytest.raises(AllMissing):
            impute_invalid(dataset, "v", seed=0)

    def test_same_seed_same_result(self):
        dataset = single_var_dataset([0, 1, MissingCode.REFUSAL, MissingCode.DONT_KNOW])
        first = impute_invalid(dataset, "v", seed=123)
        second = impute_invalid(dataset, "v", seed=123)
        assert first.records == second.records

    @given(
        values=st.lists(
            st.one_of(st.integers(min_value=0, max_value=2), st.sampled_from(list(MissingCode))),
            min_size=1,
            max_size=30,
        ),
        seed=st.integers(min_value=0, max_value=2**32 - 1),
    )
    @settings(max_examples=100, deadline=None)
    def test_valid_values_never_altered(self, values, seed):
        dataset = single_var_dataset(values)
        valid_before = [v for v in values if not isinstance(v, MissingCode)]
        if not valid_before:
            with pytest.raises(AllMissing):
                impute_invalid(dataset, "v", seed=seed)
            return
        imputed = impute_invalid(dataset, "v", seed=seed)
        for before, after in zip(dataset.records, imputed.records):
            if not isinstance(before["v"], MissingCode):
                assert after["v"] == before["v"]
        assert not any(isinstance(r["v"], MissingCode) for r in imputed.records)


class TestRemoveOutliers:
    def test_fringe_category_dropped(self):
        # shares (0.60, 0.38, 0.02): the 2% category goes
        values = [0] * 60 + [1] * 38 + [2] * 2
        result = remove_outliers(single_var_dataset(values), "v", min_share=0.05)
        assert result.dropped_records == 2
        assert result.dropped_categories == ("cat3",)
        assert len(result.dataset) == 98

    def test_zero_threshold_is_identity(self):
        dataset = single_var_dataset([0, 1, 2, 0])
        result = remove_outliers(dataset, "v", min_share=0.0)
        assert result.dataset.records == dataset.records
        assert result.dropped_records == 0

    def test_everything_removed(self):
        dataset = single_var_dataset([0, 0, 1, 1])
        with pytest.raises(EverythingRemoved):
            remove_outliers(dataset, "v", min_share=0.6)

    def test_requires_imputed_variable(self):
        dataset = single_var_dataset([0, MissingCode.DONT_KNOW])
        with pytest.raises(ValueError):
            remove_outliers(dataset, "v", min_share=0.01)

    def test_support_excludes_exactly_dropped_categories(self):
        values = [0] * 50 + [1] * 48 + [2] * 2
        result = remove_outliers(single_var_dataset(values), "v", min_share=0.05)
        dist = standardize(result.dataset, "v")
        assert dist.mass["cat3"] == 0.0
        assert dist.mass["cat1"] > 0 and dist.mass["cat2"] > 0


class TestStandardize:
    def test_hand_counted_distribution(self):
        dist = standardize(single_var_dataset([0, 0, 1]), "v")
        assert dist.mass == {"cat1": 2 / 3, "cat2": 1 / 3, "cat3": 0.0}
        assert dist.support_count == 3

    def test_single_category(self):
        dist = standardize(single_var_dataset([0, 0]), "v")
        assert dist.mass["cat1"] == 1.0

    def test_seven_age_bands(self, tmp_path):
        rows = [band for band in AGE_BANDS for _ in range(3)]
        path = write_csv(tmp_path / "s.csv", "age", rows)
        schema = [VariableSchema(name="age", categories=AGE_BANDS)]
        dist = standardize(load_survey(path, schema), "age")
        assert len(dist.mass) == 7
        assert set(dist.mass) == set(AGE_BANDS)
        assert abs(sum(dist.mass.values()) - 1.0) < 1e-9

    def test_mass_sums_to_one(self):
        dist = standardize(single_var_dataset([0, 1, 1, 2, 2, 2]), "v")
        assert abs(sum(dist.mass.values()) - 1.0) < 1e-9


class TestCategoricalDistribution:
    def test_rejects_negative_mass(self):
        with pytest.raises(ValueError):
            CategoricalDistribution(variable="v", mass={"a": -0.1, "b": 1.1}, support_count=1)

    def test_rejects_unnormalized_mass(self):
        with pytest.raises(ValueError):
            CategoricalDistribution(variable="v", mass={"a": 0.5, "b": 0.6}, support_count=1)
