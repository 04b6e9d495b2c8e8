import pytest

from legalrag.corpus import Label
from legalrag.errors import DataError
from legalrag.metrics import (
    ConfusionMatrix,
    ScoredRow,
    accuracy,
    confusion,
    emit_report,
    macro_f1,
)

T, F = Label.TRUE, Label.FALSE

#: The published validation-split confusion matrix of the 4-member ensemble.
PUBLISHED_CM = ConfusionMatrix(tn=57, fp=9, fn=3, tp=15)


def labels(spec: str) -> dict[str, Label]:
    return {f"i{k}": (T if ch == "T" else F) for k, ch in enumerate(spec)}


class TestConfusion:
    def test_perfect_predictions(self):
        gold = labels("FFFFFFTTTT")
        cm = confusion(dict(gold), gold)
        assert (cm.tn, cm.fp, cm.fn, cm.tp) == (6, 0, 0, 4)
        assert cm.fp_ids == () and cm.fn_ids == ()

    def test_all_false_predictions(self):
        gold = labels("F" * 66 + "T" * 18)
        preds = {iid: F for iid in gold}
        cm = confusion(preds, gold)
        assert (cm.tn, cm.fp, cm.fn, cm.tp) == (66, 0, 18, 0)
        assert len(cm.fn_ids) == 18

    def test_id_mismatch_reports_difference(self):
        with pytest.raises(DataError, match="extra"):
            confusion({"a": T, "extra": F}, {"a": T})

    def test_id_lists_match_counts(self):
        gold = labels("TFTF")
        preds = labels("FTTF")
        cm = confusion(preds, gold)
        assert len(cm.fp_ids) == cm.fp == 1
        assert len(cm.fn_ids) == cm.fn == 1


class TestAccuracy:
    def test_published_ensemble_value(self):
        assert accuracy(PUBLISHED_CM) == pytest.approx(72 / 84)
        assert accuracy(PUBLISHED_CM) == pytest.approx(0.8571, abs=5e-4)

    def test_perfect_matrix(self):
        assert accuracy(ConfusionMatrix(tn=5, fp=0, fn=0, tp=5)) == 1.0

    def test_everything_wrong(self):
        assert accuracy(ConfusionMatrix(tn=0, fp=10, fn=0, tp=0)) == 0.0

    def test_empty_matrix(self):
        with pytest.raises(DataError):
            accuracy(ConfusionMatrix(0, 0, 0, 0))


class TestMacroF1:
    def test_published_ensemble_value(self):
        assert macro_f1(PUBLISHED_CM) == pytest.approx(0.8095, abs=5e-4)

    def test_perfect_matrix(self):
        assert macro_f1(ConfusionMatrix(tn=5, fp=0, fn=0, tp=5)) == 1.0

    def test_all_false_on_balanced_gold(self):
        # F1(FALSE) = 2/3, F1(TRUE) = 0 by the zero-division-is-zero rule.
        cm = ConfusionMatrix(tn=10, fp=0, fn=10, tp=0)
        assert macro_f1(cm) == pytest.approx(1 / 3)

    def test_class_swap_symmetry(self):
        cm = ConfusionMatrix(tn=57, fp=9, fn=3, tp=15)
        swapped = ConfusionMatrix(tn=cm.tp, fp=cm.fn, fn=cm.fp, tp=cm.tn)
        assert macro_f1(swapped) == pytest.approx(macro_f1(cm))

    @pytest.mark.parametrize(
        "cm",
        [
            ConfusionMatrix(1, 2, 3, 4),
            ConfusionMatrix(0, 0, 0, 1),
            ConfusionMatrix(1, 0, 0, 0),
            ConfusionMatrix(0, 5, 5, 0),
        ],
    )
    def test_bounded_in_unit_interval(self, cm):
        assert 0.0 <= macro_f1(cm) <= 1.0
        assert 0.0 <= accuracy(cm) <= 1.0


class TestEmitReport:
    def test_single_row(self, tmp_path):
        rows = [ScoredRow("zero_shot", ConfusionMatrix(5, 1, 1, 3))]
        scores_path, report_path = emit_report(rows, tmp_path)
        assert len(scores_path.read_text().strip().splitlines()) == 1
        assert "zero_shot" in report_path.read_text()

    def test_seven_rows_in_fixed_order(self, tmp_path):
        names = [
            "zero_shot",
            "zero_shot_cot",
            "few_shot",
            "few_shot_cot",
            "few_shot_rag",
            "few_shot_cot_rag",
            "ensemble",
        ]
        rows = [ScoredRow(n, ConfusionMatrix(5, 1, 1, 3)) for n in names]
        scores_path, _ = emit_report(rows, tmp_path)
        lines = scores_path.read_text().strip().splitlines()
        assert len(lines) == 7
        import json

        assert [json.loads(l)["name"] for l in lines] == names

    def test_rerun_is_byte_identical(self, tmp_path):
        rows = [
            ScoredRow(
                "ensemble",
                ConfusionMatrix(5, 1, 1, 3, fp_ids=("i1",), fn_ids=("i2",)),
            )
        ]
        first = [p.read_bytes() for p in emit_report(rows, tmp_path)]
        second = [p.read_bytes() for p in emit_report(rows, tmp_path)]
        assert first == second

    def test_empty_rows_rejected(self, tmp_path):
        with pytest.raises(DataError):
            emit_report([], tmp_path)
