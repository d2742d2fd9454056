import pytest

from sqlarbiter.llm import ScriptedProvider
from sqlarbiter.results import ResultSet
from sqlarbiter.sqlexec import SchemaSlice
from sqlarbiter import tester
from sqlarbiter.tester import (
    MDDInstance,
    render_schema_with_types,
    run_tester,
    sample_value_hints,
)

from .util import BLAND_TEST_DATA, RETAIL_SLICE, TRAP_TEST_DATA, make_tester_reply


@pytest.fixture
def retail_slice():
    return SchemaSlice.from_mapping(RETAIL_SLICE)


def test_trap_data_diverges_first_try(retail_cs, retail_meta, retail_duel, retail_slice, tmp_path):
    provider = ScriptedProvider({"tester": [make_tester_reply(TRAP_TEST_DATA)]})
    mdd, trace = run_tester(
        retail_cs, retail_slice, retail_meta, retail_duel, provider,
        scratch_dir=str(tmp_path),
    )
    assert len(trace.attempts) == 1
    champ_rows = [[c.value for c in r] for r in mdd.champion_result.rows]
    assert champ_rows == [["LPG"]]
    assert mdd.challenger_result.rows == []
    mdd.cleanup()


def test_identical_results_feed_retry(retail_cs, retail_meta, retail_duel, retail_slice, tmp_path):
    provider = ScriptedProvider(
        {"tester": [make_tester_reply(BLAND_TEST_DATA), make_tester_reply(TRAP_TEST_DATA)]}
    )
    mdd, trace = run_tester(
        retail_cs, retail_slice, retail_meta, retail_duel, provider,
        scratch_dir=str(tmp_path),
    )
    assert [a.outcome for a in trace.attempts] == ["identical-results", "ok"]
    retry_prompt = provider.calls[1][1].user_turns[-1]
    assert "INEFFECTIVE" in retry_prompt
    assert "identical" in retry_prompt
    mdd.cleanup()


def test_fk_violation_feeds_error_retry(retail_cs, retail_meta, retail_duel, retail_slice, tmp_path):
    # ProductID 99 has no parent row in products
    bad = {
        "transactions_1k": [{"CustomerID": 1, "Date": "20130915", "ProductID": 99}],
        "products": [{"ProductID": 2, "Description": "LPG"}],
        "yearmonth": [{"CustomerID": 1, "Date": "201309"}],
    }
    fk_slice = SchemaSlice.from_mapping(
        {
            "transactions_1k": ["TransactionID", "CustomerID", "Date", "ProductID"],
            "products": ["ProductID", "Description"],
            "yearmonth": ["CustomerID", "Date"],
        }
    )
    provider = ScriptedProvider(
        {"tester": [make_tester_reply(bad), make_tester_reply(TRAP_TEST_DATA)]}
    )
    mdd, trace = run_tester(
        retail_cs, fk_slice, retail_meta, retail_duel, provider,
        scratch_dir=str(tmp_path),
    )
    assert trace.attempts[0].outcome == "error"
    assert "foreign key" in trace.attempts[0].detail.lower()
    mdd.cleanup()


def test_exhaustion_raises_tester_failed(retail_cs, retail_meta, retail_duel, retail_slice, tmp_path):
    bland = make_tester_reply(BLAND_TEST_DATA)
    provider = ScriptedProvider({"tester": [bland, bland, bland]})
    with pytest.raises(tester.TesterFailed) as exc:
        run_tester(
            retail_cs, retail_slice, retail_meta, retail_duel, provider,
            t_max=3, scratch_dir=str(tmp_path),
        )
    assert len(exc.value.trace.attempts) == 3
    assert all(a.outcome == "identical-results" for a in exc.value.trace.attempts)
    # no temp instances left behind by failed attempts
    assert list(tmp_path.glob("mdd_*")) == []


def test_error_vs_ok_is_not_divergence(retail_db, retail_meta, tmp_path):
    # challenger references a column outside the slice, so it errors on the
    # MDD; that must count as an error attempt, never as success
    from sqlarbiter.clustering import CandidateSet, DuelPair

    cs = CandidateSet(
        question_id="x",
        question="?",
        candidates=["SELECT Description FROM products", "SELECT nope FROM products"],
        db=retail_db,
    )
    slice_ = SchemaSlice.from_mapping({"products": ["ProductID", "Description"]})
    duel = DuelPair(0, 1, 1, 1)
    data = {"products": [{"ProductID": 1, "Description": "x"}]}
    provider = ScriptedProvider({"tester": [make_tester_reply(data)]})
    with pytest.raises(tester.TesterFailed) as exc:
        run_tester(cs, slice_, retail_meta, duel, provider, t_max=1,
                   scratch_dir=str(tmp_path))
    assert exc.value.trace.attempts[0].outcome == "error"
    assert "nope" in exc.value.last_error


def test_mdd_instance_enforces_divergence(retail_db, retail_slice):
    same = ResultSet.from_raw([[1]])
    with pytest.raises(ValueError, match="discriminative"):
        MDDInstance(
            db=retail_db,
            slice=retail_slice,
            data=tester.TestData(tables={}),
            champion_result=same,
            challenger_result=ResultSet.from_raw([[1]]),
        )


class TestRenderSchema:
    def test_types_and_pk_marker(self, retail_meta):
        text = render_schema_with_types(
            SchemaSlice.from_mapping({"products": ["ProductID", "Description"]}),
            retail_meta,
        )
        assert "Table: products" in text
        assert "ProductID INTEGER (primary key)" in text
        assert "Description TEXT" in text

    def test_relationship_line_present(self, retail_meta):
        text = render_schema_with_types(
            SchemaSlice.from_mapping(
                {
                    "transactions_1k": ["ProductID"],
                    "products": ["ProductID"],
                }
            ),
            retail_meta,
        )
        assert "transactions_1k.ProductID references products.ProductID" in text

    def test_no_hints_no_example_lines(self, retail_meta):
        text = render_schema_with_types(
            SchemaSlice.from_mapping({"products": ["Description"]}), retail_meta
        )
        assert "examples:" not in text

    def test_value_hints_rendered(self, retail_db, retail_meta):
        slice_ = SchemaSlice.from_mapping({"products": ["Description"]})
        hints = sample_value_hints(retail_db, slice_)
        assert hints["products"]["Description"] == ["LPG", "Nafta"]
        text = render_schema_with_types(slice_, retail_meta, hints)
        assert "examples: LPG, Nafta" in text
