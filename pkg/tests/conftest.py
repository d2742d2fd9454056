import pytest

from sqlarbiter.clustering import CandidateSet, DuelPair
from sqlarbiter.sqlexec import SchemaSlice, execute_sql, introspect_schema, materialize_mdd
from sqlarbiter.tester import MDDInstance, TestData

from .util import (
    CHALLENGER_SQL,
    CHAMPION_SQL,
    RETAIL_SLICE,
    TRAP_TEST_DATA,
    build_retail_db,
)


@pytest.fixture
def retail_db(tmp_path):
    return build_retail_db(tmp_path / "retail.sqlite")


@pytest.fixture
def retail_meta(retail_db):
    return introspect_schema(retail_db)


@pytest.fixture
def retail_cs(retail_db):
    """Five candidates: three champion-equivalent, two challenger-equivalent."""
    return CandidateSet(
        question_id="q-1500",
        question=(
            "Please list the product description of the products consumed "
            "in September, 2013."
        ),
        evidence="consumed in September 2013 refers to Date LIKE '201309%'",
        candidates=[
            CHAMPION_SQL,
            CHAMPION_SQL.replace("p.Description", "p.`Description`"),
            CHALLENGER_SQL,
            CHAMPION_SQL + " ",
            CHALLENGER_SQL.replace("ym.CustomerID", "ym.`CustomerID`"),
        ],
        db=retail_db,
    )


@pytest.fixture
def retail_duel():
    return DuelPair(
        champion_index=0,
        challenger_index=2,
        champion_cluster_size=3,
        challenger_cluster_size=2,
    )


@pytest.fixture
def retail_mdd(retail_meta, tmp_path):
    """The trap micro-database: champion yields ['LPG'], challenger nothing."""
    slice_ = SchemaSlice.from_mapping(RETAIL_SLICE)
    db = materialize_mdd(slice_, retail_meta, TRAP_TEST_DATA, scratch_dir=str(tmp_path))
    mdd = MDDInstance(
        db=db,
        slice=slice_,
        data=TestData(tables=TRAP_TEST_DATA),
        champion_result=execute_sql(db, CHAMPION_SQL).result,
        challenger_result=execute_sql(db, CHALLENGER_SQL).result,
    )
    yield mdd
    mdd.cleanup()
