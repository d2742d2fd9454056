import sqlite3

import pytest

from sqlarbiter.results import canonicalize
from sqlarbiter.sqlexec import (
    DatabaseRef,
    MddError,
    SchemaSlice,
    SliceError,
    dry_run,
    execute_sql,
    introspect_schema,
    materialize_mdd,
    synthesize_ddl,
)


@pytest.fixture
def bench_db(tmp_path):
    """Miniature retail database with PKs and FKs."""
    path = tmp_path / "bench.sqlite"
    conn = sqlite3.connect(path)
    conn.executescript(
        """
        CREATE TABLE products (
            ProductID INTEGER PRIMARY KEY,
            Description TEXT
        );
        CREATE TABLE transactions_1k (
            TransactionID INTEGER PRIMARY KEY,
            CustomerID INTEGER,
            Date TEXT,
            ProductID INTEGER,
            FOREIGN KEY (ProductID) REFERENCES products(ProductID)
        );
        CREATE TABLE yearmonth (
            CustomerID INTEGER,
            Date TEXT,
            Consumption REAL,
            PRIMARY KEY (CustomerID, Date)
        );
        INSERT INTO products VALUES (2, 'LPG'), (5, 'Nafta');
        INSERT INTO transactions_1k VALUES
            (1, 100, '20130915', 2),
            (2, 200, '20130920', 5);
        INSERT INTO yearmonth VALUES (200, '201309', 52.3);
        """
    )
    conn.commit()
    conn.close()
    return DatabaseRef(location=str(path))


class TestIntrospect:
    def test_tables_and_keys(self, bench_db):
        meta = introspect_schema(bench_db)
        names = [t.name for t in meta.tables]
        assert names == ["products", "transactions_1k", "yearmonth"]
        tx = meta.table("transactions_1k")
        assert tx.column_names() == ["TransactionID", "CustomerID", "Date", "ProductID"]
        assert [c.name for c in tx.columns if c.is_pk] == ["TransactionID"]
        assert any(
            fk.table == "transactions_1k"
            and fk.column == "ProductID"
            and fk.ref_table == "products"
            and fk.ref_column == "ProductID"
            for fk in meta.foreign_keys
        )

    def test_empty_database(self, tmp_path):
        path = tmp_path / "empty.sqlite"
        sqlite3.connect(path).close()
        meta = introspect_schema(DatabaseRef(location=str(path)))
        assert meta.tables == ()

    def test_single_pk_table(self, tmp_path):
        path = tmp_path / "one.sqlite"
        conn = sqlite3.connect(path)
        conn.execute("CREATE TABLE t (a INTEGER PRIMARY KEY)")
        conn.close()
        meta = introspect_schema(DatabaseRef(location=str(path)))
        assert meta.tables[0].columns[0].is_pk

    def test_unreadable_db(self, tmp_path):
        with pytest.raises(SliceError):
            introspect_schema(DatabaseRef(location=str(tmp_path / "nope.sqlite")))


class TestExecuteSql:
    def test_select_one(self, bench_db):
        out = execute_sql(bench_db, "SELECT 1")
        assert out.ok
        assert [c.value for c in out.result.rows[0]] == [1]
        assert out.result.rows[0][0].kind == "int"

    def test_missing_table_error(self, bench_db):
        out = execute_sql(bench_db, "SELECT * FROM missing_table")
        assert not out.ok
        assert "missing_table" in out.error_message

    def test_benchmark_db_is_readonly(self, bench_db):
        out = execute_sql(bench_db, "DELETE FROM products")
        assert not out.ok
        check = execute_sql(bench_db, "SELECT COUNT(*) FROM products")
        assert check.result.rows[0][0].value == 2

    def test_multi_statement_rejected(self, bench_db):
        out = execute_sql(bench_db, "SELECT 1; SELECT 2")
        assert not out.ok

    def test_timeout(self, bench_db):
        out = execute_sql(
            bench_db,
            "WITH RECURSIVE c(x) AS (SELECT 1 UNION ALL SELECT x+1 FROM c) "
            "SELECT count(*) FROM c",
            timeout_ms=150,
        )
        assert not out.ok
        assert out.error_message == "timeout"

    def test_columns_captured(self, bench_db):
        out = execute_sql(bench_db, "SELECT Description AS d FROM products")
        assert out.result.columns == ["d"]

    def test_outcome_requires_exactly_one_side(self):
        from sqlarbiter.results import ResultSet
        from sqlarbiter.sqlexec import ExecOutcome

        with pytest.raises(ValueError):
            ExecOutcome(status="ok")
        with pytest.raises(ValueError):
            ExecOutcome(status="ok", result=ResultSet(), error_message="both")


class TestSynthesizeDdl:
    def test_restricts_to_sliced_columns(self, bench_db):
        meta = introspect_schema(bench_db)
        ddl = synthesize_ddl(
            SchemaSlice.from_mapping({"transactions_1k": ["TransactionID", "Date"]}),
            meta,
        )
        assert len(ddl) == 1
        assert "TransactionID" in ddl[0] and "Date" in ddl[0]
        assert "CustomerID" not in ddl[0]

    def test_unknown_column_is_reported(self, bench_db):
        meta = introspect_schema(bench_db)
        with pytest.raises(SliceError, match="no_such_col"):
            synthesize_ddl(
                SchemaSlice.from_mapping({"products": ["no_such_col"]}), meta
            )

    def test_unknown_table_is_reported(self, bench_db):
        meta = introspect_schema(bench_db)
        with pytest.raises(SliceError, match="ghost"):
            synthesize_ddl(SchemaSlice.from_mapping({"ghost": ["a"]}), meta)

    def test_fk_retained_when_both_endpoints_included(self, bench_db):
        # verify by re-introspecting an instance built from the DDL
        meta = introspect_schema(bench_db)
        slice_ = SchemaSlice.from_mapping(
            {
                "transactions_1k": ["TransactionID", "ProductID"],
                "products": ["ProductID", "Description"],
            }
        )
        ref = materialize_mdd(slice_, meta, {})
        try:
            mini = introspect_schema(ref)
            assert any(
                fk.table == "transactions_1k" and fk.ref_table == "products"
                for fk in mini.foreign_keys
            )
        finally:
            ref.delete_file()

    def test_fk_dropped_when_endpoint_missing(self, bench_db):
        meta = introspect_schema(bench_db)
        ddl = synthesize_ddl(
            SchemaSlice.from_mapping(
                {"transactions_1k": ["TransactionID", "ProductID"]}
            ),
            meta,
        )
        assert "FOREIGN KEY" not in ddl[0]


class TestDryRun:
    def test_valid_slice_prepares_both(self, bench_db):
        meta = introspect_schema(bench_db)
        slice_ = SchemaSlice.from_mapping(
            {
                "transactions_1k": ["CustomerID", "Date", "ProductID"],
                "products": ["ProductID", "Description"],
            }
        )
        outcomes = dry_run(
            slice_,
            meta,
            [
                "SELECT p.Description FROM transactions_1k t "
                "JOIN products p ON t.ProductID = p.ProductID",
                "SELECT CustomerID FROM transactions_1k",
            ],
        )
        assert all(o.ok for o in outcomes)

    def test_missing_joined_table_fails_preparation(self, bench_db):
        meta = introspect_schema(bench_db)
        slice_ = SchemaSlice.from_mapping({"transactions_1k": ["CustomerID"]})
        outcomes = dry_run(
            slice_,
            meta,
            ["SELECT * FROM transactions_1k JOIN yearmonth USING (CustomerID)"],
        )
        assert not outcomes[0].ok
        assert "yearmonth" in outcomes[0].error_message

    def test_checks_only_what_the_sql_needs(self, bench_db):
        meta = introspect_schema(bench_db)
        # ProductID (the FK column) left out, but the SQL never touches it
        slice_ = SchemaSlice.from_mapping({"transactions_1k": ["CustomerID"]})
        outcomes = dry_run(slice_, meta, ["SELECT CustomerID FROM transactions_1k"])
        assert outcomes[0].ok


class TestMaterializeMdd:
    def test_trap_instance_with_missing_parent_row(self, bench_db):
        meta = introspect_schema(bench_db)
        slice_ = SchemaSlice.from_mapping(
            {
                "transactions_1k": ["CustomerID", "Date", "ProductID"],
                "products": ["ProductID", "Description"],
                "yearmonth": ["CustomerID", "Date"],
            }
        )
        data = {
            "transactions_1k": [
                {"CustomerID": 100, "Date": "20130915", "ProductID": 2}
            ],
            "products": [{"ProductID": 2, "Description": "LPG"}],
            "yearmonth": [
                {"CustomerID": 200, "Date": "201309"},
                {"CustomerID": 300, "Date": "201309"},
            ],
        }
        ref = materialize_mdd(slice_, meta, data)
        try:
            got = execute_sql(ref, "SELECT CustomerID FROM yearmonth ORDER BY 1")
            assert [r[0].value for r in got.result.rows] == [200, 300]
            # customer 100 is intentionally absent from yearmonth
            assert 100 not in [r[0].value for r in got.result.rows]
        finally:
            ref.delete_file()

    def test_data_for_unsliced_table_rejected(self, bench_db):
        meta = introspect_schema(bench_db)
        slice_ = SchemaSlice.from_mapping({"products": ["ProductID"]})
        with pytest.raises(MddError, match="yearmonth"):
            materialize_mdd(slice_, meta, {"yearmonth": [{"CustomerID": 1}]})

    def test_empty_data_builds_empty_instance(self, bench_db):
        meta = introspect_schema(bench_db)
        slice_ = SchemaSlice.from_mapping({"products": ["ProductID", "Description"]})
        ref = materialize_mdd(slice_, meta, {})
        try:
            got = execute_sql(ref, "SELECT * FROM products")
            assert got.result.rows == []
        finally:
            ref.delete_file()

    def test_fk_violation_surfaces_as_feedback(self, bench_db):
        meta = introspect_schema(bench_db)
        slice_ = SchemaSlice.from_mapping(
            {
                "transactions_1k": ["TransactionID", "ProductID"],
                "products": ["ProductID"],
            }
        )
        with pytest.raises(MddError, match="(?i)foreign key"):
            materialize_mdd(
                slice_,
                meta,
                {"transactions_1k": [{"TransactionID": 1, "ProductID": 99}]},
            )

    def test_deterministic_rebuild(self, bench_db):
        meta = introspect_schema(bench_db)
        slice_ = SchemaSlice.from_mapping(
            {"products": ["ProductID", "Description"]}
        )
        data = {"products": [{"ProductID": 1, "Description": "x"}]}
        a = materialize_mdd(slice_, meta, data)
        b = materialize_mdd(slice_, meta, data)
        try:
            assert introspect_schema(a) == introspect_schema(b)
            ra = execute_sql(a, "SELECT * FROM products").result
            rb = execute_sql(b, "SELECT * FROM products").result
            assert canonicalize(ra) == canonicalize(rb)
        finally:
            a.delete_file()
            b.delete_file()

    def test_dry_run_success_implies_no_resolution_error(self, bench_db):
        meta = introspect_schema(bench_db)
        slice_ = SchemaSlice.from_mapping(
            {"transactions_1k": ["CustomerID", "Date"]}
        )
        sqls = ["SELECT CustomerID FROM transactions_1k WHERE Date LIKE '2013%'"]
        assert all(o.ok for o in dry_run(slice_, meta, sqls))
        ref = materialize_mdd(slice_, meta, {})
        try:
            out = execute_sql(ref, sqls[0])
            assert out.ok
        finally:
            ref.delete_file()
