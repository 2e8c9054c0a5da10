#!/usr/bin/env python3
"""
Inspect a latentalign result store: tables, columns, row counts and the
per-variant run breakdown.
Usage:
    python review_results.py [path/to/results.db]
"""

import sys
from pathlib import Path

from sqlalchemy import create_engine, inspect, text

from latentalign.config import settings


def inspect_results(path: Path):
    if not path.exists():
        print(f"❌ Result store not found: {path}")
        return 1

    print(f"🔌 Opening result store ({path})...")
    engine = create_engine(f"sqlite:///{path}")
    try:
        inspector = inspect(engine)
        table_names = inspector.get_table_names()
        if not table_names:
            print("⚠️  No tables found in the result store.")
            return 1

        print(f"\n📊 Found {len(table_names)} Tables:")
        print("=" * 60)

        with engine.connect() as conn:
            for table in table_names:
                row_count = conn.execute(text(f'SELECT COUNT(*) FROM "{table}"')).scalar()
                print(f"\n📁 TABLE: {table} (Rows: {row_count})")
                print("-" * 60)
                print(f"{'Column Name':<30} {'Type':<20} {'PK':<5} {'Nullable'}")
                print("-" * 60)
                for col in inspector.get_columns(table):
                    pk = "✅" if col.get("primary_key") else ""
                    nullable = "✅" if col.get("nullable") else "❌"
                    print(f"{col['name']:<30} {str(col['type']):<20} {pk:<5} {nullable}")

            if "generation_runs" in table_names:
                print("\n🧪 Runs by task and variant:")
                print("-" * 60)
                breakdown = conn.execute(
                    text(
                        "SELECT task, variant, COUNT(*), AVG(runtime_ms) FROM generation_runs "
                        "GROUP BY task, variant ORDER BY task, variant"
                    )
                )
                for task, variant, count, runtime in breakdown:
                    print(f"{task:<8} {variant:<10} {count:>6} runs   mean {runtime:.1f} ms")
    finally:
        engine.dispose()
    return 0


if __name__ == "__main__":
    default = Path("./results") / settings.results_db_name
    target = Path(sys.argv[1]) if len(sys.argv) > 1 else default
    sys.exit(inspect_results(target))
