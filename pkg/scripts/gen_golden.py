"""Regenerate the frozen golden event log for the scripted session.

Run from the repo root after any intentional change to the engine's
event payloads, then review the diff:

    python3 scripts/gen_golden.py
"""
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parents[1] / "tests"))

from conftest import make_engine, make_scripted_store, run_scripted_session

GOLDEN = Path(__file__).parents[1] / "tests" / "data" / "golden_session.jsonl"


def main() -> None:
    engine = make_engine(store=make_scripted_store())
    run_scripted_session(engine)
    GOLDEN.write_bytes(engine.event_log("golden-session").dump_bytes())
    print(f"wrote {GOLDEN} ({GOLDEN.stat().st_size} bytes)")


if __name__ == "__main__":
    main()
