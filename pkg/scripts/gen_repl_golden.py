"""Regenerate the frozen REPL transcript for the scripted chat session.

    python3 scripts/gen_repl_golden.py
"""
import io
import sys
from contextlib import redirect_stdout
from pathlib import Path

ROOT = Path(__file__).parents[1]
sys.path.insert(0, str(ROOT / "tests"))

from conftest import SCRIPTED_CLIENT_LINES

from stampsy.cli import main

GOLDEN = ROOT / "tests" / "data" / "golden_repl.txt"
QUADS = ROOT / "tests" / "data" / "scripted_quads.jsonl"


def write_config(path: Path) -> None:
    path.write_text(
        "\n".join(
            [
                "[engine]",
                "max_turns = 10",
                "warn_margin = 2",
                'clock = "tick"',
                "seed = 7",
                "",
                "[backends.chat]",
                'kind = "mock"',
                "seed = 7",
                "",
                "[knowledge]",
                f'quads_path = "{QUADS}"',
                "",
            ]
        ),
        "utf-8",
    )


def main_gen() -> None:
    config = ROOT / "tests" / "data" / "mock.toml"
    write_config(config)
    stdin = io.StringIO("".join(line + "\n" for line in SCRIPTED_CLIENT_LINES))
    out = io.StringIO()
    old_stdin = sys.stdin
    sys.stdin = stdin
    try:
        with redirect_stdout(out):
            code = main(["--config", str(config), "chat"])
    finally:
        sys.stdin = old_stdin
    assert code == 0, code
    GOLDEN.write_text(out.getvalue(), "utf-8")
    print(f"wrote {GOLDEN} ({len(out.getvalue())} chars)")


if __name__ == "__main__":
    main_gen()
