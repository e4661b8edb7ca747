"""Run the reference pipeline end to end through the command-line entry point.

Equivalent to ``embedrate run pipelines/reference.ini``. Outputs land in
pipelines/out/, including a manifest of per-stage checksums; running twice
gives identical checksums.
"""

from pathlib import Path

from embedrate.cli import main as cli_main

CONFIG = Path(__file__).resolve().parents[1] / "pipelines" / "reference.ini"


def main():
    code = cli_main(["run", str(CONFIG)])
    out = CONFIG.parent / "out"
    print(f"exit code {code}")
    print((out / "reports" / "lift.txt").read_text())
    print((out / "reports" / "words_a0.txt").read_text())


if __name__ == "__main__":
    main()
