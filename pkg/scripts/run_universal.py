"""Closed-form controller for the bundled single constraint. Extra arguments (--seed, --out, -v) pass through."""

from _run import run

if __name__ == "__main__":
    run("universal", "universal.yaml")
