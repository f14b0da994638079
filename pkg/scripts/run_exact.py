"""Simulate the exact-model closed loop from (2, 6). Extra arguments (--seed, --out, -v) pass through."""

from _run import run

if __name__ == "__main__":
    run("simulate", "exact.yaml")
