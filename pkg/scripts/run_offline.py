"""Offline experiment: nested datasets of 25, 100 and 400 points. Extra arguments (--seed, --out, -v) pass through."""

from _run import run

if __name__ == "__main__":
    run("experiment", "offline.yaml")
