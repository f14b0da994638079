"""Feasibility map of the margin check against phase I. Extra arguments (--seed, --out, -v) pass through."""

from _run import run

if __name__ == "__main__":
    run("feasmap", "feasmap.yaml")
