"""Online experiment: acquire measurements whenever the program is infeasible. Extra arguments (--seed, --out, -v) pass through."""

from _run import run

if __name__ == "__main__":
    run("experiment", "online.yaml")
