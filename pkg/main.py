"""Command-line entrypoint.

    python main.py gen-data --config configs/desk.cfg
    python main.py train --config configs/desk.cfg --set solver=hyper
"""
from engine.main import main


if __name__ == "__main__":
    raise SystemExit(main())
