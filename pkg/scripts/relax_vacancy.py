from __future__ import annotations

from defect_harness.cli import main

if __name__ == "__main__":
    raise SystemExit(main(["relax", "--config", "configs/vacancy_lj_triangular.toml"]))
