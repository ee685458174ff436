"""Builds the extension with cargo, imports it and runs a small session."""

import importlib
import math
import shutil
import subprocess
import sys
import sysconfig
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def build() -> Path:
    subprocess.run(
        ["cargo", "build", "--release", "-p", "flexmarket-python", "--features", "extension-module"],
        cwd=ROOT,
        check=True,
    )
    lib = ROOT / "target" / "release"
    for name in ("libflexmarket_py.so", "libflexmarket_py.dylib", "flexmarket_py.dll"):
        if (lib / name).exists():
            return lib / name
    raise SystemExit("built library not found")


def main() -> None:
    built = build()
    dest = Path(tempfile.mkdtemp())
    suffix = sysconfig.get_config_var("EXT_SUFFIX") or ".so"
    shutil.copy(built, dest / f"flexmarket_py{suffix}")
    sys.path.insert(0, str(dest))
    fm = importlib.import_module("flexmarket_py")

    market = fm.Market.example([2.0, 3.0], 0.5, 2, 1001)
    assert market.validate()["passed"]
    assert abs(market.reserve_price(2, 1) - 0.36) <= 0.005

    tables = fm.Tables.solve(market)
    assert tables.value(2, [1, 1]) == tables.value(2, [1, 0])
    assert tables.continuation_gap(1, [1, 1], 2) == 0.0

    ex = fm.worked_example(market, tables)
    assert abs(ex["threshold_1_1"] - 0.39) <= 0.01, ex

    out = fm.run_period(market, tables, 1, [(0.8, 1)], [1, 1])
    assert out["allocation"]["assignment"] == [1], out
    assert abs(out["payments"][0] - 0.39) <= 0.01

    est = fm.estimate_revenue(market, tables, 20000, seed=3)
    exact = tables.expected_total(market)
    se = est["revenue"]["std_error"]
    assert abs(est["revenue"]["mean"] - exact) <= 4 * se, (est, exact)

    audit = fm.audit(market, tables, 2000, points=5, seed=1)
    assert audit["bic_passed"] and audit["ir_passed"]

    report = fm.verify(instances=10)
    assert report["passed"], report["first_failure"]

    path = dest / "tables.bin"
    tables.save(str(path))
    again = fm.Tables.load(str(path), market)
    assert again.value(1, [1, 1]) == tables.value(1, [1, 1])

    other = fm.Market.example([2.0, 3.0], 0.5, 2, 101)
    try:
        fm.Tables.load(str(path), other)
    except fm.FlexmarketError as e:
        assert "built for config" in str(e), e
    else:
        raise AssertionError("stale cache accepted")

    assert math.isfinite(exact)
    print("smoke test passed: optimum", round(exact, 6), "estimate", round(est["revenue"]["mean"], 6))


if __name__ == "__main__":
    main()
