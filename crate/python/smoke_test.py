"""Smoke test for the `dynpanel` extension module.

Uses an installed `dynpanel` if there is one, otherwise the library from
`cargo build -p dynpanel-python --features extension-module --release`.
"""

import importlib
import math
import os
import shutil
import sys
import tempfile

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
PREMIUMS = os.path.join(ROOT, "crates", "core", "tests", "fixtures", "premiums.csv")


def load():
    try:
        return importlib.import_module("dynpanel")
    except ImportError:
        pass
    for profile in ("release", "debug"):
        lib = os.path.join(ROOT, "target", profile, "libdynpanel.so")
        if os.path.exists(lib):
            d = tempfile.mkdtemp()
            shutil.copy(lib, os.path.join(d, "dynpanel.so"))
            sys.path.insert(0, d)
            return importlib.import_module("dynpanel")
    sys.exit("dynpanel not built; run: cargo build -p dynpanel-python --features extension-module --release")


def main():
    dp = load()

    assert dp.grade_to_numeric("AAA") == 97.5
    assert dp.numeric_to_grade(25.0) == "D"
    assert len(dp.rating_scale()) == 28
    try:
        dp.grade_to_numeric("ZZ")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown grade accepted")

    p = dp.chi_square_sf(29.2175, 29)
    assert 0.40 < p < 0.50, p
    assert abs(dp.chi_square_sf(2 * math.log(2), 2) - 0.5) < 1e-14

    panel = dp.Panel.read_wide(PREMIUMS, "pp")
    assert len(panel.entities) == 81
    assert panel.periods[0] == 2005
    assert abs(panel.column_sums("pp")[0] - 7816.49) < 0.05
    assert panel.describe("pp")["n"] > 250

    mc = dp.simulate(reps=5, seed=3, entities=60, periods=7, estimators=["fe", "od"])
    assert [e["label"] for e in mc["estimators"]] == ["fe", "od"]
    assert mc == dp.simulate(reps=5, seed=3, entities=60, periods=7, estimators=["fe", "od"])

    ent = ["e%d" % i for i in range(50)]
    ys, xs = [], []
    for i in range(50):
        x = [math.sin(i + 3 * t) for t in range(6)]
        y = [float(i % 7)]
        for t in range(1, 6):
            y.append(0.5 * y[-1] + x[t] + (i % 5))
        xs.append(x)
        ys.append(y)
    data = dp.Panel.from_series(ent, 2000, {"y": ys, "x": xs})
    fit = dp.estimate(data, "y", spec="fe", ar=1, x=["x"])
    assert abs(fit["coefficients"]["y(-1)"] - 0.5) < 1e-8, fit["coefficients"]
    assert abs(fit["coefficients"]["x"] - 1.0) < 1e-8
    od = dp.estimate(data, "y", spec="od", ar=1, x=["x"], instruments="dyn(y,2),static(x,0..0)", weighting="two_step")
    for k in ("coefficients", "se", "t", "r2", "j", "j_p"):
        assert k in od, k

    print("dynpanel %s smoke test ok" % dp.__version__)


if __name__ == "__main__":
    main()
