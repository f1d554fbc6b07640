"""Smoke test for the pypolefeed extension.

Build and install first:  pip install --no-build-isolation ./crates/python
"""

import json
import math
from pathlib import Path

import pypolefeed as pf

DATA = Path(__file__).resolve().parent.parent / "crates" / "core" / "data"


def main():
    assert pf.feedback_degree(2, 2, 0) == 2
    assert pf.feedback_degree(2, 2, 1) == 8
    assert pf.feedback_degree(3, 3, 0) == 42

    r = sorted(pf.roots([2, -3, 1]), key=lambda z: z.real)
    assert abs(r[0] - 1) < 1e-12 and abs(r[1] - 2) < 1e-12

    # (s - 1)(s - 2) and (s - 1)(s + 3) share s - 1.
    d, k, l = pf.gcd_roots([2, -3, 1], [-3, 2, 1])
    assert len(d) == 2 and abs(d[0] + 1) < 1e-9

    plant = pf.Plant.load(str(DATA / "aircraft.json"))
    print(plant, plant.classify(0))
    poles = [complex(*z) for z in json.loads((DATA / "aircraft.config.json").read_text())["poles"]]
    report = pf.synthesize(plant, poles, q=0, seed=1)
    print(report.summary(), end="")
    assert len(report) == 2
    for comp, err in zip(report.compensators(), report.max_pole_errors()):
        check = pf.verify_compensator(plant, comp, poles)
        assert math.isclose(check["max_pole_error"], err, rel_tol=0, abs_tol=1e-12)
        assert err < 1e-6
        again = pf.Compensator.from_json(comp.to_json())
        assert again.K == comp.K

    comp = pf.realize_text("1 1\n0 0 : 1 0\n", "1 1\n0 0 : 2 0 1 0\n")
    assert comp.q == 1
    assert abs(comp.transfer(1j)[0][0] - 1 / (2 + 1j)) < 1e-12

    rank, factors = pf.smith("2 2\n0 0 : 1 0 1 0\n1 1 : -1 0 1 0\n")
    assert rank == 2 and len(factors[1]) == 3
    print("pypolefeed smoke test passed")


if __name__ == "__main__":
    main()
