"""Smoke test for the surfem_py extension module.

Build and install first:

    maturin build --release -m crates/python/Cargo.toml -o dist
    pip install dist/surfem_py-*.whl

then run `python python/smoke_test.py`.
"""

import json
import math

import surfem_py as sf


def main():
    sphere = sf.Surface.sphere(1.0)
    assert sphere.name == "sphere"
    assert abs(sphere.signed_distance((2.0, 0.0, 0.0)) - 1.0) < 1e-14
    p = sphere.closest_point((0.0, 0.0, 1.2))
    assert max(abs(a - b) for a, b in zip(p, (0.0, 0.0, 1.0))) < 1e-14

    vertices, triangles = sphere.mesh(1)
    assert (len(vertices), len(triangles)) == (42, 80)

    coarse = sf.solve(sphere, "parametric", 3)
    fine = sf.solve(sphere, "parametric", 4)
    (rate,) = sf.compute_eoc([coarse["err_h1"], fine["err_h1"]], [coarse["h_max"], fine["h_max"]])
    assert 0.9 <= rate <= 1.1, rate
    assert fine["eta"] > fine["err_h1"]

    trace = sf.solve(sphere, "trace", 16)
    assert trace["err_h1"] < 0.3 and trace["max_distance"] < 0.02

    band = sf.solve(sphere, "narrowband", 16, delta_ratio=1.5)
    assert "err_band" in band

    ellipsoid = sf.Surface.ellipsoid(1.3, 1.0, 0.8)
    radial = sf.solve(ellipsoid, "parametric", 2, lift="scaled_radial")
    assert radial["err_h1"] > 0.0

    assert sf.compute_eoc([1.0, 0.25], [1.0, 0.5]) == [2.0]
    assert sf.dorfler_mark([3.0, 2.0, 1.0, 1.0, 1.0], 0.6) == {0, 1}
    assert sf.bisect(sphere, 2, {0}) > 320

    history = sf.adapt(sphere, level=1, max_iters=2)
    assert [h["iter"] for h in history] == [0, 1, 2]
    assert history[-1]["n_dof"] > history[0]["n_dof"]

    geometry = sf.check_geometry(sf.Surface.torus(2.0, 0.5), samples=200, seed=1)
    assert geometry["passed"], geometry

    config = {"method": "parametric", "surface": {"kind": "sphere", "radius": 1.0}, "levels": [1, 2, 3]}
    csv_text, json_text = sf.converge(json.dumps(config))
    report = json.loads(json_text)
    assert report["schema_version"] == 1
    assert len(csv_text.strip().splitlines()) == 4
    assert math.isfinite(report["rows"][2]["rates"]["err_h1"])

    for bad in (lambda: sf.Surface.sphere(-1.0), lambda: sf.solve(sphere, "simplex", 2), lambda: sf.solve(sphere, "narrowband", 8)):
        try:
            bad()
        except ValueError:
            pass
        else:
            raise AssertionError("expected ValueError")

    print("surfem_py smoke test passed")


if __name__ == "__main__":
    main()
