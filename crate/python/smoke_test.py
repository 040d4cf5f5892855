"""Smoke test for the ncg Python bindings.

Build and install first:  pip install --no-build-isolation ./crates/py
Then run:                 python python/smoke_test.py
"""

import cmath
import json
import math

import ncg


def check(condition, message):
    if not condition:
        raise SystemExit(f"FAIL: {message}")
    print(f"ok   {message}")


def main():
    theta = 1.0
    u = ncg.Element.monomial(theta, 1, 0)
    v = ncg.Element.monomial(theta, 0, 1)
    uv = u * v
    vu = v * u
    check(abs(uv.coefficient(1, 1) - cmath.exp(1j * theta) * vu.coefficient(1, 1)) < 1e-15,
          "uv = e^{i theta} vu")
    a = ncg.Element(theta, {(1, 2): 0.5 + 1j, (-1, 0): 2.0})
    check((a * u).adjoint().distance(u.adjoint() * a.adjoint()) <= 1e-15, "adjoint reverses products")
    lhs = (a * u).embed(2, 3, 1)
    rhs = a.embed(2, 3, 1) * u.embed(2, 3, 1)
    check(lhs.distance(rhs) <= 1e-12, "embedding is multiplicative")

    spectrum = ncg.dirac_spectrum(tau_im=1.0, window=4)
    total = sum(mult for _, mult in spectrum)
    check(total == 2 * 9 * 9, "spectrum counts every window point twice")
    check(spectrum[0] == (0.0, 2), "kernel of D has dimension 2")
    check(abs(spectrum[1][0] + 2 * math.pi) < 1e-12, "smallest nonzero eigenvalue is -2 pi")

    check(ncg.sigma_lambda([3.0, 1.0, 2.0], 1.5) == 4.0, "sigma interpolates between breakpoints")
    harmonic = [1.0 / i for i in range(1, 100_003)]
    est = ncg.ncint_estimate(harmonic, 1e5)
    check(abs(est["value"] - 1.0) < 0.02, f"harmonic integral {est['value']:.6f}")
    est = ncg.dirac_integral(tau_im=1.0, lambda_max=1e5)
    check(abs(est["value"] * 2 * math.pi - 1.0) < 0.05, f"torus integral {est['value']:.6f}")

    reports = ncg.verify("circle-identity", fold=3, grid=1024)
    check(all(r["pass"] for r in reports), "circle covering identity")
    reports = ncg.verify("torus-completeness", m=2, n=3, k=1, cutoff=128, tolerance=1e-6)
    check(all(r["pass"] for r in reports), "torus covering completeness")
    try:
        ncg.verify("integral", tau_im=0.0)
        check(False, "invalid tau is rejected")
    except ValueError as e:
        check("tau" in str(e), "invalid tau is rejected")

    config = {"checks": [{"check": "sign-table"}, {"check": "embedding-homomorphism", "count": 100}]}
    report = ncg.run_campaign(json.dumps(config), workers=2)
    check(report["schema"] == ncg.SCHEMA and report["pass"], "campaign report")
    print("all smoke checks passed")


if __name__ == "__main__":
    main()
