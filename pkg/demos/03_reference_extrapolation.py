"""Extrapolating a reference eigenvalue from a sequence of discrete ones.

Fits lambda_h = lambda + c N^-r on the finest levels of a uniform sequence
on the unit square and compares the fitted limit with the stored value.
"""
from stokes_afem.adaptivity import RunConfig, reference_eigenvalue, richardson_extrapolate, run_campaign

if __name__ == "__main__":
    t = run_campaign(RunConfig(domain="square", refinement="uniform", max_iterations=5))
    N, lam = t.column("N"), t.column("lambda_h1")
    for n, l in zip(N, lam):
        print(f"N = {int(n):7d}  lambda_h1 = {l:.8f}")
    limit, c, r, rms = richardson_extrapolate(N[-4:], lam[-4:])
    print(f"\nfit on 4 finest: lambda = {limit:.6f}, c = {c:.3f}, r = {r:.3f}, rms = {rms:.1e}")
    print(f"stored reference (7 levels): {reference_eigenvalue('square'):.6f}")
